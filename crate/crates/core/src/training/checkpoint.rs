//! Binary checkpoint: magic, little-endian `u64` header length, JSON header,
//! then little-endian `f64` data for the parameters, Adam first moments and
//! Adam second moments, each in header order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{parse_err, Error, Result};
use crate::numerics::{AdamState, Tensor};
use crate::scalar::Scalar;

use super::{EpochRecord, PretrainConfig, PretrainModel};

const MAGIC: &[u8; 8] = b"UNATECK1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    config: PretrainConfig,
    epoch: usize,
    history: Vec<EpochRecord>,
    adam_step: u64,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: PretrainConfig,
    /// Completed epochs.
    pub epoch: usize,
    pub history: Vec<EpochRecord>,
    pub names: Vec<String>,
    pub params: Vec<Tensor<f64>>,
    pub adam_step: u64,
    pub adam_m: Vec<Tensor<f64>>,
    pub adam_v: Vec<Tensor<f64>>,
}

impl Checkpoint {
    pub fn capture<T: Scalar>(
        config: &PretrainConfig,
        epoch: usize,
        history: &[EpochRecord],
        model: &PretrainModel<T>,
        adam: &AdamState<T>,
    ) -> Self {
        let cast = |ts: &[Tensor<T>]| ts.iter().map(|t| t.cast::<f64>()).collect();
        Self {
            config: config.clone(),
            epoch,
            history: history.to_vec(),
            names: model.params.names().to_vec(),
            params: cast(model.params.tensors()),
            adam_step: adam.step,
            adam_m: cast(&adam.m),
            adam_v: cast(&adam.v),
        }
    }

    /// Model with the stored parameters, laid out by the stored config.
    pub fn model<T: Scalar>(&self) -> Result<PretrainModel<T>> {
        let mut model = PretrainModel::new(&self.config)?;
        model
            .params
            .load(&self.names, self.params.iter().map(|t| t.cast()).collect())?;
        Ok(model)
    }

    pub fn adam<T: Scalar>(&self) -> AdamState<T> {
        AdamState {
            config: self.config.adam(),
            step: self.adam_step,
            m: self.adam_m.iter().map(|t| t.cast()).collect(),
            v: self.adam_v.iter().map(|t| t.cast()).collect(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            config: self.config.clone(),
            epoch: self.epoch,
            history: self.history.clone(),
            adam_step: self.adam_step,
            tensors: self
                .names
                .iter()
                .zip(&self.params)
                .map(|(n, t)| TensorEntry {
                    name: n.clone(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + json.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in self.params.iter().chain(&self.adam_m).chain(&self.adam_v) {
            for x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(parse_err!("not a checkpoint file"));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = bytes
            .get(16..16 + len)
            .ok_or_else(|| parse_err!("checkpoint header truncated"))?;
        let header: Header =
            serde_json::from_slice(body).map_err(|e| parse_err!("checkpoint header: {e}"))?;
        let mut data = bytes[16 + len..].chunks_exact(8);
        let expected: usize = header
            .tensors
            .iter()
            .map(|t| t.shape.iter().product::<usize>())
            .sum();
        if data.len() != 3 * expected || !data.remainder().is_empty() {
            return Err(parse_err!(
                "checkpoint holds {} bytes of data, header describes {}",
                bytes.len() - 16 - len,
                24 * expected
            ));
        }
        let mut read_all = || -> Result<Vec<Tensor<f64>>> {
            header
                .tensors
                .iter()
                .map(|t| {
                    let n = t.shape.iter().product();
                    let values = data
                        .by_ref()
                        .take(n)
                        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                        .collect();
                    Tensor::new(t.shape.clone(), values)
                })
                .collect()
        };
        let params = read_all()?;
        let adam_m = read_all()?;
        let adam_v = read_all()?;
        Ok(Self {
            config: header.config,
            epoch: header.epoch,
            history: header.history,
            names: header.tensors.into_iter().map(|t| t.name).collect(),
            params,
            adam_step: header.adam_step,
            adam_m,
            adam_v,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| e.context(path.display()))
    }
}
