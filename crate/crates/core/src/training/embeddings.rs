//! Per-element embedding table: the transfer artifact of pretraining.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::elements::{symbol, NUM_ELEMENTS};
use crate::encoder::GraphBatch;
use crate::error::{parse_err, validation, Error, Result};
use crate::format::fmt_g17;
use crate::graph::PeriodicGraph;
use crate::numerics::{Tape, Tensor};
use crate::scalar::Scalar;

use super::PretrainModel;

/// Tolerance on the unit norm of present rows.
pub const UNIT_NORM_TOL: f64 = 1e-9;

/// `118 × d` table; row `Z − 1` belongs to atomic number `Z`. Rows of
/// elements never observed are zero and have count 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementEmbeddingTable {
    rows: Tensor<f64>,
    counts: Vec<u64>,
}

impl ElementEmbeddingTable {
    pub fn new(rows: Tensor<f64>, counts: Vec<u64>) -> Result<Self> {
        let (n, d) = rows.dims2()?;
        if n != NUM_ELEMENTS || counts.len() != NUM_ELEMENTS || d == 0 {
            return Err(validation!(
                "embedding table must be {NUM_ELEMENTS} × d with {NUM_ELEMENTS} counts, got {n} × {d} and {}",
                counts.len()
            ));
        }
        for (i, &c) in counts.iter().enumerate() {
            let row = rows.row(i);
            if c > 0 {
                let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > UNIT_NORM_TOL {
                    return Err(validation!("row for Z = {} has norm {norm}", i + 1));
                }
            } else if row.iter().any(|&x| x != 0.0) {
                return Err(validation!(
                    "absent element Z = {} has a non-zero row",
                    i + 1
                ));
            }
        }
        Ok(Self { rows, counts })
    }

    pub fn dim(&self) -> usize {
        self.rows.cols()
    }

    pub fn rows(&self) -> &Tensor<f64> {
        &self.rows
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn row(&self, z: u8) -> &[f64] {
        self.rows.row(z as usize - 1)
    }

    pub fn is_present(&self, z: u8) -> bool {
        (1..=NUM_ELEMENTS as u8).contains(&z) && self.counts[z as usize - 1] > 0
    }

    pub fn present(&self) -> Vec<bool> {
        self.counts.iter().map(|&c| c > 0).collect()
    }

    pub fn present_elements(&self) -> Vec<u8> {
        (1..=NUM_ELEMENTS as u8)
            .filter(|&z| self.is_present(z))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("Z,symbol,count");
        for k in 0..self.dim() {
            out.push_str(&format!(",e{k}"));
        }
        out.push('\n');
        for z in 1..=NUM_ELEMENTS as u8 {
            out.push_str(&format!(
                "{z},{},{}",
                symbol(z).expect("valid Z"),
                self.counts[z as usize - 1]
            ));
            for &x in self.row(z) {
                out.push(',');
                out.push_str(&fmt_g17(x));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| parse_err!("empty CSV"))?
            .split(',')
            .collect();
        let d = header.len().saturating_sub(3);
        let expected: Vec<String> = ["Z", "symbol", "count"]
            .iter()
            .map(|s| s.to_string())
            .chain((0..d).map(|k| format!("e{k}")))
            .collect();
        if d == 0 || header != expected {
            return Err(parse_err!("unexpected CSV header {:?}", header.join(",")));
        }
        let mut rows = Tensor::zeros(&[NUM_ELEMENTS, d]);
        let mut counts = vec![0u64; NUM_ELEMENTS];
        let mut seen = [false; NUM_ELEMENTS];
        for (n, line) in lines.enumerate() {
            let ctx = || format!("CSV line {}", n + 2);
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != d + 3 {
                return Err(parse_err!(
                    "{}: expected {} fields, got {}",
                    ctx(),
                    d + 3,
                    fields.len()
                ));
            }
            let z: u8 = fields[0]
                .trim()
                .parse()
                .map_err(|_| parse_err!("{}: bad Z {:?}", ctx(), fields[0]))?;
            if !(1..=NUM_ELEMENTS as u8).contains(&z) || seen[z as usize - 1] {
                return Err(parse_err!("{}: Z = {z} out of range or repeated", ctx()));
            }
            seen[z as usize - 1] = true;
            counts[z as usize - 1] = fields[2]
                .trim()
                .parse()
                .map_err(|_| parse_err!("{}: bad count {:?}", ctx(), fields[2]))?;
            for (k, f) in fields[3..].iter().enumerate() {
                rows.data_mut()[(z as usize - 1) * d + k] = f
                    .trim()
                    .parse()
                    .map_err(|_| parse_err!("{}: bad value {f:?}", ctx()))?;
            }
        }
        Self::new(rows, counts)
    }

    pub fn to_json(&self) -> String {
        let doc = TableJson {
            dim: self.dim(),
            elements: (1..=NUM_ELEMENTS as u8)
                .map(|z| ElementJson {
                    z,
                    symbol: symbol(z).expect("valid Z").to_string(),
                    count: self.counts[z as usize - 1],
                    present: self.is_present(z),
                    embedding: self.row(z).to_vec(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("table serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TableJson =
            serde_json::from_str(text).map_err(|e| parse_err!("embedding JSON: {e}"))?;
        let mut rows = Tensor::zeros(&[NUM_ELEMENTS, doc.dim]);
        let mut counts = vec![0u64; NUM_ELEMENTS];
        for e in doc.elements {
            if !(1..=NUM_ELEMENTS as u8).contains(&e.z) || e.embedding.len() != doc.dim {
                return Err(parse_err!("embedding JSON: bad entry for Z = {}", e.z));
            }
            counts[e.z as usize - 1] = e.count;
            let i = (e.z as usize - 1) * doc.dim;
            rows.data_mut()[i..i + doc.dim].copy_from_slice(&e.embedding);
        }
        Self::new(rows, counts)
    }

    /// Writes CSV, or JSON when the extension is `.json`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = if is_json(path) {
            self.to_json()
        } else {
            self.to_csv()
        };
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(text.as_bytes()))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let table = if is_json(path) {
            Self::from_json(&text)
        } else {
            Self::from_csv(&text)
        };
        table.map_err(|e| e.context(path.display()))
    }
}

fn is_json(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

#[derive(Serialize, Deserialize)]
struct TableJson {
    dim: usize,
    elements: Vec<ElementJson>,
}

#[derive(Serialize, Deserialize)]
struct ElementJson {
    z: u8,
    symbol: String,
    count: u64,
    present: bool,
    embedding: Vec<f64>,
}

/// Graphs encoded per forward pass during extraction.
const EXTRACT_CHUNK: usize = 64;

/// Encodes every graph without augmentation and averages node embeddings per
/// element, then L2-normalizes each observed row.
pub fn extract_embeddings<T: Scalar>(
    model: &PretrainModel<T>,
    graphs: &[PeriodicGraph],
) -> Result<ElementEmbeddingTable> {
    if graphs.is_empty() {
        return Err(validation!(
            "cannot extract embeddings from an empty dataset"
        ));
    }
    let d = model.encoder.config.dim;
    let mut sums = vec![0.0f64; NUM_ELEMENTS * d];
    let mut counts = vec![0u64; NUM_ELEMENTS];
    for chunk in graphs.chunks(EXTRACT_CHUNK) {
        let refs: Vec<&PeriodicGraph> = chunk.iter().collect();
        let batch = GraphBatch::<T>::from_graphs(&refs, &model.encoder.config)?;
        let tape = Tape::new();
        let p = model.params.bind_frozen(&tape);
        let h = model.encoder.encode(&batch, &p)?.value();
        for (i, &z) in batch.atomic_numbers.iter().enumerate() {
            let k = z as usize - 1;
            counts[k] += 1;
            for (s, x) in sums[k * d..(k + 1) * d].iter_mut().zip(h.row(i)) {
                *s += x.as_f64();
            }
        }
    }
    for (k, row) in sums.chunks_mut(d).enumerate() {
        if counts[k] == 0 {
            continue;
        }
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::Numerics(format!(
                "mean embedding of Z = {} has norm {norm}",
                k + 1
            )));
        }
        for x in row.iter_mut() {
            *x /= norm;
        }
    }
    ElementEmbeddingTable::new(Tensor::new(vec![NUM_ELEMENTS, d], sums)?, counts)
}
