//! Pretraining: configuration, objective, optimisation loop, checkpoints and
//! embedding extraction.

mod checkpoint;
mod config;
mod embeddings;
mod model;

pub use checkpoint::Checkpoint;
pub use config::PretrainConfig;
pub use embeddings::{extract_embeddings, ElementEmbeddingTable, UNIT_NORM_TOL};
pub use model::{
    draw_views, evaluate_loss, pretrain_loss, LossParts, LossVars, PretrainModel, TrainingGraph,
};

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::numerics::{AdamState, Tape};
use crate::scalar::Scalar;

pub const LOG_FILE: &str = "train_log.jsonl";
pub const FINAL_CHECKPOINT: &str = "checkpoint_final.bin";
pub const BEST_CHECKPOINT: &str = "checkpoint_best.bin";

/// One line of the training log: epoch means of the step losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    #[serde(rename = "L_node")]
    pub node: f64,
    #[serde(rename = "L_adj")]
    pub adj: f64,
    #[serde(rename = "L_infonce")]
    pub infonce: f64,
    #[serde(rename = "L_total")]
    pub total: f64,
    pub wall_ms: u64,
}

/// One optimizer step on `batch`; graph `k` draws its views from `seeds[k]`.
pub fn pretrain_step<T: Scalar>(
    model: &mut PretrainModel<T>,
    adam: &mut AdamState<T>,
    batch: &[&TrainingGraph],
    cfg: &PretrainConfig,
    seeds: &[u64],
) -> Result<LossParts<T>> {
    let views = draw_views(batch, cfg, seeds)?;
    let (parts, grads) = {
        let tape = Tape::new();
        let p = model.params.bind(&tape);
        let loss = pretrain_loss(model, batch, &views, cfg, &p)?;
        let parts = loss.values()?;
        if !parts.total.is_finite() {
            return Err(Error::Numerics(format!(
                "non-finite pretraining loss {parts:?}"
            )));
        }
        let grads = tape.backward(loss.total)?;
        let grads: Vec<_> = p.vars().iter().map(|&v| grads.get(v)).collect();
        (parts, grads)
    };
    adam.step(model.params.tensors_mut(), &grads)?;
    Ok(parts)
}

/// Batches of indices for one epoch. A trailing batch of a single graph has
/// no negatives and is folded into the previous batch.
fn epoch_batches(order: &[usize], batch_size: usize) -> Vec<&[usize]> {
    let mut batches: Vec<&[usize]> = order.chunks(batch_size).collect();
    if batches.len() >= 2 && batches.last().is_some_and(|b| b.len() == 1) {
        batches.pop();
        let start = order.len() - batch_size - 1;
        *batches.last_mut().expect("at least one batch") = &order[start..];
    }
    batches
}

/// In-progress pretraining run.
#[derive(Debug, Clone)]
pub struct Trainer<T> {
    pub config: PretrainConfig,
    pub model: PretrainModel<T>,
    pub adam: AdamState<T>,
    pub history: Vec<EpochRecord>,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(config: PretrainConfig) -> Result<Self> {
        let model = PretrainModel::new(&config)?;
        let adam = AdamState::new(config.adam(), model.params.tensors());
        Ok(Self {
            config,
            model,
            adam,
            history: Vec::new(),
        })
    }

    /// Continues a run; only `epochs` may differ from the checkpointed config.
    pub fn resume(checkpoint: &Checkpoint, config: PretrainConfig) -> Result<Self> {
        let mut expected = checkpoint.config.clone();
        expected.epochs = config.epochs;
        if expected != config {
            return Err(validation!(
                "resume config differs from the checkpoint in more than epochs"
            ));
        }
        config.validate()?;
        Ok(Self {
            model: checkpoint.model()?,
            adam: checkpoint.adam(),
            history: checkpoint.history.clone(),
            config,
        })
    }

    pub fn epochs_done(&self) -> usize {
        self.history.len()
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::capture(
            &self.config,
            self.epochs_done(),
            &self.history,
            &self.model,
            &self.adam,
        )
    }

    /// Runs the next epoch and records it in the history.
    pub fn run_epoch(&mut self, data: &[TrainingGraph]) -> Result<EpochRecord> {
        if data.len() < 2 {
            return Err(validation!(
                "pretraining needs at least 2 graphs, got {}",
                data.len()
            ));
        }
        let start = Instant::now();
        let epoch = self.epochs_done() + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(epoch as u64);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng);

        let batches = epoch_batches(&order, self.config.batch_size);
        let mut sums = [0.0f64; 4];
        for idx in &batches {
            let batch: Vec<&TrainingGraph> = idx.iter().map(|&i| &data[i]).collect();
            let seeds: Vec<u64> = idx.iter().map(|_| rng.next_u64()).collect();
            let parts = pretrain_step(
                &mut self.model,
                &mut self.adam,
                &batch,
                &self.config,
                &seeds,
            )
            .map_err(|e| e.context(format!("epoch {epoch}")))?;
            for (s, v) in sums
                .iter_mut()
                .zip([parts.node, parts.adj, parts.infonce, parts.total])
            {
                *s += v.as_f64();
            }
        }
        let n = batches.len() as f64;
        let record = EpochRecord {
            epoch,
            node: sums[0] / n,
            adj: sums[1] / n,
            infonce: sums[2] / n,
            total: sums[3] / n,
            wall_ms: start.elapsed().as_millis() as u64,
        };
        self.history.push(record);
        Ok(record)
    }

    /// Trains until `config.epochs` epochs are done. With `out_dir`, writes
    /// the JSON-lines log (full history), the best-loss checkpoint whenever
    /// it improves, and the final checkpoint.
    pub fn run(&mut self, data: &[TrainingGraph], out_dir: Option<&Path>) -> Result<()> {
        let mut log = match out_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                let path = dir.join(LOG_FILE);
                let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
                let mut w = LogWriter {
                    out: BufWriter::new(file),
                    path,
                };
                for r in &self.history {
                    w.write(r)?;
                }
                Some(w)
            }
            None => None,
        };
        let mut best = self
            .history
            .iter()
            .map(|r| r.total)
            .fold(f64::INFINITY, f64::min);
        while self.epochs_done() < self.config.epochs {
            let r = self.run_epoch(data)?;
            log::info!(
                "epoch {} total {:.6} node {:.6} adj {:.6} infonce {:.6} ({} ms)",
                r.epoch,
                r.total,
                r.node,
                r.adj,
                r.infonce,
                r.wall_ms
            );
            if let Some(w) = log.as_mut() {
                w.write(&r)?;
            }
            if r.total < best {
                best = r.total;
                if let Some(dir) = out_dir {
                    self.checkpoint().save(dir.join(BEST_CHECKPOINT))?;
                }
            }
        }
        if let Some(dir) = out_dir {
            self.checkpoint().save(dir.join(FINAL_CHECKPOINT))?;
        }
        Ok(())
    }
}

struct LogWriter {
    out: BufWriter<File>,
    path: PathBuf,
}

impl LogWriter {
    fn write(&mut self, r: &EpochRecord) -> Result<()> {
        let line = serde_json::to_string(r).expect("record serializes");
        writeln!(self.out, "{line}")
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

/// Fresh pretraining run over `data`.
pub fn pretrain<T: Scalar>(
    data: &[TrainingGraph],
    config: &PretrainConfig,
    out_dir: Option<&Path>,
) -> Result<Trainer<T>> {
    let mut trainer = Trainer::new(config.clone())?;
    trainer.run(data, out_dir)?;
    Ok(trainer)
}

pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<EpochRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

#[cfg(test)]
mod tests;
