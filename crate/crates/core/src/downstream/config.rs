use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::encoder::EncoderConfig;
use crate::error::{validation, Result};
use crate::graph::DEFAULT_CUTOFF;
use crate::numerics::AdamConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Trainable per-element lookup table.
    #[default]
    Baseline,
    /// Frozen pretrained embedding table followed by a trainable linear adapter.
    Pretrained,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Pretrained => "pretrained",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DownstreamConfig {
    pub mode: Mode,
    /// CSV or JSON table from extraction; ignored in baseline mode.
    pub embedding_table: Option<PathBuf>,
    pub label_fraction: f64,
    /// Fractions visited by a sweep.
    pub fractions: Vec<f64>,
    /// One run per seed; the seed fixes split, subsample, init and batch order.
    pub seeds: Vec<u64>,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub dim: usize,
    pub layers: usize,
    pub rbf_count: usize,
    pub cutoff: f64,
    pub adapter_noise: f64,
}

impl Default for DownstreamConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Baseline,
            embedding_table: None,
            label_fraction: 1.0,
            fractions: vec![1.0, 0.5, 0.25],
            seeds: vec![0, 1, 2, 3],
            epochs: 100,
            lr: 3e-2,
            batch_size: 32,
            dim: 64,
            layers: 2,
            rbf_count: 16,
            cutoff: DEFAULT_CUTOFF,
            adapter_noise: 1e-2,
        }
    }
}

fn check_fraction(f: f64) -> Result<()> {
    if !(f > 0.0 && f <= 1.0) {
        return Err(validation!("label fraction {f} outside (0, 1]"));
    }
    Ok(())
}

impl DownstreamConfig {
    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            dim: self.dim,
            layers: self.layers,
            rbf_count: self.rbf_count,
            cutoff: self.cutoff,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig::with_lr(self.lr)
    }

    pub fn validate(&self) -> Result<()> {
        check_fraction(self.label_fraction)?;
        for &f in &self.fractions {
            check_fraction(f)?;
        }
        if self.seeds.is_empty() {
            return Err(validation!("at least one seed is required"));
        }
        if self.epochs < 1 || self.batch_size < 1 {
            return Err(validation!("epochs and batch_size must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(validation!("lr = {} must be positive", self.lr));
        }
        if !(self.adapter_noise >= 0.0 && self.adapter_noise.is_finite()) {
            return Err(validation!(
                "adapter_noise = {} must be non-negative",
                self.adapter_noise
            ));
        }
        self.encoder().validate()
    }
}
