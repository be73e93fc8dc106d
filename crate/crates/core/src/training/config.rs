use serde::{Deserialize, Serialize};

use crate::augment::{DEFAULT_DROP_RATIO, DEFAULT_MASK_RATIO};
use crate::contrastive::DEFAULT_TEMPERATURE;
use crate::decoders::{check_class_weights, NodeLossScope, DEFAULT_CLASS_WEIGHTS};
use crate::encoder::EncoderConfig;
use crate::error::{validation, Result};
use crate::graph::{DEFAULT_CUTOFF, NUM_MULTIPLICITY_CLASSES};
use crate::numerics::AdamConfig;

/// Everything that determines a pretraining run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub mask_ratio: f64,
    pub drop_ratio: f64,
    pub tau: f64,
    pub dim: usize,
    pub layers: usize,
    pub rbf_count: usize,
    pub cutoff: f64,
    /// Projector widths; `None` means `dim`.
    pub projector_hidden: Option<usize>,
    pub projector_out: Option<usize>,
    pub class_weights: [f64; NUM_MULTIPLICITY_CLASSES],
    pub node_scope: NodeLossScope,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            alpha: 225.0,
            beta: 4.0,
            gamma: 3.0,
            lr: 3e-2,
            batch_size: 128,
            epochs: 100,
            mask_ratio: DEFAULT_MASK_RATIO,
            drop_ratio: DEFAULT_DROP_RATIO,
            tau: DEFAULT_TEMPERATURE,
            dim: 64,
            layers: 2,
            rbf_count: 16,
            cutoff: DEFAULT_CUTOFF,
            projector_hidden: None,
            projector_out: None,
            class_weights: DEFAULT_CLASS_WEIGHTS,
            node_scope: NodeLossScope::All,
            seed: 0,
        }
    }
}

impl PretrainConfig {
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

    pub fn projector_dims(&self) -> (usize, usize) {
        (
            self.projector_hidden.unwrap_or(self.dim),
            self.projector_out.unwrap_or(self.dim),
        )
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(validation!("loss weight {name} = {w} must be non-negative"));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(validation!("lr = {} must be positive", self.lr));
        }
        if self.batch_size < 2 {
            return Err(validation!(
                "batch_size = {} must be at least 2",
                self.batch_size
            ));
        }
        if self.epochs < 1 {
            return Err(validation!("epochs must be at least 1"));
        }
        for (name, r) in [
            ("mask_ratio", self.mask_ratio),
            ("drop_ratio", self.drop_ratio),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return Err(validation!("{name} = {r} outside [0, 1]"));
            }
        }
        if self.node_scope == NodeLossScope::Masked && self.mask_ratio == 0.0 {
            return Err(validation!("node_scope = masked needs mask_ratio > 0"));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(validation!("tau = {} must be positive", self.tau));
        }
        let (hidden, out) = self.projector_dims();
        if hidden == 0 || out == 0 {
            return Err(validation!("projector widths must be positive"));
        }
        check_class_weights(&self.class_weights)?;
        self.encoder().validate()
    }
}
