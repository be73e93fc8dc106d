//! Self-supervised pretraining of atomic embeddings on periodic crystal
//! graphs: a denoising autoencoder branch (node and bond-multiplicity
//! reconstruction) trained jointly with an InfoNCE contrastive branch, plus
//! the tooling to transfer the learned per-element table to property
//! regression.
//!
//! Numerics and models are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the 64-bit default.

pub mod augment;
pub mod contrastive;
pub mod decoders;
pub mod downstream;
pub mod elements;
pub mod encoder;
pub mod error;
pub mod format;
pub mod graph;
pub mod nn;
pub mod numerics;
pub mod projection;
pub mod scalar;
pub mod structures;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor64 = numerics::Tensor<f64>;
pub type Tape64 = numerics::Tape<f64>;
pub type ParamSet64 = nn::ParamSet<f64>;
pub type Encoder64 = encoder::Encoder<f64>;
pub type PretrainModel64 = training::PretrainModel<f64>;
pub type Trainer64 = training::Trainer<f64>;
pub type RegressionModel64 = downstream::RegressionModel<f64>;

pub type Tensor32 = numerics::Tensor<f32>;
pub type PretrainModel32 = training::PretrainModel<f32>;
