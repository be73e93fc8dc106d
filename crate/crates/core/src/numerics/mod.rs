//! Dense tensors, tape-based reverse-mode gradients, finite-difference
//! checking and the Adam optimizer.

mod adam;
mod gradcheck;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, grad_check_with_floor, GradCheckReport, DEFAULT_REL_FLOOR};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
