//! Reconstruction heads.
//!
//! * Node decoder: `ŷ_i = softmax(W_node · h_i/‖h_i‖ + b_node)` over 118 elements,
//!   trained with negative log-likelihood.
//! * Adjacency decoder: bilinear interaction `s_ij = h_iᵀ W_b h_j + b_b` on
//!   normalized embeddings, then `ŷ_ij = softmax(W_a s_ij + b_a)` over the six
//!   multiplicity classes, trained with class-weighted cross-entropy.
//!
//! Pairs are unordered with `i ≤ j`; `s_ij` is always evaluated with the smaller
//! index first since the bilinear form is not symmetric.

use serde::{Deserialize, Serialize};

use crate::elements::NUM_ELEMENTS;
use crate::error::{validation, Result};
use crate::graph::{MultiplicityTargets, NUM_MULTIPLICITY_CLASSES};
use crate::nn::{Bound, Init, Linear, ParamId, ParamSet};
use crate::numerics::{Tape, Tensor, Var};
use crate::scalar::Scalar;

/// Guard for normalizing all-zero embeddings.
pub const NORM_EPS: f64 = 1e-12;

pub const DEFAULT_CLASS_WEIGHTS: [f64; NUM_MULTIPLICITY_CLASSES] = [0.1, 1.0, 1.0, 1.0, 1.0, 1.0];

/// Which nodes the node-reconstruction loss averages over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeLossScope {
    #[default]
    All,
    Masked,
}

#[derive(Debug, Clone, Copy)]
pub struct NodeDecoder {
    pub linear: Linear,
}

impl NodeDecoder {
    pub fn new<T: Scalar>(params: &mut ParamSet<T>, init: &mut Init, dim: usize) -> Self {
        Self {
            linear: Linear::new(params, init, "node_decoder", dim, NUM_ELEMENTS),
        }
    }

    /// `N × 118` logits.
    pub fn logits<'t, T: Scalar>(&self, h: Var<'t, T>, p: &Bound<'t, T>) -> Result<Var<'t, T>> {
        self.linear
            .forward(h.l2_normalize_rows(T::of(NORM_EPS))?, p)
    }

    /// `N × 118` probabilities.
    pub fn probabilities<T: Scalar>(
        &self,
        h: &Tensor<T>,
        params: &ParamSet<T>,
    ) -> Result<Tensor<T>> {
        let tape = Tape::new();
        let p = params.bind_frozen(&tape);
        Ok(self
            .logits(tape.constant(h.clone()), &p)?
            .softmax_rows()?
            .value())
    }
}

/// Mean over `scope` of `−ln probs[i, Z_i − 1]`.
pub fn node_nll<T: Scalar>(probs: &Tensor<T>, atomic_numbers: &[u8], scope: &[usize]) -> Result<T> {
    if scope.is_empty() {
        return Err(validation!("node_nll over an empty node set"));
    }
    let mut total = T::zero();
    for &i in scope {
        total -= probs.get2(i, atomic_numbers[i] as usize - 1).ln();
    }
    Ok(total / T::of_usize(scope.len()))
}

#[derive(Debug, Clone, Copy)]
pub struct AdjacencyDecoder {
    /// `d × 6 × d` bilinear weight.
    pub bilinear_w: ParamId,
    pub bilinear_b: ParamId,
    pub linear: Linear,
}

impl AdjacencyDecoder {
    pub fn new<T: Scalar>(params: &mut ParamSet<T>, init: &mut Init, dim: usize) -> Self {
        let k = NUM_MULTIPLICITY_CLASSES;
        let bound = 1.0 / (dim as f64);
        let bilinear_w = params.add(
            "adj_decoder.bilinear.weight",
            init.uniform(&[dim, k, dim], bound),
        );
        let bilinear_b = params.add("adj_decoder.bilinear.bias", Tensor::zeros(&[k]));
        let linear = Linear::new(params, init, "adj_decoder.linear", k, k);
        Self {
            bilinear_w,
            bilinear_b,
            linear,
        }
    }

    /// `|pairs| × 6` logits.
    pub fn logits<'t, T: Scalar>(
        &self,
        h: Var<'t, T>,
        pairs: &[(usize, usize)],
        p: &Bound<'t, T>,
    ) -> Result<Var<'t, T>> {
        let hn = h.l2_normalize_rows(T::of(NORM_EPS))?;
        let (first, second): (Vec<usize>, Vec<usize>) =
            pairs.iter().map(|&(i, j)| (i.min(j), i.max(j))).unzip();
        let s = hn.gather_rows(&first)?.bilinear(
            p.var(self.bilinear_w),
            hn.gather_rows(&second)?,
            p.var(self.bilinear_b),
        )?;
        self.linear.forward(s, p)
    }

    /// `|pairs| × 6` multiplicity-class probabilities.
    pub fn probabilities<T: Scalar>(
        &self,
        h: &Tensor<T>,
        pairs: &[(usize, usize)],
        params: &ParamSet<T>,
    ) -> Result<Tensor<T>> {
        let tape = Tape::new();
        let p = params.bind_frozen(&tape);
        Ok(self
            .logits(tape.constant(h.clone()), pairs, &p)?
            .softmax_rows()?
            .value())
    }
}

/// All unordered pairs `(i, j)` with `i ≤ j < n`, diagonal included.
pub fn all_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect()
}

pub fn check_class_weights(weights: &[f64]) -> Result<()> {
    if weights.len() != NUM_MULTIPLICITY_CLASSES {
        return Err(validation!(
            "need {NUM_MULTIPLICITY_CLASSES} class weights, got {}",
            weights.len()
        ));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || weights.iter().all(|&w| w == 0.0) {
        return Err(validation!(
            "class weights {weights:?} must be non-negative and not all zero"
        ));
    }
    Ok(())
}

/// `Σ w_c · (−ln ŷ_ij[c]) / Σ w_c` with `c` the target class of each pair.
pub fn adj_weighted_ce<T: Scalar>(
    probs: &Tensor<T>,
    targets: &MultiplicityTargets,
    pairs: &[(usize, usize)],
    class_weights: &[f64],
) -> Result<T> {
    check_class_weights(class_weights)?;
    let mut num = T::zero();
    let mut den = T::zero();
    for (r, &(i, j)) in pairs.iter().enumerate() {
        let c = targets.get(i, j) as usize;
        let w = T::of(class_weights[c]);
        num -= w * probs.get2(r, c).ln();
        den += w;
    }
    if den <= T::zero() {
        return Err(validation!("every pair has a zero-weight target class"));
    }
    Ok(num / den)
}
