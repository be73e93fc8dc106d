//! Graph-level projection and the InfoNCE objective.
//!
//! `z = W₂ · SiLU(W₁ · mean_i(h_i) + b₁) + b₂`; for each of the `2N` anchors the
//! loss is the cross-entropy of its positive partner under a softmax over
//! cosine similarities to every other embedding, divided by `τ`.

use crate::error::{validation, Result};
use crate::nn::{Bound, Init, Mlp, ParamSet};
use crate::numerics::{Tape, Tensor, Var};
use crate::scalar::Scalar;

pub const DEFAULT_TEMPERATURE: f64 = 0.1;

#[derive(Debug, Clone, Copy)]
pub struct Projector {
    pub mlp: Mlp,
}

impl Projector {
    pub fn new<T: Scalar>(
        params: &mut ParamSet<T>,
        init: &mut Init,
        dim: usize,
        hidden: usize,
        out: usize,
    ) -> Self {
        Self {
            mlp: Mlp::new(params, init, "projector", dim, hidden, out),
        }
    }

    /// One row of `z` per graph, from node embeddings `h` and each node's graph id.
    pub fn project<'t, T: Scalar>(
        &self,
        h: Var<'t, T>,
        node_graph: &[usize],
        num_graphs: usize,
        p: &Bound<'t, T>,
    ) -> Result<Var<'t, T>> {
        if num_graphs == 0 {
            return Err(validation!("projection of an empty batch"));
        }
        self.mlp.forward(h.segment_mean(node_graph, num_graphs)?, p)
    }

    /// Projection of a single graph's node embeddings.
    pub fn project_one<T: Scalar>(&self, h: &Tensor<T>, params: &ParamSet<T>) -> Result<Tensor<T>> {
        let tape = Tape::new();
        let p = params.bind_frozen(&tape);
        let seg = vec![0; h.rows()];
        Ok(self.project(tape.constant(h.clone()), &seg, 1, &p)?.value())
    }
}

/// Batch layout `[g0.view1, g0.view2, g1.view1, …]` pairs row `2k` with `2k + 1`.
pub fn adjacent_pairing(rows: usize) -> Vec<usize> {
    (0..rows).map(|i| i ^ 1).collect()
}

fn check_pairing(partner: &[usize], tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(validation!("temperature τ = {tau} must be positive"));
    }
    let rows = partner.len();
    if rows < 4 {
        return Err(validation!(
            "InfoNCE needs N ≥ 2 pairs ({rows} embeddings given)"
        ));
    }
    for (i, &j) in partner.iter().enumerate() {
        if j >= rows || j == i || partner[j] != i {
            return Err(validation!(
                "pairing is not a fixed-point-free involution at {i}"
            ));
        }
    }
    Ok(())
}

/// Mean InfoNCE over all `2N` anchors of `z` (one embedding per row).
pub fn info_nce_var<'t, T: Scalar>(
    z: Var<'t, T>,
    partner: &[usize],
    tau: f64,
) -> Result<Var<'t, T>> {
    check_pairing(partner, tau)?;
    let zn = z.l2_normalize_rows(T::of(crate::decoders::NORM_EPS))?;
    let sim = zn.matmul(zn.transpose()?)?.scale(T::one() / T::of(tau))?;
    let rows = partner.len();
    let excluded: Vec<Option<usize>> = (0..rows).map(Some).collect();
    sim.cross_entropy(partner, &vec![T::one(); rows], Some(&excluded))
}

pub fn info_nce<T: Scalar>(z: &Tensor<T>, partner: &[usize], tau: f64) -> Result<T> {
    let tape = Tape::new();
    info_nce_var(tape.constant(z.clone()), partner, tau)?.item()
}
