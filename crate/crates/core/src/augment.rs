//! Stochastic graph corruptions: node masking and edge dropping.
//!
//! A view remembers exactly what it hid, so the clean graph can always be
//! recovered from `(view.graph, view.dropped)`.

use std::collections::HashSet;

use rand::seq::index::sample;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{validation, Result};
use crate::graph::{Edge, PeriodicGraph};

pub const DEFAULT_MASK_RATIO: f64 = 0.15;
pub const DEFAULT_DROP_RATIO: f64 = 0.15;

/// Both directed halves of one removed image connection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DroppedPair {
    pub forward: Edge,
    pub reverse: Edge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedView {
    pub graph: PeriodicGraph,
    /// Sorted node indices whose atom feature is hidden from the encoder.
    pub masked: Vec<usize>,
    pub dropped: Vec<DroppedPair>,
    pub seed: u64,
}

impl AugmentedView {
    /// The un-augmented view of a graph.
    pub fn clean(graph: &PeriodicGraph) -> Self {
        Self {
            graph: graph.clone(),
            masked: Vec::new(),
            dropped: Vec::new(),
            seed: 0,
        }
    }

    pub fn mask_flags(&self) -> Vec<bool> {
        let mut flags = vec![false; self.graph.num_nodes()];
        for &i in &self.masked {
            flags[i] = true;
        }
        flags
    }

    /// Reinserts the dropped edges, giving back the original graph.
    pub fn restore(&self) -> PeriodicGraph {
        let mut edges = self.graph.edges().to_vec();
        for p in &self.dropped {
            edges.push(p.forward);
            edges.push(p.reverse);
        }
        PeriodicGraph::from_parts(
            self.graph.id(),
            self.graph.atomic_numbers().to_vec(),
            edges,
            self.graph.cutoff(),
        )
    }
}

fn check_ratio(name: &str, r: f64) -> Result<()> {
    if !(0.0..1.0).contains(&r) {
        return Err(validation!("{name} = {r} must lie in [0, 1)"));
    }
    Ok(())
}

/// Number of nodes to mask: `round(ratio · n)`, at least one when `ratio > 0`.
pub fn mask_count(ratio: f64, n: usize) -> usize {
    let k = (ratio * n as f64).round() as usize;
    if ratio > 0.0 && n > 0 {
        k.max(1).min(n)
    } else {
        k.min(n)
    }
}

/// Masks `mask_count(mask_ratio, N)` nodes and drops `round(drop_ratio · U)`
/// of the `U` unordered edges, uniformly without replacement.
pub fn augment(
    g: &PeriodicGraph,
    mask_ratio: f64,
    drop_ratio: f64,
    seed: u64,
) -> Result<AugmentedView> {
    check_ratio("mask_ratio", mask_ratio)?;
    check_ratio("drop_ratio", drop_ratio)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let n = g.num_nodes();
    let mut masked = sample(&mut rng, n, mask_count(mask_ratio, n)).into_vec();
    masked.sort_unstable();

    let canonical: Vec<&Edge> = g.edges().iter().filter(|e| e.is_canonical()).collect();
    let n_drop = ((drop_ratio * canonical.len() as f64).round() as usize).min(canonical.len());
    let mut picks = sample(&mut rng, canonical.len(), n_drop).into_vec();
    picks.sort_unstable();

    let mut removed = HashSet::new();
    let mut dropped = Vec::with_capacity(n_drop);
    for &p in &picks {
        let fwd = *canonical[p];
        let rev_key = fwd.reversed().key();
        let rev = *g
            .edges()
            .iter()
            .find(|e| e.key() == rev_key)
            .expect("periodic graph edges are closed under reversal");
        removed.insert(fwd.key());
        removed.insert(rev_key);
        dropped.push(DroppedPair {
            forward: fwd,
            reverse: rev,
        });
    }
    let kept = g
        .edges()
        .iter()
        .filter(|e| !removed.contains(&e.key()))
        .copied()
        .collect();

    Ok(AugmentedView {
        graph: PeriodicGraph::from_parts(g.id(), g.atomic_numbers().to_vec(), kept, g.cutoff()),
        masked,
        dropped,
        seed,
    })
}

/// Splits `seed` into two sub-seeds deterministically.
pub fn split_seed(seed: u64) -> (u64, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (rng.next_u64(), rng.next_u64())
}

/// Two independent augmented views drawn from sub-seeds of `seed`.
pub fn two_views(
    g: &PeriodicGraph,
    mask_ratio: f64,
    drop_ratio: f64,
    seed: u64,
) -> Result<(AugmentedView, AugmentedView)> {
    let (s1, s2) = split_seed(seed);
    Ok((
        augment(g, mask_ratio, drop_ratio, s1)?,
        augment(g, mask_ratio, drop_ratio, s2)?,
    ))
}
