use crate::augment::{two_views, AugmentedView};
use crate::contrastive::{adjacent_pairing, info_nce_var, Projector};
use crate::decoders::{all_pairs, AdjacencyDecoder, NodeDecoder, NodeLossScope};
use crate::encoder::{Encoder, GraphBatch};
use crate::error::{validation, Result};
use crate::graph::{multiplicity_targets, MultiplicityTargets, PeriodicGraph};
use crate::nn::{Bound, Init, ParamSet};
use crate::numerics::{Tape, Var};
use crate::scalar::Scalar;

use super::PretrainConfig;

/// Encoder, both reconstruction heads and the projector, with their parameters.
#[derive(Debug, Clone)]
pub struct PretrainModel<T> {
    pub params: ParamSet<T>,
    pub encoder: Encoder<T>,
    pub node_decoder: NodeDecoder,
    pub adj_decoder: AdjacencyDecoder,
    pub projector: Projector,
}

impl<T: Scalar> PretrainModel<T> {
    /// Freshly initialised model; parameter values depend only on `cfg.seed`.
    pub fn new(cfg: &PretrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamSet::new();
        let mut init = Init::new(cfg.seed);
        let encoder = Encoder::new(cfg.encoder(), &mut params, &mut init, true)?;
        let node_decoder = NodeDecoder::new(&mut params, &mut init, cfg.dim);
        let adj_decoder = AdjacencyDecoder::new(&mut params, &mut init, cfg.dim);
        let (hidden, out) = cfg.projector_dims();
        let projector = Projector::new(&mut params, &mut init, cfg.dim, hidden, out);
        Ok(Self {
            params,
            encoder,
            node_decoder,
            adj_decoder,
            projector,
        })
    }
}

/// A graph together with its reconstruction targets, computed once.
#[derive(Debug, Clone)]
pub struct TrainingGraph {
    pub graph: PeriodicGraph,
    pub targets: MultiplicityTargets,
}

impl TrainingGraph {
    pub fn new(graph: PeriodicGraph) -> Self {
        let targets = multiplicity_targets(&graph);
        Self { graph, targets }
    }
}

/// The three branch losses and their weighted sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts<T> {
    pub node: T,
    pub adj: T,
    pub infonce: T,
    pub total: T,
}

pub struct LossVars<'t, T: Scalar> {
    pub node: Var<'t, T>,
    pub adj: Var<'t, T>,
    pub infonce: Var<'t, T>,
    pub total: Var<'t, T>,
}

impl<T: Scalar> LossVars<'_, T> {
    pub fn values(&self) -> Result<LossParts<T>> {
        Ok(LossParts {
            node: self.node.item()?,
            adj: self.adj.item()?,
            infonce: self.infonce.item()?,
            total: self.total.item()?,
        })
    }
}

/// Views `[g0.v1, g0.v2, g1.v1, …]` for a batch; graph `k` uses `seeds[k]`.
pub fn draw_views(
    batch: &[&TrainingGraph],
    cfg: &PretrainConfig,
    seeds: &[u64],
) -> Result<Vec<AugmentedView>> {
    let mut views = Vec::with_capacity(2 * batch.len());
    for (g, &seed) in batch.iter().zip(seeds) {
        let (a, b) = two_views(&g.graph, cfg.mask_ratio, cfg.drop_ratio, seed)?;
        views.push(a);
        views.push(b);
    }
    Ok(views)
}

/// Pretraining objective on a batch of graphs and their augmented views
/// (`views[2k]`, `views[2k + 1]` belong to `batch[k]`).
///
/// Node and adjacency losses are computed per view against the original
/// graph's targets, then averaged over all views.
pub fn pretrain_loss<'t, T: Scalar>(
    model: &PretrainModel<T>,
    batch: &[&TrainingGraph],
    views: &[AugmentedView],
    cfg: &PretrainConfig,
    p: &Bound<'t, T>,
) -> Result<LossVars<'t, T>> {
    if batch.len() < 2 || views.len() != 2 * batch.len() {
        return Err(validation!(
            "pretraining needs at least 2 graphs with 2 views each ({} graphs, {} views)",
            batch.len(),
            views.len()
        ));
    }
    let view_refs: Vec<&AugmentedView> = views.iter().collect();
    let gb = GraphBatch::<T>::from_views(&view_refs, &cfg.encoder())?;
    let h = model.encoder.encode(&gb, p)?;

    let mut node_targets = Vec::with_capacity(gb.num_nodes());
    let mut node_weights = Vec::with_capacity(gb.num_nodes());
    let mut pairs = Vec::new();
    let mut pair_targets = Vec::new();
    let mut pair_weights = Vec::new();
    for (v, view) in views.iter().enumerate() {
        let original = batch[v / 2];
        let z = original.graph.atomic_numbers();
        let offset = gb.node_offsets[v];
        match cfg.node_scope {
            NodeLossScope::All => {
                let w = T::one() / T::of_usize(z.len());
                node_weights.extend(std::iter::repeat_n(w, z.len()));
            }
            NodeLossScope::Masked => {
                let w = T::one() / T::of_usize(view.masked.len());
                node_weights.extend(
                    view.mask_flags()
                        .iter()
                        .map(|&m| if m { w } else { T::zero() }),
                );
            }
        }
        node_targets.extend(z.iter().map(|&z| z as usize - 1));

        let local = all_pairs(z.len());
        let classes: Vec<usize> = local
            .iter()
            .map(|&(i, j)| original.targets.get(i, j) as usize)
            .collect();
        let total: f64 = classes.iter().map(|&c| cfg.class_weights[c]).sum();
        for (&(i, j), &c) in local.iter().zip(&classes) {
            pairs.push((offset + i, offset + j));
            pair_targets.push(c);
            pair_weights.push(if total > 0.0 {
                T::of(cfg.class_weights[c] / total)
            } else {
                T::zero()
            });
        }
    }

    let node =
        model
            .node_decoder
            .logits(h, p)?
            .cross_entropy(&node_targets, &node_weights, None)?;
    let adj = model.adj_decoder.logits(h, &pairs, p)?.cross_entropy(
        &pair_targets,
        &pair_weights,
        None,
    )?;
    let z = model
        .projector
        .project(h, &gb.node_graph, gb.num_graphs, p)?;
    let infonce = info_nce_var(z, &adjacent_pairing(views.len()), cfg.tau)?;

    let total = node
        .scale(T::of(cfg.alpha))?
        .add(adj.scale(T::of(cfg.beta))?)?
        .add(infonce.scale(T::of(cfg.gamma))?)?;
    Ok(LossVars {
        node,
        adj,
        infonce,
        total,
    })
}

/// Loss components without building gradients.
pub fn evaluate_loss<T: Scalar>(
    model: &PretrainModel<T>,
    batch: &[&TrainingGraph],
    views: &[AugmentedView],
    cfg: &PretrainConfig,
) -> Result<LossParts<T>> {
    let tape = Tape::new();
    let p = model.params.bind_frozen(&tape);
    pretrain_loss(model, batch, views, cfg, &p)?.values()
}
