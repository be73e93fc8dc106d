//! Node encoder: atom featurization, radial-basis edge features and a stack
//! of gated residual message-passing layers.
//!
//! Layer update, summed over incoming directed edges `j → i`:
//!
//! ```text
//! x_ij      = [h_i ‖ h_j ‖ e_ij]
//! h_i^{l+1} = h_i^l + Σ_j MLP_msg(x_ij) ⊙ σ(MLP_gate(x_ij))
//! ```
//!
//! The interface (batch of views in, `N × d` embeddings out) is what the rest
//! of the crate depends on; the layer itself is a plain stand-in and can be
//! swapped.

use serde::{Deserialize, Serialize};

use crate::augment::AugmentedView;
use crate::elements::{self, NUM_ELEMENTS};
use crate::error::{validation, Error, Result};
use crate::graph::PeriodicGraph;
use crate::nn::{Bound, Init, Linear, Mlp, ParamId, ParamSet};
use crate::numerics::{Tensor, Var};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Node embedding width `d`.
    pub dim: usize,
    pub layers: usize,
    /// Number of Gaussian radial basis functions `K`; edge width is `K + 3`.
    pub rbf_count: usize,
    /// Radial basis support in Å; must cover the graph cutoff.
    pub cutoff: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            layers: 2,
            rbf_count: 16,
            cutoff: crate::graph::DEFAULT_CUTOFF,
        }
    }
}

impl EncoderConfig {
    pub fn edge_dim(&self) -> usize {
        self.rbf_count + 3
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.rbf_count < 2 {
            return Err(validation!(
                "encoder needs dim ≥ 1 and rbf_count ≥ 2 (got {}, {})",
                self.dim,
                self.rbf_count
            ));
        }
        if !(self.cutoff > 0.0 && self.cutoff.is_finite()) {
            return Err(validation!(
                "encoder cutoff {} must be positive",
                self.cutoff
            ));
        }
        Ok(())
    }
}

/// `K` Gaussians `exp(−(d − μ_k)² / 2σ²)` with `μ_k` evenly spaced on
/// `[0, cutoff]` and `σ = cutoff / K`, followed by the three direction components.
pub fn edge_features(
    distance: f64,
    direction: [f64; 3],
    rbf_count: usize,
    cutoff: f64,
) -> Result<Vec<f64>> {
    if !(distance > 0.0 && distance <= cutoff) {
        return Err(validation!(
            "edge distance {distance} outside (0, {cutoff}]"
        ));
    }
    let sigma = cutoff / rbf_count as f64;
    let step = cutoff / (rbf_count as f64 - 1.0);
    let mut out: Vec<f64> = (0..rbf_count)
        .map(|k| {
            let mu = k as f64 * step;
            (-(distance - mu).powi(2) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    out.extend_from_slice(&direction);
    Ok(out)
}

/// Disjoint union of several graphs, laid out for one encoder pass.
#[derive(Debug, Clone)]
pub struct GraphBatch<T> {
    pub num_graphs: usize,
    /// First node index of every graph, plus the total node count at the end.
    pub node_offsets: Vec<usize>,
    pub node_graph: Vec<usize>,
    pub atomic_numbers: Vec<u8>,
    pub masked: Vec<bool>,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    /// `E × (K + 3)` edge features.
    pub edge_features: Tensor<T>,
}

impl<T: Scalar> GraphBatch<T> {
    pub fn from_views(views: &[&AugmentedView], cfg: &EncoderConfig) -> Result<Self> {
        let parts: Vec<(&PeriodicGraph, Vec<bool>)> =
            views.iter().map(|v| (&v.graph, v.mask_flags())).collect();
        Self::assemble(&parts, cfg)
    }

    /// Un-augmented graphs: nothing masked, no edges dropped.
    pub fn from_graphs(graphs: &[&PeriodicGraph], cfg: &EncoderConfig) -> Result<Self> {
        let parts: Vec<(&PeriodicGraph, Vec<bool>)> = graphs
            .iter()
            .map(|g| (*g, vec![false; g.num_nodes()]))
            .collect();
        Self::assemble(&parts, cfg)
    }

    fn assemble(parts: &[(&PeriodicGraph, Vec<bool>)], cfg: &EncoderConfig) -> Result<Self> {
        let mut batch = GraphBatch {
            num_graphs: parts.len(),
            node_offsets: vec![0],
            node_graph: Vec::new(),
            atomic_numbers: Vec::new(),
            masked: Vec::new(),
            src: Vec::new(),
            dst: Vec::new(),
            edge_features: Tensor::zeros(&[0, cfg.edge_dim()]),
        };
        let mut feats = Vec::new();
        for (gi, (g, mask)) in parts.iter().enumerate() {
            if g.num_nodes() == 0 {
                return Err(validation!("graph {:?} has no nodes", g.id()));
            }
            let base = batch.atomic_numbers.len();
            batch.atomic_numbers.extend_from_slice(g.atomic_numbers());
            batch.masked.extend_from_slice(mask);
            batch
                .node_graph
                .extend(std::iter::repeat_n(gi, g.num_nodes()));
            for e in g.edges() {
                batch.src.push(base + e.src);
                batch.dst.push(base + e.dst);
                let f = edge_features(e.distance, e.direction, cfg.rbf_count, cfg.cutoff)
                    .map_err(|err| err.context(format!("graph {:?}", g.id())))?;
                feats.extend(f.into_iter().map(T::of));
            }
            batch.node_offsets.push(batch.atomic_numbers.len());
        }
        batch.edge_features = Tensor::matrix(batch.src.len(), cfg.edge_dim(), feats)?;
        Ok(batch)
    }

    pub fn num_nodes(&self) -> usize {
        self.atomic_numbers.len()
    }

    pub fn graph_nodes(&self, g: usize) -> std::ops::Range<usize> {
        self.node_offsets[g]..self.node_offsets[g + 1]
    }
}

/// How initial node features `h⁰` are produced from atomic numbers.
#[derive(Debug, Clone)]
pub enum Featurizer<T> {
    /// Trainable `118 × d` table, with an optional learned vector that
    /// replaces the features of masked nodes.
    Lookup {
        table: ParamId,
        mask_vector: Option<ParamId>,
    },
    /// Frozen per-element table followed by a trainable `d → d` linear adapter.
    Adapted {
        table: Tensor<T>,
        present: Vec<bool>,
        adapter: Linear,
    },
}

#[derive(Debug, Clone, Copy)]
pub struct MessageLayer {
    pub message: Mlp,
    pub gate: Mlp,
}

#[derive(Debug, Clone)]
pub struct Encoder<T> {
    pub config: EncoderConfig,
    pub featurizer: Featurizer<T>,
    pub layers: Vec<MessageLayer>,
}

impl<T: Scalar> Encoder<T> {
    /// Encoder with a trainable atom table and a mask vector, as used for pretraining.
    pub fn new(
        cfg: EncoderConfig,
        params: &mut ParamSet<T>,
        init: &mut Init,
        with_mask: bool,
    ) -> Result<Self> {
        cfg.validate()?;
        let table = params.add(
            "encoder.atom_table",
            init.normal(&[NUM_ELEMENTS, cfg.dim], 1.0),
        );
        let mask_vector =
            with_mask.then(|| params.add("encoder.mask_vector", init.normal(&[1, cfg.dim], 1.0)));
        let layers = Self::build_layers(&cfg, params, init);
        Ok(Self {
            config: cfg,
            featurizer: Featurizer::Lookup { table, mask_vector },
            layers,
        })
    }

    /// Encoder fed by a frozen embedding table through a linear adapter
    /// initialised at identity plus `adapter_noise`-scaled uniform noise.
    pub fn with_frozen_table(
        cfg: EncoderConfig,
        table: Tensor<T>,
        present: Vec<bool>,
        params: &mut ParamSet<T>,
        init: &mut Init,
        adapter_noise: f64,
    ) -> Result<Self> {
        cfg.validate()?;
        if table.shape() != [NUM_ELEMENTS, cfg.dim] || present.len() != NUM_ELEMENTS {
            return Err(validation!(
                "embedding table shape {:?} does not match dim {}",
                table.shape(),
                cfg.dim
            ));
        }
        let adapter = Linear::new(params, init, "encoder.adapter", cfg.dim, cfg.dim);
        let mut w = Tensor::identity(cfg.dim);
        if adapter_noise > 0.0 {
            w = w.add(&init.uniform(&[cfg.dim, cfg.dim], adapter_noise))?;
        }
        *params.get_mut(adapter.w) = w;
        let layers = Self::build_layers(&cfg, params, init);
        Ok(Self {
            config: cfg,
            featurizer: Featurizer::Adapted {
                table,
                present,
                adapter,
            },
            layers,
        })
    }

    fn build_layers(
        cfg: &EncoderConfig,
        params: &mut ParamSet<T>,
        init: &mut Init,
    ) -> Vec<MessageLayer> {
        let input = 2 * cfg.dim + cfg.edge_dim();
        (0..cfg.layers)
            .map(|l| MessageLayer {
                message: Mlp::new(
                    params,
                    init,
                    &format!("encoder.layer{l}.message"),
                    input,
                    cfg.dim,
                    cfg.dim,
                ),
                gate: Mlp::new(
                    params,
                    init,
                    &format!("encoder.layer{l}.gate"),
                    input,
                    cfg.dim,
                    cfg.dim,
                ),
            })
            .collect()
    }

    /// Initial node features `h⁰`.
    pub fn featurize<'t>(&self, batch: &GraphBatch<T>, p: &Bound<'t, T>) -> Result<Var<'t, T>> {
        match &self.featurizer {
            Featurizer::Lookup { table, mask_vector } => {
                let table = p.var(*table);
                let any_masked = batch.masked.iter().any(|&m| m);
                match (mask_vector, any_masked) {
                    (Some(mask), true) => {
                        let ext = Var::concat_rows(&[table, p.var(*mask)])?;
                        let index: Vec<usize> = batch
                            .atomic_numbers
                            .iter()
                            .zip(&batch.masked)
                            .map(|(&z, &m)| if m { NUM_ELEMENTS } else { z as usize - 1 })
                            .collect();
                        ext.gather_rows(&index)
                    }
                    (None, true) => Err(validation!(
                        "batch has masked nodes but encoder has no mask vector"
                    )),
                    _ => table.gather_rows(&element_rows(&batch.atomic_numbers)),
                }
            }
            Featurizer::Adapted {
                table,
                present,
                adapter,
            } => {
                let mut missing: Vec<u8> = batch
                    .atomic_numbers
                    .iter()
                    .copied()
                    .filter(|&z| !present[z as usize - 1])
                    .collect();
                if !missing.is_empty() {
                    missing.sort_unstable();
                    missing.dedup();
                    let names: Vec<String> = missing
                        .iter()
                        .map(|&z| format!("{} (Z={z})", elements::symbol(z).unwrap_or("?")))
                        .collect();
                    return Err(Error::Featurization(format!(
                        "elements absent from the embedding table: {}",
                        names.join(", ")
                    )));
                }
                let rows = p
                    .var(adapter.w)
                    .tape()
                    .constant(table.gather_rows(&element_rows(&batch.atomic_numbers))?);
                adapter.forward(rows, p)
            }
        }
    }

    /// `N × d` node embeddings for every node of the batch.
    pub fn encode<'t>(&self, batch: &GraphBatch<T>, p: &Bound<'t, T>) -> Result<Var<'t, T>> {
        let mut h = self.featurize(batch, p)?;
        let n = batch.num_nodes();
        if batch.src.is_empty() {
            // empty neighbourhoods: every aggregate is the zero vector
            return Ok(h);
        }
        let edges = h.tape().constant(batch.edge_features.clone());
        for layer in &self.layers {
            let recv = h.gather_rows(&batch.dst)?;
            let send = h.gather_rows(&batch.src)?;
            let x = Var::concat_cols(&[recv, send, edges])?;
            let msg = layer.message.forward(x, p)?;
            let gate = layer.gate.forward(x, p)?.sigmoid()?;
            let agg = msg.mul(gate)?.scatter_add_rows(&batch.dst, n)?;
            h = h.add(agg)?;
        }
        Ok(h)
    }
}

fn element_rows(z: &[u8]) -> Vec<usize> {
    z.iter().map(|&z| z as usize - 1).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::augment;
    use crate::graph::build_periodic_graph;
    use crate::numerics::{grad_check, Tape};
    use crate::structures::CrystalStructure;

    fn cfg() -> EncoderConfig {
        EncoderConfig {
            dim: 8,
            layers: 2,
            rbf_count: 6,
            cutoff: 3.5,
        }
    }

    fn three_atoms() -> PeriodicGraph {
        let s = CrystalStructure::new(
            "tri",
            [[3.0, 0.0, 0.0], [0.5, 3.1, 0.0], [0.2, 0.3, 3.3]],
            vec![[0.0, 0.0, 0.0], [0.5, 0.5, 0.5], [0.2, 0.7, 0.3]],
            vec![8, 26, 3],
            None,
        )
        .unwrap();
        build_periodic_graph(&s, 3.5).unwrap()
    }

    #[test]
    fn rbf_peaks_and_direction() {
        let f = edge_features(4.0 / 3.0, [0.0, 0.0, 1.0], 4, 4.0).unwrap();
        assert!((f[1] - 1.0).abs() < 1e-15);
        assert_eq!(&f[4..], &[0.0, 0.0, 1.0]);
        assert!(edge_features(0.0, [1.0, 0.0, 0.0], 4, 4.0).is_err());
        assert!(edge_features(4.5, [1.0, 0.0, 0.0], 4, 4.0).is_err());
    }

    #[test]
    fn rbf_hand_values() {
        // K = 4, cutoff = 4: μ = 0, 4/3, 8/3, 4 and σ = 1.
        let f = edge_features(1.0, [1.0, 0.0, 0.0], 4, 4.0).unwrap();
        let expected = [
            (-0.5f64).exp(),
            (-(1.0f64 / 3.0).powi(2) / 2.0).exp(),
            (-(5.0f64 / 3.0).powi(2) / 2.0).exp(),
            (-4.5f64).exp(),
        ];
        for k in 0..4 {
            assert!((f[k] - expected[k]).abs() < 1e-15, "k={k}");
        }
        assert!((f[0] - 0.606_530_659_712_633_4).abs() < 1e-15);
        assert!((f[1] - 0.945_959_468_906_765_4).abs() < 1e-15);
    }

    fn run(enc: &Encoder<f64>, ps: &ParamSet<f64>, batch: &GraphBatch<f64>) -> Tensor<f64> {
        let tape = Tape::new();
        let bound = ps.bind(&tape);
        enc.encode(batch, &bound).unwrap().value()
    }

    #[test]
    fn no_edges_leaves_initial_features() {
        let g = PeriodicGraph::from_parts("iso", vec![1, 8], vec![], 3.0);
        let mut ps = ParamSet::new();
        let enc = Encoder::new(cfg(), &mut ps, &mut Init::new(1), true).unwrap();
        let batch = GraphBatch::from_graphs(&[&g], &cfg()).unwrap();
        let h = run(&enc, &ps, &batch);
        let table = ps.get(ps.find("encoder.atom_table").unwrap());
        assert_eq!(h.row(0), table.row(0));
        assert_eq!(h.row(1), table.row(7));
    }

    #[test]
    fn permutation_equivariant() {
        let g = three_atoms();
        let perm = [2, 0, 1];
        let gp = g.permuted(&perm);
        let mut ps = ParamSet::new();
        let enc = Encoder::new(cfg(), &mut ps, &mut Init::new(2), true).unwrap();
        let h = run(&enc, &ps, &GraphBatch::from_graphs(&[&g], &cfg()).unwrap());
        let hp = run(&enc, &ps, &GraphBatch::from_graphs(&[&gp], &cfg()).unwrap());
        for (i, &p) in perm.iter().enumerate() {
            for (a, b) in h.row(i).iter().zip(hp.row(p)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn symmetric_environments_embed_equally() {
        // Two identical atoms at ±x mirror positions of a centrosymmetric cell.
        let s = CrystalStructure::new(
            "sym",
            [[3.0, 0.0, 0.0], [0.0, 3.0, 0.0], [0.0, 0.0, 3.0]],
            vec![[0.25, 0.5, 0.5], [0.75, 0.5, 0.5]],
            vec![14, 14],
            None,
        )
        .unwrap();
        let g = build_periodic_graph(&s, 3.5).unwrap();
        let mut ps = ParamSet::new();
        let enc = Encoder::new(cfg(), &mut ps, &mut Init::new(3), true).unwrap();
        let h = run(&enc, &ps, &GraphBatch::from_graphs(&[&g], &cfg()).unwrap());
        for (a, b) in h.row(0).iter().zip(h.row(1)) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn masked_nodes_use_mask_vector() {
        let g = three_atoms();
        let view = augment(&g, 0.5, 0.0, 4).unwrap();
        let c = EncoderConfig { layers: 0, ..cfg() };
        let mut ps = ParamSet::new();
        let enc = Encoder::new(c, &mut ps, &mut Init::new(4), true).unwrap();
        let h = run(&enc, &ps, &GraphBatch::from_views(&[&view], &c).unwrap());
        let mask = ps.get(ps.find("encoder.mask_vector").unwrap());
        for &i in &view.masked {
            assert_eq!(h.row(i), mask.row(0));
        }
    }

    #[test]
    fn encoder_gradients_match_finite_differences() {
        let g = three_atoms();
        let view = augment(&g, 0.34, 0.2, 5).unwrap();
        let mut ps = ParamSet::new();
        let enc = Encoder::new(cfg(), &mut ps, &mut Init::new(5), true).unwrap();
        let batch = GraphBatch::from_views(&[&view], &cfg()).unwrap();
        let weights: Tensor<f64> = Init::new(9).uniform(&[3, 8], 1.0);
        let report = grad_check(
            |tape, vars| {
                let bound = Bound::from_vars(vars.to_vec());
                let h = enc.encode(&batch, &bound)?;
                h.mul(tape.constant(weights.clone()))?.sum()
            },
            ps.tensors(),
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn frozen_table_with_identity_adapter() {
        let mut init = Init::new(6);
        let table: Tensor<f64> = init.normal(&[118, 8], 1.0);
        let present = vec![true; 118];
        let mut ps = ParamSet::new();
        let c = EncoderConfig { layers: 0, ..cfg() };
        let enc =
            Encoder::with_frozen_table(c, table.clone(), present, &mut ps, &mut init, 0.0).unwrap();
        let g = three_atoms();
        let h = run(&enc, &ps, &GraphBatch::from_graphs(&[&g], &c).unwrap());
        for (i, &z) in g.atomic_numbers().iter().enumerate() {
            assert_eq!(h.row(i), table.row(z as usize - 1));
        }
    }

    #[test]
    fn frozen_table_reports_missing_elements() {
        let mut init = Init::new(7);
        let mut present = vec![true; 118];
        present[25] = false;
        let mut ps = ParamSet::<f64>::new();
        let enc = Encoder::with_frozen_table(
            cfg(),
            init.normal(&[118, 8], 1.0),
            present,
            &mut ps,
            &mut init,
            0.0,
        )
        .unwrap();
        let tape = Tape::new();
        let bound = ps.bind(&tape);
        let batch = GraphBatch::from_graphs(&[&three_atoms()], &cfg()).unwrap();
        match enc.encode(&batch, &bound) {
            Err(Error::Featurization(m)) => assert!(m.contains("Fe"), "{m}"),
            other => panic!("{:?}", other.map(|v| v.value())),
        }
        let wrong = Encoder::with_frozen_table(
            EncoderConfig { dim: 16, ..cfg() },
            init.normal(&[118, 8], 1.0),
            vec![true; 118],
            &mut ParamSet::<f64>::new(),
            &mut init,
            0.0,
        );
        assert!(matches!(wrong, Err(Error::Validation(_))));
    }
}
