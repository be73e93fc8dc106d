//! Supervised property regression on top of the encoder, comparing a
//! trainable atom table (baseline) with frozen pretrained element embeddings
//! behind a linear adapter.

mod config;
mod report;

pub use config::{DownstreamConfig, Mode};
pub use report::{improvement_pct, render_table, EvalReport};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::elements::NUM_ELEMENTS;
use crate::encoder::{Encoder, GraphBatch};
use crate::error::{validation, Error, Result};
use crate::graph::{build_periodic_graph, PeriodicGraph};
use crate::nn::{Bound, Init, Mlp, ParamSet};
use crate::numerics::{AdamState, Tape, Tensor, Var};
use crate::scalar::Scalar;
use crate::structures::CrystalStructure;
use crate::training::ElementEmbeddingTable;

/// A graph and its regression target.
#[derive(Debug, Clone)]
pub struct LabeledGraph {
    pub graph: PeriodicGraph,
    pub label: f64,
}

/// Builds graphs for labelled structures; every structure needs a label.
pub fn prepare_labeled(structures: &[CrystalStructure], cutoff: f64) -> Result<Vec<LabeledGraph>> {
    structures
        .iter()
        .map(|s| {
            let label = s
                .label()
                .ok_or_else(|| validation!("structure {} has no label", s.id()))?;
            Ok(LabeledGraph {
                graph: build_periodic_graph(s, cutoff)?,
                label,
            })
        })
        .collect()
}

/// Encoder followed by mean pooling and a two-layer regression head.
#[derive(Debug, Clone)]
pub struct RegressionModel<T> {
    pub params: ParamSet<T>,
    pub encoder: Encoder<T>,
    pub head: Mlp,
}

/// Encoder for `cfg.mode`: a fresh lookup table, or the frozen `table`
/// behind an identity-initialised adapter.
pub fn make_atom_featurizer<T: Scalar>(
    cfg: &DownstreamConfig,
    table: Option<&ElementEmbeddingTable>,
    params: &mut ParamSet<T>,
    init: &mut Init,
) -> Result<Encoder<T>> {
    match cfg.mode {
        Mode::Baseline => Encoder::new(cfg.encoder(), params, init, false),
        Mode::Pretrained => {
            let table =
                table.ok_or_else(|| validation!("pretrained mode needs an embedding table"))?;
            if table.dim() != cfg.dim {
                return Err(validation!(
                    "embedding table has d = {} but the config has dim = {}",
                    table.dim(),
                    cfg.dim
                ));
            }
            Encoder::with_frozen_table(
                cfg.encoder(),
                table.rows().cast(),
                table.present(),
                params,
                init,
                cfg.adapter_noise,
            )
        }
    }
}

impl<T: Scalar> RegressionModel<T> {
    pub fn new(
        cfg: &DownstreamConfig,
        table: Option<&ElementEmbeddingTable>,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamSet::new();
        let mut init = Init::new(seed);
        let encoder = make_atom_featurizer(cfg, table, &mut params, &mut init)?;
        let head = Mlp::new(&mut params, &mut init, "head", cfg.dim, cfg.dim, 1);
        Ok(Self {
            params,
            encoder,
            head,
        })
    }

    /// One prediction per graph of the batch, as an `n × 1` column.
    pub fn predict_var<'t>(&self, batch: &GraphBatch<T>, p: &Bound<'t, T>) -> Result<Var<'t, T>> {
        let h = self.encoder.encode(batch, p)?;
        self.head
            .forward(h.segment_mean(&batch.node_graph, batch.num_graphs)?, p)
    }

    pub fn predict(&self, graphs: &[&PeriodicGraph]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(graphs.len());
        for chunk in graphs.chunks(256) {
            let batch = GraphBatch::from_graphs(chunk, &self.encoder.config)?;
            let tape = Tape::new();
            let p = self.params.bind_frozen(&tape);
            out.extend(
                self.predict_var(&batch, &p)?
                    .value()
                    .data()
                    .iter()
                    .map(|x| x.as_f64()),
            );
        }
        Ok(out)
    }

    pub fn mae(&self, data: &[&LabeledGraph]) -> Result<f64> {
        let graphs: Vec<&PeriodicGraph> = data.iter().map(|d| &d.graph).collect();
        let pred = self.predict(&graphs)?;
        Ok(pred
            .iter()
            .zip(data)
            .map(|(p, d)| (p - d.label).abs())
            .sum::<f64>()
            / data.len() as f64)
    }
}

/// Index sets of the 80/10/10 split and the label-fraction subsample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded 80/10/10 split of `n` items. The train part is stored in a seeded
/// order so that every fraction takes a prefix of it; smaller fractions are
/// therefore nested in larger ones.
pub fn split_indices(n: usize, seed: u64) -> Split {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_val = n / 10;
    let n_test = n / 10;
    let test = order.split_off(n - n_test);
    let val = order.split_off(n - n_test - n_val);
    Split {
        train: order,
        val,
        test,
    }
}

pub fn subsample(train: &[usize], fraction: f64) -> Result<&[usize]> {
    let k = (fraction * train.len() as f64).round() as usize;
    if k < 1 {
        return Err(validation!(
            "label fraction {fraction} of {} training structures leaves no training data",
            train.len()
        ));
    }
    Ok(&train[..k.min(train.len())])
}

/// Outcome of one supervised run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub seed: u64,
    pub train_size: usize,
    pub best_epoch: usize,
    pub val_mae: f64,
    pub test_mae: f64,
}

fn check_table_coverage(data: &[LabeledGraph], table: &ElementEmbeddingTable) -> Result<()> {
    let mut seen = [false; NUM_ELEMENTS];
    for d in data {
        for &z in d.graph.atomic_numbers() {
            seen[z as usize - 1] = true;
        }
    }
    let missing: Vec<String> = (1..=NUM_ELEMENTS as u8)
        .filter(|&z| seen[z as usize - 1] && !table.is_present(z))
        .map(|z| format!("{} (Z={z})", crate::elements::symbol(z).unwrap_or("?")))
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::Featurization(format!(
            "elements absent from the embedding table: {}",
            missing.join(", ")
        )))
    }
}

/// Trains from scratch on the `cfg.label_fraction` subsample of the train
/// split with an MAE loss and reports the test MAE at the best validation epoch.
pub fn train_supervised<T: Scalar>(
    data: &[LabeledGraph],
    cfg: &DownstreamConfig,
    table: Option<&ElementEmbeddingTable>,
    seed: u64,
) -> Result<(RegressionModel<T>, RunResult)> {
    cfg.validate()?;
    if data.len() < 10 {
        return Err(validation!(
            "need at least 10 labelled structures, got {}",
            data.len()
        ));
    }
    if let (Mode::Pretrained, Some(t)) = (cfg.mode, table) {
        check_table_coverage(data, t)?;
    }
    let split = split_indices(data.len(), seed);
    let train: Vec<&LabeledGraph> = subsample(&split.train, cfg.label_fraction)?
        .iter()
        .map(|&i| &data[i])
        .collect();
    let val: Vec<&LabeledGraph> = split.val.iter().map(|&i| &data[i]).collect();
    let test: Vec<&LabeledGraph> = split.test.iter().map(|&i| &data[i]).collect();

    let mut model = RegressionModel::<T>::new(cfg, table, seed)?;
    let mean_label = train.iter().map(|d| d.label).sum::<f64>() / train.len() as f64;
    *model.params.get_mut(model.head.second.b) = Tensor::filled(&[1], T::of(mean_label));
    let mut adam = AdamState::new(cfg.adam(), model.params.tensors());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best: Option<(RunResult, ParamSet<T>)> = None;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for idx in order.chunks(cfg.batch_size) {
            let graphs: Vec<&PeriodicGraph> = idx.iter().map(|&i| &train[i].graph).collect();
            let labels: Vec<T> = idx.iter().map(|&i| T::of(train[i].label)).collect();
            let batch = GraphBatch::from_graphs(&graphs, &cfg.encoder())?;
            let grads = {
                let tape = Tape::new();
                let p = model.params.bind(&tape);
                let target = tape.constant(Tensor::new(vec![labels.len(), 1], labels)?);
                let loss = model.predict_var(&batch, &p)?.sub(target)?.abs()?.mean()?;
                let g = tape.backward(loss)?;
                p.vars().iter().map(|&v| g.get(v)).collect::<Vec<_>>()
            };
            adam.step(model.params.tensors_mut(), &grads)?;
        }
        let val_mae = model.mae(&val)?;
        if !val_mae.is_finite() {
            return Err(Error::Numerics(format!(
                "validation MAE is {val_mae} at epoch {epoch}"
            )));
        }
        if best.as_ref().is_none_or(|(b, _)| val_mae < b.val_mae) {
            let result = RunResult {
                seed,
                train_size: train.len(),
                best_epoch: epoch,
                val_mae,
                test_mae: model.mae(&test)?,
            };
            best = Some((result, model.params.clone()));
        }
    }
    let (result, params) = best.expect("at least one epoch");
    model.params = params;
    log::info!(
        "{} fraction {} seed {}: test MAE {:.6} (epoch {})",
        cfg.mode,
        cfg.label_fraction,
        seed,
        result.test_mae,
        result.best_epoch
    );
    Ok((model, result))
}

/// Test MAE of every seed of `cfg` at `cfg.label_fraction` and `cfg.mode`.
pub fn evaluate<T: Scalar>(
    data: &[LabeledGraph],
    cfg: &DownstreamConfig,
    table: Option<&ElementEmbeddingTable>,
) -> Result<EvalReport> {
    let maes = run_parallel(cfg.seeds.len(), |i| {
        train_supervised::<T>(data, cfg, table, cfg.seeds[i]).map(|(_, r)| r.test_mae)
    })?;
    Ok(EvalReport::new(
        cfg.dim,
        cfg.label_fraction,
        cfg.mode,
        cfg.seeds.clone(),
        maes,
    ))
}

/// Both modes at every fraction of `cfg.fractions`, one run per seed.
/// Reports come in (baseline, pretrained) pairs per fraction; pretrained
/// reports carry the improvement over the baseline of the same fraction.
pub fn label_fraction_sweep<T: Scalar>(
    data: &[LabeledGraph],
    cfg: &DownstreamConfig,
    table: &ElementEmbeddingTable,
) -> Result<Vec<EvalReport>> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for &fraction in &cfg.fractions {
        for mode in [Mode::Baseline, Mode::Pretrained] {
            for &seed in &cfg.seeds {
                jobs.push((fraction, mode, seed));
            }
        }
    }
    let maes = run_parallel(jobs.len(), |i| {
        let (fraction, mode, seed) = jobs[i];
        let run_cfg = DownstreamConfig {
            mode,
            label_fraction: fraction,
            ..cfg.clone()
        };
        train_supervised::<T>(data, &run_cfg, Some(table), seed).map(|(_, r)| r.test_mae)
    })?;
    let n = cfg.seeds.len();
    let mut reports = Vec::new();
    for (k, &fraction) in cfg.fractions.iter().enumerate() {
        let at = |m: usize| maes[(2 * k + m) * n..(2 * k + m + 1) * n].to_vec();
        let base = EvalReport::new(cfg.dim, fraction, Mode::Baseline, cfg.seeds.clone(), at(0));
        let pre = EvalReport::new(
            cfg.dim,
            fraction,
            Mode::Pretrained,
            cfg.seeds.clone(),
            at(1),
        )
        .with_baseline(&base);
        reports.push(base);
        reports.push(pre);
    }
    Ok(reports)
}

/// Runs `f(0..n)` on worker threads and returns results in index order.
/// Each job is self-contained, so results do not depend on scheduling.
fn run_parallel<R: Send>(n: usize, f: impl Fn(usize) -> Result<R> + Sync) -> Result<Vec<R>> {
    let workers = std::thread::available_parallelism()
        .map_or(1, |p| p.get())
        .min(n.max(1));
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<Option<Result<R>>>> =
        (0..n).map(|_| Default::default()).collect();
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = f(i);
                *slots[i].lock().expect("slot lock") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().expect("slot lock").expect("every job ran"))
        .collect()
}
