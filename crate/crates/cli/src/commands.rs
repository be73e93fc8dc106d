use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;
use unate::downstream::{self, DownstreamConfig};
use unate::graph::{
    build_periodic_graph, multiplicity_targets, DEFAULT_CUTOFF, NUM_MULTIPLICITY_CLASSES,
};
use unate::projection::{project_table, projection_csv};
use unate::structures::{parse_cif, read_jsonl, write_jsonl, CrystalStructure};
use unate::synthetic::{self, SyntheticConfig};
use unate::training::{
    extract_embeddings, Checkpoint, ElementEmbeddingTable, PretrainConfig, Trainer, TrainingGraph,
};
use unate::{Error, Result};

use crate::config::{create_dir, resolve, write_json};

pub const EFFECTIVE_CONFIG: &str = "effective_config.json";

#[derive(Args)]
pub struct IngestArgs {
    /// CIF (`.cif`) or JSON-lines files.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_CUTOFF)]
    cutoff: f64,
}

#[derive(Serialize)]
struct IngestStats {
    structures: usize,
    failed_files: Vec<String>,
    cutoff: f64,
    atoms_histogram: BTreeMap<usize, usize>,
    directed_edges_total: usize,
    directed_edges_mean: f64,
    multiplicity_histogram: [usize; NUM_MULTIPLICITY_CLASSES],
}

fn read_structures(path: &Path) -> Result<Vec<CrystalStructure>> {
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("cif"))
    {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(vec![
            parse_cif(&text).map_err(|e| e.context(path.display()))?
        ])
    } else {
        read_jsonl(path)
    }
}

pub fn ingest(args: IngestArgs) -> Result<u8> {
    if !(args.cutoff > 0.0 && args.cutoff.is_finite()) {
        return Err(Error::Validation(format!(
            "cutoff {} must be positive",
            args.cutoff
        )));
    }
    create_dir(&args.out)?;
    let mut structures = Vec::new();
    let mut failed = Vec::new();
    let mut stats = IngestStats {
        structures: 0,
        failed_files: Vec::new(),
        cutoff: args.cutoff,
        atoms_histogram: BTreeMap::new(),
        directed_edges_total: 0,
        directed_edges_mean: 0.0,
        multiplicity_histogram: [0; NUM_MULTIPLICITY_CLASSES],
    };
    for path in &args.inputs {
        let parsed = read_structures(path).and_then(|ss| {
            let graphs = ss
                .iter()
                .map(|s| build_periodic_graph(s, args.cutoff).map_err(|e| e.context(s.id())))
                .collect::<Result<Vec<_>>>()?;
            Ok((ss, graphs))
        });
        match parsed {
            Ok((ss, graphs)) => {
                for g in &graphs {
                    *stats.atoms_histogram.entry(g.num_nodes()).or_default() += 1;
                    stats.directed_edges_total += g.edges().len();
                    for (h, c) in stats
                        .multiplicity_histogram
                        .iter_mut()
                        .zip(multiplicity_targets(g).histogram())
                    {
                        *h += c;
                    }
                }
                structures.extend(ss);
            }
            Err(e) => {
                eprintln!("failed: {}: {e}", path.display());
                failed.push(path.display().to_string());
            }
        }
    }
    stats.structures = structures.len();
    stats.directed_edges_mean = stats.directed_edges_total as f64 / structures.len().max(1) as f64;
    stats.failed_files = failed;
    write_jsonl(args.out.join("dataset.jsonl"), &structures)?;
    write_json(&args.out.join("stats.json"), &stats)?;
    write_json(
        &args.out.join(EFFECTIVE_CONFIG),
        &serde_json::json!({ "inputs": args.inputs, "cutoff": args.cutoff }),
    )?;
    println!(
        "{} structures ingested, {} files failed",
        stats.structures,
        stats.failed_files.len()
    );
    Ok(if stats.failed_files.is_empty() { 0 } else { 1 })
}

#[derive(Args, Serialize)]
pub struct PretrainFlags {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lr: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    batch_size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    epochs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    mask_ratio: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    drop_ratio: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    tau: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    layers: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    rbf_count: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    cutoff: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    projector_hidden: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    projector_out: Option<usize>,
    /// Six comma-separated weights, one per multiplicity class.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    class_weights: Option<Vec<f64>>,
    /// `all` or `masked`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    node_scope: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Args)]
pub struct PretrainArgs {
    /// JSON-lines dataset.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Continue from this checkpoint; its config is the base for overrides.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[command(flatten)]
    flags: PretrainFlags,
}

fn training_graphs(structures: &[CrystalStructure], cutoff: f64) -> Result<Vec<TrainingGraph>> {
    structures
        .iter()
        .map(|s| {
            Ok(TrainingGraph::new(
                build_periodic_graph(s, cutoff).map_err(|e| e.context(s.id()))?,
            ))
        })
        .collect()
}

pub fn pretrain(args: PretrainArgs) -> Result<u8> {
    let checkpoint = args.resume.as_deref().map(Checkpoint::load).transpose()?;
    let base = checkpoint
        .as_ref()
        .map(|c| c.config.clone())
        .unwrap_or_default();
    let cfg: PretrainConfig = resolve(&base, args.config.as_deref(), &args.flags)?;
    cfg.validate()?;
    create_dir(&args.out)?;
    write_json(&args.out.join(EFFECTIVE_CONFIG), &cfg)?;
    let data = training_graphs(&read_jsonl(&args.data)?, cfg.cutoff)?;
    let mut trainer = match &checkpoint {
        Some(c) => Trainer::<f64>::resume(c, cfg)?,
        None => Trainer::<f64>::new(cfg)?,
    };
    trainer.run(&data, Some(&args.out))?;
    if let Some(last) = trainer.history.last() {
        println!("epoch {}: L_total {}", last.epoch, last.total);
    }
    Ok(0)
}

#[derive(Args)]
pub struct ExtractArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// JSON-lines dataset to average embeddings over.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

pub fn extract(args: ExtractArgs) -> Result<u8> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let model = ck.model::<f64>()?;
    let structures = read_jsonl(&args.data)?;
    let graphs = structures
        .iter()
        .map(|s| build_periodic_graph(s, ck.config.cutoff))
        .collect::<Result<Vec<_>>>()?;
    let table = extract_embeddings(&model, &graphs)?;
    create_dir(&args.out)?;
    table.save(args.out.join("embeddings.csv"))?;
    table.save(args.out.join("embeddings.json"))?;
    write_json(
        &args.out.join(EFFECTIVE_CONFIG),
        &serde_json::json!({ "checkpoint": args.checkpoint, "data": args.data, "pretrain": ck.config }),
    )?;
    println!(
        "{} elements present, d = {}",
        table.present_elements().len(),
        table.dim()
    );
    Ok(0)
}

#[derive(Args, Serialize)]
pub struct DownstreamFlags {
    /// `baseline` or `pretrained`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    mode: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    embedding_table: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    label_fraction: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    fractions: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    epochs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lr: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    batch_size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    layers: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    rbf_count: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    cutoff: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    adapter_noise: Option<f64>,
}

#[derive(Args)]
pub struct DownstreamArgs {
    /// Labelled JSON-lines dataset.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: DownstreamFlags,
}

struct DownstreamSetup {
    cfg: DownstreamConfig,
    data: Vec<downstream::LabeledGraph>,
    table: Option<ElementEmbeddingTable>,
}

/// Loads config, data and, when `sweep` is set or the mode is pretrained, the
/// embedding table. Baseline runs ignore any table path.
fn downstream_setup(args: &DownstreamArgs, sweep: bool) -> Result<DownstreamSetup> {
    let cfg: DownstreamConfig = resolve(
        &DownstreamConfig::default(),
        args.config.as_deref(),
        &args.flags,
    )?;
    cfg.validate()?;
    let need_table = sweep || cfg.mode == downstream::Mode::Pretrained;
    create_dir(&args.out)?;
    write_json(&args.out.join(EFFECTIVE_CONFIG), &cfg)?;
    let table = match (&cfg.embedding_table, need_table) {
        (Some(path), true) => Some(ElementEmbeddingTable::load(path)?),
        (None, true) => return Err(Error::Validation("an embedding table is required".into())),
        (_, false) => None,
    };
    let data = downstream::prepare_labeled(&read_jsonl(&args.data)?, cfg.cutoff)?;
    Ok(DownstreamSetup { cfg, data, table })
}

pub fn downstream(args: DownstreamArgs) -> Result<u8> {
    let s = downstream_setup(&args, false)?;
    let report = downstream::evaluate::<f64>(&s.data, &s.cfg, s.table.as_ref())?;
    write_json(&args.out.join("report.json"), &report)?;
    println!(
        "{} fraction {}: MAE {} over {} runs",
        report.mode,
        report.fraction,
        report.mean,
        report.maes.len()
    );
    Ok(0)
}

pub fn sweep(args: DownstreamArgs) -> Result<u8> {
    let s = downstream_setup(&args, true)?;
    let table = s.table.as_ref().expect("sweep loads a table");
    let reports = downstream::label_fraction_sweep::<f64>(&s.data, &s.cfg, table)?;
    let rendered = downstream::render_table(&reports);
    write_json(&args.out.join("sweep_report.json"), &reports)?;
    std::fs::write(args.out.join("sweep_table.txt"), &rendered)
        .map_err(|e| Error::io(args.out.join("sweep_table.txt"), e))?;
    print!("{rendered}");
    Ok(0)
}

#[derive(Args)]
pub struct ProjectArgs {
    /// Embedding table (CSV, or JSON by extension).
    #[arg(long)]
    table: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

pub fn project(args: ProjectArgs) -> Result<u8> {
    let table = ElementEmbeddingTable::load(&args.table)?;
    let points = project_table(&table)?;
    create_dir(&args.out)?;
    let path = args.out.join("projection.csv");
    std::fs::write(&path, projection_csv(&points)).map_err(|e| Error::io(&path, e))?;
    write_json(
        &args.out.join(EFFECTIVE_CONFIG),
        &serde_json::json!({ "table": args.table }),
    )?;
    println!("{} elements projected", points.len());
    Ok(0)
}

#[derive(Args, Serialize)]
pub struct SynthFlags {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    count: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_atoms: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    skew: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    id_prefix: Option<String>,
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: SynthFlags,
}

pub fn synth(args: SynthArgs) -> Result<u8> {
    let cfg: SyntheticConfig = resolve(
        &SyntheticConfig::default(),
        args.config.as_deref(),
        &args.flags,
    )?;
    let structures = synthetic::generate(&cfg)?;
    create_dir(&args.out)?;
    write_jsonl(args.out.join("dataset.jsonl"), &structures)?;
    write_json(&args.out.join(EFFECTIVE_CONFIG), &cfg)?;
    println!("{} structures written", structures.len());
    Ok(0)
}
