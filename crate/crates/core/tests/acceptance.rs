//! Acceptance checks, one line per criterion. Exits non-zero if any fails.

mod common;

use std::time::{Duration, Instant};

use unate::augment::augment;
use unate::contrastive::{adjacent_pairing, info_nce};
use unate::decoders::{
    adj_weighted_ce, all_pairs, node_nll, AdjacencyDecoder, NodeDecoder, DEFAULT_CLASS_WEIGHTS,
};
use unate::downstream::{
    improvement_pct, label_fraction_sweep, prepare_labeled, render_table, DownstreamConfig, Mode,
};
use unate::graph::{build_periodic_graph, multiplicity_targets};
use unate::nn::{Bound, Init, ParamSet};
use unate::numerics::{grad_check, Tensor};
use unate::synthetic::{generate, SyntheticConfig};
use unate::training::{
    draw_views, extract_embeddings, pretrain, pretrain_loss, read_log, ElementEmbeddingTable,
    PretrainConfig, PretrainModel, TrainingGraph, LOG_FILE,
};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit_s: u64) -> Result<(), String> {
    ensure(
        elapsed <= Duration::from_secs(limit_s),
        format!("took {:.1} s, limit {limit_s} s", elapsed.as_secs_f64()),
    )
}

fn graphs(cfg: &SyntheticConfig, cutoff: f64) -> Vec<TrainingGraph> {
    generate(cfg)
        .unwrap()
        .iter()
        .map(|s| TrainingGraph::new(build_periodic_graph(s, cutoff).unwrap()))
        .collect()
}

fn pbc_oracle() -> Check {
    let start = Instant::now();
    let mut r = common::rng(1);
    let mut edges = 0;
    for k in 0..50 {
        let s = common::random_cell(&mut r, 6, k % 2 == 0, &format!("c{k}"));
        let g = build_periodic_graph(&s, 5.0).map_err(|e| e.to_string())?;
        common::matches_oracle(&g, &common::brute_force_edges(&s, 5.0))
            .map_err(|e| format!("cell {k}: {e}"))?;
        edges += g.edges().len();
    }
    within(start.elapsed(), 10)?;
    Ok(format!(
        "50 cells, {edges} edges identical, {:.2} s",
        start.elapsed().as_secs_f64()
    ))
}

fn gradient_integrity() -> Check {
    let start = Instant::now();
    let cfg = PretrainConfig {
        dim: 8,
        layers: 2,
        rbf_count: 4,
        cutoff: 4.0,
        drop_ratio: 0.3,
        seed: 5,
        ..Default::default()
    };
    ensure(
        (cfg.alpha, cfg.beta, cfg.gamma) == (225.0, 4.0, 3.0),
        "default loss weights changed",
    )?;
    let data = graphs(
        &SyntheticConfig {
            count: 2,
            seed: 9,
            max_atoms: 4,
            ..Default::default()
        },
        cfg.cutoff,
    );
    let batch: Vec<_> = data.iter().collect();
    let model = PretrainModel::<f64>::new(&cfg).map_err(|e| e.to_string())?;
    let views = draw_views(&batch, &cfg, &[1, 2]).map_err(|e| e.to_string())?;
    let report = grad_check(
        |_tape, vars| {
            let p = Bound::from_vars(vars.to_vec());
            Ok(pretrain_loss(&model, &batch, &views, &cfg, &p)?.total)
        },
        model.params.tensors(),
        1e-5,
    )
    .map_err(|e| e.to_string())?;
    ensure(
        report.max_rel_error < 1e-4,
        format!("max relative error {:.3e}", report.max_rel_error),
    )?;
    within(start.elapsed(), 60)?;
    Ok(format!(
        "{} parameters, max relative error {:.2e}, {:.1} s",
        report.checked,
        report.max_rel_error,
        start.elapsed().as_secs_f64()
    ))
}

fn analytic_values() -> Check {
    let mut params = ParamSet::<f64>::new();
    let mut init = Init::new(0);
    let node = NodeDecoder::new(&mut params, &mut init, 6);
    let adj = AdjacencyDecoder::new(&mut params, &mut init, 6);
    for t in params.tensors_mut() {
        *t = Tensor::zeros(t.shape());
    }
    let h: Tensor<f64> = init.normal(&[4, 6], 1.0);
    let z = [1u8, 8, 26, 92];
    let l_node = node_nll(&node.probabilities(&h, &params).unwrap(), &z, &[0, 1, 2, 3]).unwrap();

    let s = common::random_cell(&mut common::rng(3), 4, false, "t");
    let g = build_periodic_graph(&s, 5.0).unwrap();
    let pairs = all_pairs(g.num_nodes());
    let hh: Tensor<f64> = init.normal(&[g.num_nodes(), 6], 1.0);
    let probs = adj.probabilities(&hh, &pairs, &params).unwrap();
    let l_adj = adj_weighted_ce(
        &probs,
        &multiplicity_targets(&g),
        &pairs,
        &DEFAULT_CLASS_WEIGHTS,
    )
    .unwrap();

    ensure(
        (l_node - 118f64.ln()).abs() <= 1e-9,
        format!("L_node = {l_node}"),
    )?;
    ensure(
        (l_adj - 6f64.ln()).abs() <= 1e-9,
        format!("L_adj = {l_adj}"),
    )?;
    for n in [2usize, 4, 8] {
        let v = info_nce(
            &Tensor::<f64>::filled(&[2 * n, 5], 0.3),
            &adjacent_pairing(2 * n),
            0.1,
        )
        .unwrap();
        ensure(
            (v - ((2 * n - 1) as f64).ln()).abs() <= 1e-9,
            format!("L_InfoNCE = {v} for N = {n}"),
        )?;
    }
    Ok("ln 118, ln 6, ln(2N-1) for N = 2, 4, 8".into())
}

fn overfitting() -> Check {
    let start = Instant::now();
    let cfg = PretrainConfig {
        dim: 16,
        layers: 2,
        rbf_count: 8,
        cutoff: 4.0,
        batch_size: 16,
        epochs: 200,
        seed: 1,
        ..Default::default()
    };
    let data = graphs(
        &SyntheticConfig {
            count: 16,
            seed: 7,
            ..Default::default()
        },
        cfg.cutoff,
    );
    let t = pretrain::<f64>(&data, &cfg, None).map_err(|e| e.to_string())?;
    let first = t.history[0].total;
    let last = t.history.last().unwrap().total;
    let drop = 1.0 - last / first;
    ensure(
        drop >= 0.9,
        format!("loss fell {:.1}% ({first:.3} -> {last:.3})", 100.0 * drop),
    )?;
    within(start.elapsed(), 300)?;
    Ok(format!(
        "L_total {first:.2} -> {last:.2} ({:.1}% drop), {:.1} s",
        100.0 * drop,
        start.elapsed().as_secs_f64()
    ))
}

fn transfer_contract() -> Check {
    let cfg = PretrainConfig {
        dim: 8,
        layers: 1,
        rbf_count: 4,
        cutoff: 4.0,
        batch_size: 8,
        epochs: 3,
        ..Default::default()
    };
    let data = graphs(
        &SyntheticConfig {
            count: 24,
            seed: 4,
            ..Default::default()
        },
        cfg.cutoff,
    );
    let t = pretrain::<f64>(&data, &cfg, None).map_err(|e| e.to_string())?;
    let gs: Vec<_> = data.iter().map(|g| g.graph.clone()).collect();
    let table = extract_embeddings(&t.model, &gs).map_err(|e| e.to_string())?;
    let mut present = 0;
    for z in 1..=118u8 {
        let norm = table.row(z).iter().map(|x| x * x).sum::<f64>().sqrt();
        if table.is_present(z) {
            present += 1;
            ensure((norm - 1.0).abs() <= 1e-9, format!("Z = {z} norm {norm}"))?;
        } else {
            ensure(
                norm == 0.0 && table.counts()[z as usize - 1] == 0,
                format!("absent Z = {z} not flagged"),
            )?;
        }
    }
    let back = ElementEmbeddingTable::from_csv(&table.to_csv()).map_err(|e| e.to_string())?;
    let bits = |t: &ElementEmbeddingTable| {
        t.rows()
            .data()
            .iter()
            .map(|x| x.to_bits())
            .collect::<Vec<_>>()
    };
    ensure(
        bits(&back) == bits(&table) && back.counts() == table.counts(),
        "CSV round trip not exact",
    )?;
    Ok(format!(
        "{present} present rows unit-norm, {} absent flagged, CSV exact",
        118 - present
    ))
}

fn denoising_contract() -> Check {
    let data = graphs(
        &SyntheticConfig {
            count: 6,
            seed: 8,
            ..Default::default()
        },
        4.0,
    );
    let mut changed = 0;
    for g in &data {
        let targets = multiplicity_targets(&g.graph);
        let z = g.graph.atomic_numbers().to_vec();
        for seed in 0..25 {
            let v = augment(&g.graph, 0.3, 0.3, seed).map_err(|e| e.to_string())?;
            if v.graph != g.graph || !v.masked.is_empty() {
                changed += 1;
            }
            ensure(
                multiplicity_targets(&g.graph) == targets,
                "adjacency targets changed",
            )?;
            ensure(
                g.targets == targets && g.graph.atomic_numbers() == z,
                "stored targets changed",
            )?;
            ensure(
                v.graph.atomic_numbers() == z,
                "node targets differ on the view",
            )?;
        }
    }
    ensure(changed == 6 * 25, "augmentation left a view unchanged")?;
    Ok(format!("{changed} augmented views, targets identical"))
}

fn sweep_machinery() -> Check {
    let start = Instant::now();
    let dim = 16;
    let pcfg = PretrainConfig {
        dim,
        layers: 2,
        rbf_count: 8,
        cutoff: 4.0,
        batch_size: 32,
        epochs: 50,
        seed: 1,
        ..Default::default()
    };
    let corpus = graphs(
        &SyntheticConfig {
            count: 600,
            seed: 100,
            ..Default::default()
        },
        pcfg.cutoff,
    );
    let t = pretrain::<f64>(&corpus, &pcfg, None).map_err(|e| e.to_string())?;
    let gs: Vec<_> = corpus.iter().map(|g| g.graph.clone()).collect();
    let table = extract_embeddings(&t.model, &gs).map_err(|e| e.to_string())?;

    let labeled = generate(&SyntheticConfig {
        count: 200,
        seed: 200,
        id_prefix: "lab".into(),
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    let data = prepare_labeled(&labeled, 4.0).map_err(|e| e.to_string())?;
    let dcfg = DownstreamConfig {
        dim,
        layers: 2,
        rbf_count: 8,
        cutoff: 4.0,
        epochs: 60,
        batch_size: 16,
        fractions: vec![1.0, 0.5, 0.25],
        seeds: vec![0, 1, 2, 3],
        ..Default::default()
    };
    let reports = label_fraction_sweep::<f64>(&data, &dcfg, &table).map_err(|e| e.to_string())?;
    let rendered = render_table(&reports);
    for line in rendered.lines() {
        println!("      {line}");
    }
    ensure(
        reports.len() == 6 && rendered.lines().count() == 5,
        "report is not Table-2 shaped",
    )?;
    let find = |m| {
        reports
            .iter()
            .find(|r| r.fraction == 0.25 && r.mode == m)
            .unwrap()
    };
    let (base, pre) = (find(Mode::Baseline), find(Mode::Pretrained));
    let wins = base
        .maes
        .iter()
        .zip(&pre.maes)
        .filter(|(b, p)| p < b)
        .count();
    within(start.elapsed(), 900)?;
    ensure(
        wins >= 3,
        format!("pretrained better in {wins}/4 seeds at 25%"),
    )?;
    Ok(format!(
        "pretrained better in {wins}/4 seeds at 25%, {:.0} s",
        start.elapsed().as_secs_f64()
    ))
}

fn improvement_arithmetic() -> Check {
    let t1 = improvement_pct(194.02, 188.78);
    let t2 = improvement_pct(289.61, 260.63);
    ensure((t1 - 2.7).abs() <= 0.05, format!("{t1}"))?;
    ensure((t2 - 10.0).abs() <= 0.05, format!("{t2}"))?;
    Ok(format!("{t1:.2}% and {t2:.2}%"))
}

fn determinism() -> Check {
    let cfg = PretrainConfig {
        dim: 8,
        layers: 2,
        rbf_count: 4,
        cutoff: 4.0,
        batch_size: 4,
        epochs: 5,
        seed: 42,
        ..Default::default()
    };
    let data = graphs(
        &SyntheticConfig {
            count: 10,
            seed: 6,
            ..Default::default()
        },
        cfg.cutoff,
    );
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut logs = Vec::new();
    let mut params = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let t = pretrain::<f64>(&data, &cfg, Some(&out)).map_err(|e| e.to_string())?;
        let log = read_log(out.join(LOG_FILE)).map_err(|e| e.to_string())?;
        logs.push(
            log.iter()
                .map(|r| {
                    (
                        r.epoch,
                        [r.node, r.adj, r.infonce, r.total].map(f64::to_bits),
                    )
                })
                .collect::<Vec<_>>(),
        );
        params.push(
            t.model
                .params
                .tensors()
                .iter()
                .flat_map(|t| t.data().iter().map(|x| x.to_bits()))
                .collect::<Vec<_>>(),
        );
    }
    ensure(logs[0].len() == 5 && logs[0] == logs[1], "loss logs differ")?;
    ensure(params[0] == params[1], "final parameters differ")?;
    Ok("5 epochs, loss logs and parameters bitwise identical".into())
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("PBC oracle equivalence", pbc_oracle),
        ("Gradient integrity", gradient_integrity),
        ("Analytic loss values", analytic_values),
        ("Overfitting sanity", overfitting),
        ("Transfer contract", transfer_contract),
        ("Denoising contract", denoising_contract),
        ("Sweep machinery", sweep_machinery),
        ("Improvement arithmetic", improvement_arithmetic),
        ("Determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {}. {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {}. {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
