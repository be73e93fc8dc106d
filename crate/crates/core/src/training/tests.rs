use super::*;
use crate::decoders::{adj_weighted_ce, node_nll, NodeLossScope};
use crate::graph::{build_periodic_graph, multiplicity_targets};
use crate::nn::Bound;
use crate::numerics::{grad_check, Tensor};
use crate::synthetic::{generate, SyntheticConfig};

fn small_config() -> PretrainConfig {
    PretrainConfig {
        dim: 8,
        layers: 1,
        rbf_count: 4,
        cutoff: 4.0,
        batch_size: 2,
        epochs: 2,
        seed: 11,
        ..Default::default()
    }
}

fn dataset(n: usize, cutoff: f64) -> Vec<TrainingGraph> {
    let cfg = SyntheticConfig {
        count: n,
        seed: 3,
        max_atoms: 4,
        ..Default::default()
    };
    generate(&cfg)
        .unwrap()
        .iter()
        .map(|s| TrainingGraph::new(build_periodic_graph(s, cutoff).unwrap()))
        .collect()
}

#[test]
fn zero_weights_leave_parameters_unchanged() {
    let cfg = PretrainConfig {
        alpha: 0.0,
        beta: 0.0,
        gamma: 0.0,
        ..small_config()
    };
    let data = dataset(2, cfg.cutoff);
    let mut model = PretrainModel::<f64>::new(&cfg).unwrap();
    let before = model.params.clone();
    let mut adam = AdamState::new(cfg.adam(), model.params.tensors());
    let batch: Vec<_> = data.iter().collect();
    let parts = pretrain_step(&mut model, &mut adam, &batch, &cfg, &[1, 2]).unwrap();
    assert_eq!(parts.total, 0.0);
    assert!(parts.node > 0.0 && parts.adj > 0.0);
    assert_eq!(model.params, before);
}

#[test]
fn total_is_weighted_sum() {
    let data = dataset(3, 4.0);
    let batch: Vec<_> = data.iter().collect();
    for (a, b, c) in [(225.0, 4.0, 3.0), (0.3, 17.0, 0.0), (1.0, 1.0, 1.0)] {
        let cfg = PretrainConfig {
            alpha: a,
            beta: b,
            gamma: c,
            ..small_config()
        };
        let model = PretrainModel::<f64>::new(&cfg).unwrap();
        let views = draw_views(&batch, &cfg, &[5, 6, 7]).unwrap();
        let p = evaluate_loss(&model, &batch, &views, &cfg).unwrap();
        let sum = a * p.node + b * p.adj + c * p.infonce;
        assert!((p.total - sum).abs() <= 1e-12 * sum.abs().max(1.0));
    }
}

#[test]
fn losses_match_plain_evaluation_against_original_targets() {
    for scope in [NodeLossScope::All, NodeLossScope::Masked] {
        let cfg = PretrainConfig {
            mask_ratio: 0.4,
            drop_ratio: 0.5,
            node_scope: scope,
            ..small_config()
        };
        let data = dataset(2, cfg.cutoff);
        let batch: Vec<_> = data.iter().collect();
        let model = PretrainModel::<f64>::new(&cfg).unwrap();
        let views = draw_views(&batch, &cfg, &[21, 22]).unwrap();
        assert!(views.iter().any(|v| !v.dropped.is_empty()));
        let got = evaluate_loss(&model, &batch, &views, &cfg).unwrap();

        let (mut node, mut adj) = (0.0, 0.0);
        for (v, view) in views.iter().enumerate() {
            let original = &data[v / 2];
            let gb =
                crate::encoder::GraphBatch::<f64>::from_views(&[view], &cfg.encoder()).unwrap();
            let tape = Tape::new();
            let p = model.params.bind_frozen(&tape);
            let h = model.encoder.encode(&gb, &p).unwrap().value();
            let probs = model.node_decoder.probabilities(&h, &model.params).unwrap();
            let scope_nodes: Vec<usize> = match scope {
                NodeLossScope::All => (0..h.rows()).collect(),
                NodeLossScope::Masked => view.masked.clone(),
            };
            node += node_nll(&probs, original.graph.atomic_numbers(), &scope_nodes).unwrap();
            let pairs = crate::decoders::all_pairs(h.rows());
            let probs = model
                .adj_decoder
                .probabilities(&h, &pairs, &model.params)
                .unwrap();
            adj += adj_weighted_ce(&probs, &original.targets, &pairs, &cfg.class_weights).unwrap();
        }
        assert!((got.node - node / 4.0).abs() < 1e-12, "{scope:?}");
        assert!((got.adj - adj / 4.0).abs() < 1e-12, "{scope:?}");
    }
}

#[test]
fn targets_do_not_depend_on_augmentation() {
    let data = dataset(4, 4.0);
    let cfg = PretrainConfig {
        drop_ratio: 0.6,
        ..small_config()
    };
    for g in &data {
        let before = g.targets.clone();
        for seed in 0..10 {
            let _ =
                crate::augment::two_views(&g.graph, cfg.mask_ratio, cfg.drop_ratio, seed).unwrap();
            assert_eq!(multiplicity_targets(&g.graph), before);
        }
    }
}

#[test]
fn uniform_heads_give_analytic_losses() {
    let cfg = small_config();
    let data = dataset(2, cfg.cutoff);
    let batch: Vec<_> = data.iter().collect();
    let mut model = PretrainModel::<f64>::new(&cfg).unwrap();
    let zero = |model: &mut PretrainModel<f64>, id| {
        let t = model.params.get_mut(id);
        *t = Tensor::zeros(t.shape());
    };
    for id in [model.node_decoder.linear.w, model.node_decoder.linear.b] {
        zero(&mut model, id);
    }
    for id in [model.adj_decoder.linear.w, model.adj_decoder.linear.b] {
        zero(&mut model, id);
    }
    let w2 = model.projector.mlp.second.w;
    zero(&mut model, w2);
    *model.params.get_mut(model.projector.mlp.second.b) = Tensor::filled(&[8], 0.25);
    let views = draw_views(&batch, &cfg, &[1, 2]).unwrap();
    let p = evaluate_loss(&model, &batch, &views, &cfg).unwrap();
    assert!((p.node - 118f64.ln()).abs() < 1e-9);
    assert!((p.adj - 6f64.ln()).abs() < 1e-9);
    assert!((p.infonce - 3f64.ln()).abs() < 1e-9);
}

#[test]
fn end_to_end_gradient_check() {
    let cfg = PretrainConfig {
        drop_ratio: 0.3,
        ..small_config()
    };
    let data = dataset(2, cfg.cutoff);
    let batch: Vec<_> = data.iter().collect();
    let model = PretrainModel::<f64>::new(&cfg).unwrap();
    let views = draw_views(&batch, &cfg, &[8, 9]).unwrap();
    let report = grad_check(
        |_tape, vars| {
            let p = Bound::from_vars(vars.to_vec());
            Ok(pretrain_loss(&model, &batch, &views, &cfg, &p)?.total)
        },
        model.params.tensors(),
        1e-5,
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

#[test]
fn step_is_deterministic() {
    let cfg = small_config();
    let data = dataset(2, cfg.cutoff);
    let batch: Vec<_> = data.iter().collect();
    let run = || {
        let mut model = PretrainModel::<f64>::new(&cfg).unwrap();
        let mut adam = AdamState::new(cfg.adam(), model.params.tensors());
        let a = pretrain_step(&mut model, &mut adam, &batch, &cfg, &[3, 4]).unwrap();
        let b = pretrain_step(&mut model, &mut adam, &batch, &cfg, &[3, 4]).unwrap();
        (a, b, model.params)
    };
    assert_eq!(run(), run());
}

#[test]
fn non_finite_parameters_are_reported() {
    let cfg = small_config();
    let data = dataset(2, cfg.cutoff);
    let batch: Vec<_> = data.iter().collect();
    let mut model = PretrainModel::<f64>::new(&cfg).unwrap();
    let table = model.params.find("encoder.atom_table").unwrap();
    model.params.get_mut(table).data_mut().fill(f64::NAN);
    let mut adam = AdamState::new(cfg.adam(), model.params.tensors());
    let err = pretrain_step(&mut model, &mut adam, &batch, &cfg, &[1, 2]).unwrap_err();
    assert!(matches!(err, Error::Numerics(_)), "{err}");
}

#[test]
fn batching() {
    let order: Vec<usize> = (0..7).collect();
    let b = epoch_batches(&order, 3);
    assert_eq!(b, vec![&order[0..3], &order[3..7]]);
    assert_eq!(epoch_batches(&order, 2).len(), 3);
    assert_eq!(epoch_batches(&order, 7), vec![&order[..]]);
    assert_eq!(epoch_batches(&order, 100), vec![&order[..]]);
}

#[test]
fn single_epoch_large_batch_is_one_step() {
    let cfg = PretrainConfig {
        epochs: 1,
        batch_size: 16,
        ..small_config()
    };
    let data = dataset(5, cfg.cutoff);
    let t = pretrain::<f64>(&data, &cfg, None).unwrap();
    assert_eq!(t.adam.step, 1);
    assert_eq!(t.history.len(), 1);
    assert!(pretrain::<f64>(&data[..1], &cfg, None).is_err());
}

#[test]
fn resume_matches_uninterrupted_run() {
    let cfg = PretrainConfig {
        epochs: 3,
        batch_size: 3,
        ..small_config()
    };
    let data = dataset(6, cfg.cutoff);
    let dir = tempfile::tempdir().unwrap();
    let full = pretrain::<f64>(&data, &cfg, Some(dir.path())).unwrap();

    let short = PretrainConfig {
        epochs: 1,
        ..cfg.clone()
    };
    let part_dir = dir.path().join("part");
    pretrain::<f64>(&data, &short, Some(&part_dir)).unwrap();
    let ck = Checkpoint::load(part_dir.join(FINAL_CHECKPOINT)).unwrap();
    assert_eq!(ck.epoch, 1);
    let mut resumed = Trainer::<f64>::resume(&ck, cfg.clone()).unwrap();
    resumed.run(&data, Some(&part_dir)).unwrap();

    let strip = |h: &[EpochRecord]| {
        h.iter()
            .map(|r| (r.epoch, r.node, r.adj, r.infonce, r.total))
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&resumed.history), strip(&full.history));
    assert_eq!(resumed.model.params, full.model.params);
    assert_eq!(
        strip(&read_log(part_dir.join(LOG_FILE)).unwrap()),
        strip(&full.history)
    );
    assert!(dir.path().join(BEST_CHECKPOINT).exists());

    let other = PretrainConfig { lr: 0.1, ..cfg };
    assert!(Trainer::<f64>::resume(&ck, other).is_err());
}

#[test]
fn checkpoint_round_trip() {
    let cfg = small_config();
    let data = dataset(2, cfg.cutoff);
    let t = pretrain::<f64>(&data, &cfg, None).unwrap();
    let ck = t.checkpoint();
    let bytes = ck.to_bytes();
    assert_eq!(&bytes[..8], b"UNATECK1");
    let back = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(back, ck);
    assert_eq!(back.model::<f64>().unwrap().params, t.model.params);
    assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 4]).is_err());
    assert!(Checkpoint::from_bytes(b"garbage").is_err());
}

#[test]
fn f32_training_runs() {
    let cfg = small_config();
    let data = dataset(2, cfg.cutoff);
    let t = pretrain::<f32>(&data, &cfg, None).unwrap();
    assert!(t.history.iter().all(|r| r.total.is_finite()));
}

#[test]
fn extraction_contract() {
    let cfg = small_config();
    let data = dataset(8, cfg.cutoff);
    let model = PretrainModel::<f64>::new(&cfg).unwrap();
    let graphs: Vec<_> = data.iter().map(|g| g.graph.clone()).collect();
    let table = extract_embeddings(&model, &graphs).unwrap();

    let mut counts = vec![0u64; 118];
    for g in &graphs {
        for &z in g.atomic_numbers() {
            counts[z as usize - 1] += 1;
        }
    }
    assert_eq!(table.counts(), &counts[..]);
    for z in 1..=118u8 {
        let norm = table.row(z).iter().map(|x| x * x).sum::<f64>().sqrt();
        if table.is_present(z) {
            assert!((norm - 1.0).abs() < 1e-9);
        } else {
            assert_eq!(norm, 0.0);
        }
    }

    // element seen exactly once equals that node's normalized embedding
    let single = graphs[0].permuted(&(0..graphs[0].num_nodes()).collect::<Vec<_>>());
    let t1 = extract_embeddings(&model, std::slice::from_ref(&single)).unwrap();
    let gb = crate::encoder::GraphBatch::<f64>::from_graphs(&[&single], &cfg.encoder()).unwrap();
    let tape = Tape::new();
    let h = model
        .encoder
        .encode(&gb, &model.params.bind_frozen(&tape))
        .unwrap()
        .value();
    for (i, &z) in single.atomic_numbers().iter().enumerate() {
        if t1.counts()[z as usize - 1] == 1 {
            let norm = h.row(i).iter().map(|x| x * x).sum::<f64>().sqrt();
            for (a, b) in t1.row(z).iter().zip(h.row(i)) {
                assert!((a - b / norm).abs() < 1e-12);
            }
        }
    }

    assert_eq!(
        ElementEmbeddingTable::from_csv(&table.to_csv()).unwrap(),
        table
    );
    assert_eq!(
        ElementEmbeddingTable::from_json(&table.to_json()).unwrap(),
        table
    );
    assert!(extract_embeddings(&model, &[]).is_err());
}

#[test]
fn table_validation() {
    let mut rows = Tensor::<f64>::zeros(&[118, 2]);
    rows.data_mut()[0] = 1.0;
    let mut counts = vec![0; 118];
    counts[0] = 3;
    assert!(ElementEmbeddingTable::new(rows.clone(), counts.clone()).is_ok());
    counts[1] = 1;
    assert!(ElementEmbeddingTable::new(rows.clone(), counts).is_err());
    let mut counts = vec![0; 118];
    counts[0] = 3;
    rows.data_mut()[5] = 0.5;
    assert!(ElementEmbeddingTable::new(rows, counts).is_err());
    assert!(ElementEmbeddingTable::from_csv("Z,symbol,count\n").is_err());
    assert!(ElementEmbeddingTable::from_csv("Z,symbol,count,e0\n1,H,1,0.5\n").is_err());
}
