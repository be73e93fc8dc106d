//! Pretrain on an unlabelled synthetic corpus, then sweep label fractions on
//! a labelled one and print the comparison.

use unate::downstream::{label_fraction_sweep, prepare_labeled, render_table, DownstreamConfig};
use unate::graph::build_periodic_graph;
use unate::synthetic::{generate, SyntheticConfig};
use unate::training::{extract_embeddings, pretrain, PretrainConfig, TrainingGraph};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let get = |i: usize, d: f64| args.get(i).map(|a| a.parse().unwrap()).unwrap_or(d);
    let dim = get(0, 16.0) as usize;
    let pre_epochs = get(1, 50.0) as usize;
    let down_epochs = get(2, 60.0) as usize;
    let n_labeled = get(3, 200.0) as usize;
    let n_pre = get(4, 600.0) as usize;
    let t0 = std::time::Instant::now();

    let pcfg = PretrainConfig {
        dim,
        layers: 2,
        rbf_count: 8,
        cutoff: 4.0,
        batch_size: 32,
        epochs: pre_epochs,
        seed: get(5, 1.0) as u64,
        ..Default::default()
    };
    let corpus = generate(&SyntheticConfig {
        count: n_pre,
        seed: 100,
        ..Default::default()
    })
    .unwrap();
    let data: Vec<TrainingGraph> = corpus
        .iter()
        .map(|s| TrainingGraph::new(build_periodic_graph(s, pcfg.cutoff).unwrap()))
        .collect();
    let t = pretrain::<f64>(&data, &pcfg, None).unwrap();
    println!(
        "pretrain {:?}: {:?}",
        t0.elapsed(),
        t.history.last().unwrap()
    );
    let graphs: Vec<_> = data.iter().map(|g| g.graph.clone()).collect();
    let table = extract_embeddings(&t.model, &graphs).unwrap();

    let labeled = generate(&SyntheticConfig {
        count: n_labeled,
        seed: get(6, 200.0) as u64,
        id_prefix: "lab".into(),
        ..Default::default()
    })
    .unwrap();
    let ld = prepare_labeled(&labeled, 4.0).unwrap();
    let dcfg = DownstreamConfig {
        dim,
        layers: 2,
        rbf_count: 8,
        cutoff: 4.0,
        epochs: down_epochs,
        batch_size: 16,
        ..Default::default()
    };
    let reports = label_fraction_sweep::<f64>(&ld, &dcfg, &table).unwrap();
    println!("{}", render_table(&reports));
    let (b, p) = (&reports[4].maes, &reports[5].maes);
    let wins = b.iter().zip(p).filter(|(b, p)| p < b).count();
    println!("wins at 0.25: {wins}/4");
    println!("total {:?}", t0.elapsed());
}
