//! Loss drop over a long run on a small synthetic set.

use unate::graph::build_periodic_graph;
use unate::synthetic::{generate, SyntheticConfig};
use unate::training::{pretrain, PretrainConfig, TrainingGraph};

fn main() {
    let args: Vec<f64> = std::env::args()
        .skip(1)
        .map(|a| a.parse().unwrap())
        .collect();
    let lr = args.first().copied().unwrap_or(3e-2);
    let dim = args.get(1).copied().unwrap_or(16.0) as usize;
    let cfg = PretrainConfig {
        dim,
        layers: 2,
        rbf_count: 8,
        cutoff: 4.0,
        batch_size: 16,
        epochs: 200,
        lr,
        seed: args.get(2).copied().unwrap_or(1.0) as u64,
        ..Default::default()
    };
    let syn = SyntheticConfig {
        count: 16,
        seed: 7,
        ..Default::default()
    };
    let data: Vec<TrainingGraph> = generate(&syn)
        .unwrap()
        .iter()
        .map(|s| TrainingGraph::new(build_periodic_graph(s, cfg.cutoff).unwrap()))
        .collect();
    let t0 = std::time::Instant::now();
    let t = pretrain::<f64>(&data, &cfg, None).unwrap();
    let h = &t.history;
    for r in h.iter().step_by(20).chain(h.last()) {
        println!(
            "{:4} total {:10.4} node {:.4} adj {:.4} nce {:.4}",
            r.epoch, r.total, r.node, r.adj, r.infonce
        );
    }
    println!(
        "drop {:.2}%  {:?}",
        100.0 * (1.0 - h.last().unwrap().total / h[0].total),
        t0.elapsed()
    );
}
