use serde::{Deserialize, Serialize};

use super::Mode;

/// Relative improvement of `method` over `baseline` in percent; positive when
/// the method's error is lower.
pub fn improvement_pct(baseline: f64, method: f64) -> f64 {
    100.0 * (baseline - method) / baseline
}

/// Test MAEs of repeated runs at one (mode, fraction) setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dim: usize,
    pub fraction: f64,
    pub mode: Mode,
    pub seeds: Vec<u64>,
    pub maes: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; absent for a single run.
    pub std: Option<f64>,
    /// Against the baseline report of the same fraction, for pretrained runs.
    pub improvement_pct: Option<f64>,
}

impl EvalReport {
    pub fn new(dim: usize, fraction: f64, mode: Mode, seeds: Vec<u64>, maes: Vec<f64>) -> Self {
        let n = maes.len() as f64;
        let mean = maes.iter().sum::<f64>() / n;
        let std = (maes.len() >= 2)
            .then(|| (maes.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
        Self {
            dim,
            fraction,
            mode,
            seeds,
            maes,
            mean,
            std,
            improvement_pct: None,
        }
    }

    pub fn with_baseline(mut self, baseline: &EvalReport) -> Self {
        self.improvement_pct = Some(improvement_pct(baseline.mean, self.mean));
        self
    }
}

fn mean_std(r: &EvalReport) -> String {
    match r.std {
        Some(s) => format!("{:.4} ± {:.4}", r.mean, s),
        None => format!("{:.4}", r.mean),
    }
}

/// Plain-text table with one row per fraction: dim, labelled share, baseline
/// and pretrained MAE, improvement.
pub fn render_table(reports: &[EvalReport]) -> String {
    let mut fractions: Vec<f64> = reports.iter().map(|r| r.fraction).collect();
    fractions.sort_by(|a, b| b.total_cmp(a));
    fractions.dedup();
    let headers = ["Dim", "%Labeled", "Baseline", "Pretrained", "Improv.%"];
    let mut rows: Vec<[String; 5]> = Vec::new();
    for f in fractions {
        let find = |m| reports.iter().find(|r| r.fraction == f && r.mode == m);
        let (base, pre) = (find(Mode::Baseline), find(Mode::Pretrained));
        let dim = base.or(pre).map(|r| r.dim).unwrap_or_default();
        rows.push([
            dim.to_string(),
            format!("{}", 100.0 * f),
            base.map(mean_std).unwrap_or_else(|| "-".into()),
            pre.map(mean_std).unwrap_or_else(|| "-".into()),
            pre.and_then(|r| r.improvement_pct)
                .map(|p| format!("{p:+.2}"))
                .unwrap_or_else(|| "-".into()),
        ]);
    }
    let widths: Vec<usize> = (0..5)
        .map(|c| {
            rows.iter()
                .map(|r| r[c].chars().count())
                .chain([headers[c].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect::<Vec<_>>()
            .join(" | ")
    };
    let mut out = line(headers.to_vec());
    out.push('\n');
    out.push_str(
        &widths
            .iter()
            .map(|w| "-".repeat(*w))
            .collect::<Vec<_>>()
            .join("-|-"),
    );
    out.push('\n');
    for r in &rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}
