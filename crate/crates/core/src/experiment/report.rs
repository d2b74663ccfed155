//! CSV and JSON outputs of the experiment harness.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AblationRow, ExperimentConfig, GranularityRow, LearningCurve, MetricReport, SvrGnbLearner};
use crate::augment::{pool_distances, selection_probs};
use crate::error::{Error, Result};
use crate::learners::Gamma;
use crate::meta::MetaInstance;
use crate::synth::LANDMARK_K;

/// Creates `dir`, refusing a non-empty one unless `force` is set.
pub fn prepare_out_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let occupied = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?.next().is_some();
        if occupied && !force {
            return Err(Error::AlreadyExists(dir.to_path_buf()));
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Constants a rerun must hold fixed, recorded alongside the configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinnedDefaults {
    pub landmark_knn_k: usize,
    pub landmark_knn_weighting: String,
    pub svr_c: f64,
    pub svr_epsilon: f64,
    pub svr_gamma: String,
    pub svr_tol: f64,
    pub svr_max_iter_per_row: usize,
    pub margin_alpha: f64,
    pub fold_seed_rule: String,
    pub synthetic_draw: String,
}

impl PinnedDefaults {
    pub fn new(cfg: &ExperimentConfig, learner: &SvrGnbLearner) -> Self {
        let p = &learner.svr;
        PinnedDefaults {
            landmark_knn_k: LANDMARK_K,
            landmark_knn_weighting: "uniform".into(),
            svr_c: p.c,
            svr_epsilon: p.epsilon,
            svr_gamma: match p.gamma {
                Gamma::Scale => "scale".into(),
                Gamma::Value(g) => g.to_string(),
            },
            svr_tol: p.tol,
            svr_max_iter_per_row: p.max_iter_per_row,
            margin_alpha: cfg.alpha,
            fold_seed_rule: "kfold_shuffled(n_real, folds, seed + repeat)".into(),
            synthetic_draw: "one subset per (seed, repeat), seeded by mix(seed, repeat), shared by all folds".into(),
        }
    }
}

/// Everything needed to rerun an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub learner: String,
    pub config: ExperimentConfig,
    pub inputs: Vec<String>,
    pub n_real: usize,
    pub pool_sizes: Vec<usize>,
    #[serde(default)]
    pub n_grid: Vec<usize>,
    pub pinned: PinnedDefaults,
}

pub fn write_manifest(dir: &Path, m: &RunManifest) -> Result<()> {
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(m)?).map_err(|e| Error::io(&path, e))
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn fmt(v: f64) -> String {
    v.to_string()
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::Writer::from_path(path)?)
}

fn finish(mut w: csv::Writer<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `<prefix>_units.csv` (one line per seed and repeat) and
/// `<prefix>_summary.csv` (one line per metric).
pub fn write_condition(dir: &Path, prefix: &str, r: &MetricReport) -> Result<()> {
    let path = dir.join(format!("{prefix}_units.csv"));
    let mut w = writer(&path)?;
    w.write_record([
        "seed",
        "repeat",
        "fold_hash",
        "synthetic_used",
        "r2",
        "hamming_loss",
        "subset_accuracy",
    ])?;
    for u in &r.units {
        w.write_record([
            u.seed.to_string(),
            u.repeat.to_string(),
            u.fold_hash.clone(),
            u.synthetic_used.to_string(),
            opt(u.r2),
            opt(u.hamming_loss),
            opt(u.subset_accuracy),
        ])?;
    }
    finish(w, &path)?;

    let path = dir.join(format!("{prefix}_summary.csv"));
    let mut w = writer(&path)?;
    w.write_record(["metric", "mean", "std", "mean_within_seed_std", "per_seed"])?;
    for s in &r.metrics {
        let seeds: Vec<String> = s.per_seed.iter().map(|v| fmt(*v)).collect();
        w.write_record([
            s.metric.name().to_string(),
            fmt(s.mean),
            fmt(s.std),
            fmt(s.mean_within_seed_std),
            seeds.join(";"),
        ])?;
    }
    finish(w, &path)
}

pub fn write_ablation(path: &Path, rows: &[AblationRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "metric",
        "direction",
        "none",
        "margin",
        "uniform",
        "delta_margin_vs_none_pct",
        "delta_uniform_vs_none_pct",
        "delta_margin_vs_uniform_pct",
    ])?;
    for r in rows {
        w.write_record([
            r.metric.name().to_string(),
            r.direction.clone(),
            fmt(r.none),
            fmt(r.margin),
            fmt(r.uniform),
            format!("{:.2}", r.delta_margin_vs_none),
            format!("{:.2}", r.delta_uniform_vs_none),
            format!("{:.2}", r.delta_margin_vs_uniform),
        ])?;
    }
    finish(w, path)
}

/// Writes `learning_curve.csv`, `h2_pvalues.csv` and `h1_endpoint.csv`.
pub fn write_learning_curve(dir: &Path, c: &LearningCurve) -> Result<()> {
    let path = dir.join("learning_curve.csv");
    let mut w = writer(&path)?;
    w.write_record([
        "n_syn",
        "metric",
        "mean_none",
        "mean_uniform",
        "mean_margin",
        "t",
        "p",
        "mean_diff",
    ])?;
    for r in &c.rows {
        w.write_record([
            r.n_syn.to_string(),
            r.metric.name().to_string(),
            fmt(r.mean_none),
            fmt(r.mean_uniform),
            fmt(r.mean_margin),
            opt(r.test.as_ref().map(|t| t.statistic)),
            opt(r.test.as_ref().map(|t| t.p_value)),
            opt(r.test.as_ref().and_then(|t| t.mean_diff)),
        ])?;
    }
    finish(w, &path)?;

    let path = dir.join("h2_pvalues.csv");
    let mut w = writer(&path)?;
    w.write_record(["n_syn", "metric", "t", "p", "degenerate"])?;
    for r in &c.rows {
        if let Some(t) = &r.test {
            w.write_record([
                r.n_syn.to_string(),
                r.metric.name().to_string(),
                fmt(t.statistic),
                fmt(t.p_value),
                t.degenerate.to_string(),
            ])?;
        }
    }
    finish(w, &path)?;

    let path = dir.join("h1_endpoint.csv");
    let mut w = writer(&path)?;
    w.write_record([
        "metric",
        "n_syn",
        "mean_augmented",
        "mean_none",
        "mean_diff",
        "ci_low",
        "ci_high",
        "t",
        "p",
    ])?;
    for e in &c.endpoint {
        let (lo, hi) = match e.test.ci {
            Some((lo, hi)) => (Some(lo), Some(hi)),
            None => (None, None),
        };
        w.write_record([
            e.metric.name().to_string(),
            e.n_syn.to_string(),
            fmt(e.mean_augmented),
            fmt(e.mean_none),
            opt(e.test.mean_diff),
            opt(lo),
            opt(hi),
            fmt(e.test.statistic),
            fmt(e.test.p_value),
        ])?;
    }
    finish(w, &path)
}

pub fn write_granularity(path: &Path, rows: &[GranularityRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "metric",
        "mean_a",
        "mean_b",
        "mean_diff",
        "ci_low",
        "ci_high",
        "t",
        "p",
        "favours",
    ])?;
    for r in rows {
        w.write_record([
            r.metric.name().to_string(),
            fmt(r.mean_a),
            fmt(r.mean_b),
            fmt(r.mean_diff),
            fmt(r.ci_low),
            fmt(r.ci_high),
            fmt(r.t),
            fmt(r.p),
            r.favours.clone(),
        ])?;
    }
    finish(w, path)
}

/// Per pool row: its margin distance, margin-sampling probability and the
/// share of (seed, repeat) units that drew it under each report.
pub fn write_sampling_summary(path: &Path, pool: &[MetaInstance], alpha: f64, reports: &[&MetricReport]) -> Result<()> {
    let d = pool_distances(pool);
    let p = selection_probs(&d, alpha)?;
    let mut counts = vec![vec![0usize; pool.len()]; reports.len()];
    for (c, r) in counts.iter_mut().zip(reports) {
        for u in &r.units {
            for &i in &u.synthetic_indices {
                c[i] += 1;
            }
        }
    }
    let mut w = writer(path)?;
    let mut header = vec![
        "index".to_string(),
        "name".into(),
        "s_x".into(),
        "s_y".into(),
        "distance".into(),
        "p_margin".into(),
    ];
    header.extend(
        reports
            .iter()
            .map(|r| format!("freq_{}_{}", r.config.condition, r.config.n_syn)),
    );
    w.write_record(&header)?;
    for (i, m) in pool.iter().enumerate() {
        let (sx, sy) = m.coordinates();
        let mut rec = vec![i.to_string(), m.name.clone(), fmt(sx), fmt(sy), fmt(d[i]), fmt(p[i])];
        for (c, r) in counts.iter().zip(reports) {
            rec.push(fmt(c[i] as f64 / r.units.len().max(1) as f64));
        }
        w.write_record(&rec)?;
    }
    finish(w, path)
}
