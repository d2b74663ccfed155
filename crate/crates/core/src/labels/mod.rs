//! Tune-then-evaluate performance labelling of regression datasets.

mod ranking;

pub use ranking::{
    assign_multilabel, friedman_test, mean_ranks, nemenyi_cd, rank_splits, FriedmanResult, NEMENYI_Q_05,
};

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{mean, Dataset};
use crate::error::{Error, Result};
use crate::learners::{pipeline_r2, RegressorConfig, Weighting};
use crate::resampling::tscv_assign;
use crate::rng::{derived_rng, mix_seed};

/// The five candidate algorithms, in label order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Lr,
    Knn,
    Lasso,
    Ridge,
    ElasticNet,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Lr,
        Algorithm::Knn,
        Algorithm::Lasso,
        Algorithm::Ridge,
        Algorithm::ElasticNet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Lr => "lr",
            Algorithm::Knn => "knn",
            Algorithm::Lasso => "lasso",
            Algorithm::Ridge => "ridge",
            Algorithm::ElasticNet => "elasticnet",
        }
    }

    pub fn index(self) -> usize {
        Algorithm::ALL.iter().position(|a| *a == self).expect("listed")
    }

    /// Draws one configuration from the search space. `n` is the dataset size
    /// that bounds the neighbour count.
    pub fn sample_config<R: Rng>(self, n: usize, rng: &mut R) -> RegressorConfig {
        let log_alpha = |rng: &mut R| 10f64.powf(rng.random_range(-5.0..=1.0));
        match self {
            Algorithm::Lr => RegressorConfig::Ols,
            Algorithm::Knn => {
                let k_max = (n / 3).max(1);
                let k = rng.random_range(1..=k_max);
                let weighting = if rng.random_bool(0.5) {
                    Weighting::Distance
                } else {
                    Weighting::Uniform
                };
                RegressorConfig::Knn { k, weighting }
            }
            Algorithm::Lasso => RegressorConfig::Lasso { alpha: log_alpha(rng) },
            Algorithm::Ridge => RegressorConfig::Ridge { alpha: log_alpha(rng) },
            Algorithm::ElasticNet => {
                let alpha = log_alpha(rng);
                let l1_ratio = rng.random_range(1e-3..=1.0 - 1e-3);
                RegressorConfig::ElasticNet { alpha, l1_ratio }
            }
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown algorithm {s:?}")))
    }
}

/// Protocol constants for labelling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelingConfig {
    pub trial_budget: usize,
    pub inner_folds: usize,
    pub inner_repeats: usize,
    pub outer_folds: usize,
    pub outer_repeats: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for LabelingConfig {
    fn default() -> Self {
        LabelingConfig {
            trial_budget: 50,
            inner_folds: 10,
            inner_repeats: 1,
            outer_folds: 10,
            outer_repeats: 10,
            alpha: 0.05,
            seed: 0,
        }
    }
}

/// Outcome of tuning one algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub algorithm: Algorithm,
    pub config: RegressorConfig,
    pub inner_score: Option<f64>,
    pub trials: usize,
}

/// Mean R² over the valid folds; folds with fewer than two test rows or a
/// non-finite score are skipped. `None` when no fold is valid.
fn cv_score(d: &Dataset, config: &RegressorConfig, folds: &[Vec<usize>], k: usize) -> Option<f64> {
    let mut scores = Vec::new();
    for fold_of in folds {
        for f in 0..k {
            if let Some(s) = split_score(d, config, fold_of, f) {
                scores.push(s);
            }
        }
    }
    (!scores.is_empty()).then(|| mean(&scores))
}

fn split_score(d: &Dataset, config: &RegressorConfig, fold_of: &[usize], f: usize) -> Option<f64> {
    let test: Vec<usize> = (0..fold_of.len()).filter(|&i| fold_of[i] == f).collect();
    let train: Vec<usize> = (0..fold_of.len()).filter(|&i| fold_of[i] != f).collect();
    if test.len() < 2 || train.is_empty() {
        return None;
    }
    let x = d.features();
    let y = d.target();
    let ytr: Vec<f64> = train.iter().map(|&i| y[i]).collect();
    let yte: Vec<f64> = test.iter().map(|&i| y[i]).collect();
    let s = pipeline_r2(config, &x.select_rows(&train), &ytr, &x.select_rows(&test), &yte).ok()?;
    s.is_finite().then_some(s)
}

/// Random-search tuning over the algorithm's search space, scored by mean R²
/// over repeated inner stratified folds. Ties keep the earlier trial.
pub fn tune(algorithm: Algorithm, d: &Dataset, cfg: &LabelingConfig) -> Result<TuningResult> {
    if algorithm == Algorithm::Lr {
        return Ok(TuningResult {
            algorithm,
            config: RegressorConfig::Ols,
            inner_score: None,
            trials: 0,
        });
    }
    let d = d.canonical_order();
    let n = d.n_rows();
    let k = cfg.inner_folds.min(n);
    let folds = (0..cfg.inner_repeats)
        .map(|r| tscv_assign(d.target(), k, mix_seed(cfg.seed, &[0x1A, r as u64])).map(|a| a.fold_of))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = derived_rng(cfg.seed, &[0x7E, algorithm.index() as u64]);
    let mut best: Option<(RegressorConfig, Option<f64>)> = None;
    for _ in 0..cfg.trial_budget {
        let config = algorithm.sample_config(n, &mut rng);
        let score = cv_score(&d, &config, &folds, k);
        let better = match (&best, score) {
            (None, _) => true,
            (Some((_, None)), Some(_)) => true,
            (Some((_, Some(b))), Some(s)) => s > *b,
            _ => false,
        };
        if better {
            best = Some((config, score));
        }
    }
    let (config, inner_score) = best.ok_or_else(|| Error::Parameter("trial budget must be positive".into()))?;
    Ok(TuningResult {
        algorithm,
        config,
        inner_score,
        trials: cfg.trial_budget,
    })
}

/// Split-level R² of a fixed configuration under repeated outer stratified
/// folds, in (repeat, fold) order. Splits that cannot be scored are `None`.
pub fn outer_evaluate(d: &Dataset, config: &RegressorConfig, cfg: &LabelingConfig) -> Result<Vec<Option<f64>>> {
    let d = d.canonical_order();
    let k = cfg.outer_folds;
    let mut out = Vec::with_capacity(k * cfg.outer_repeats);
    for r in 0..cfg.outer_repeats {
        let a = tscv_assign(d.target(), k, cfg.seed.wrapping_add(r as u64))?;
        for f in 0..k {
            out.push(split_score(&d, config, &a.fold_of, f));
        }
    }
    Ok(out)
}

/// Split-by-algorithm R² matrix restricted to splits every algorithm could score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceMatrix {
    pub dataset: String,
    pub scores: Vec<Vec<f64>>,
    pub total_splits: usize,
    pub excluded_splits: usize,
}

impl PerformanceMatrix {
    /// Builds the matrix from per-algorithm split scores (same length, same split order).
    pub fn from_columns(dataset: &str, columns: &[Vec<Option<f64>>]) -> Result<Self> {
        let total = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != total) {
            return Err(Error::Parameter(
                "algorithms were scored on different split counts".into(),
            ));
        }
        let mut scores = Vec::new();
        for s in 0..total {
            let row: Option<Vec<f64>> = columns.iter().map(|c| c[s]).collect();
            if let Some(row) = row {
                scores.push(row);
            }
        }
        Ok(PerformanceMatrix {
            dataset: dataset.to_string(),
            excluded_splits: total - scores.len(),
            total_splits: total,
            scores,
        })
    }

    pub fn column_means(&self) -> Vec<f64> {
        let k = self.scores.first().map_or(0, Vec::len);
        (0..k)
            .map(|j| mean(&self.scores.iter().map(|r| r[j]).collect::<Vec<_>>()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaLabels {
    /// Mean retained outer-split R² per algorithm.
    pub continuous: Vec<f64>,
    pub binary: Vec<bool>,
    pub friedman_statistic: f64,
    pub friedman_p: f64,
    /// Critical difference; present only when the Friedman test rejects.
    pub cd: Option<f64>,
    pub mean_ranks: Vec<f64>,
}

/// Continuous labels, Friedman test and the critical-difference multi-label.
pub fn labels_from_matrix(perf: &PerformanceMatrix, alpha: f64) -> Result<MetaLabels> {
    if perf.scores.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{}: only {} fully scored splits",
            perf.dataset,
            perf.scores.len()
        )));
    }
    let ranks = rank_splits(&perf.scores);
    let mr = mean_ranks(&ranks);
    let fr = friedman_test(&ranks)?;
    let k = mr.len();
    let (binary, cd) = if fr.p_value < alpha {
        let cd = nemenyi_cd(k, perf.scores.len(), alpha)?;
        (assign_multilabel(&mr, cd), Some(cd))
    } else {
        (vec![true; k], None)
    };
    Ok(MetaLabels {
        continuous: perf.column_means(),
        binary,
        friedman_statistic: fr.statistic,
        friedman_p: fr.p_value,
        cd,
        mean_ranks: mr,
    })
}

/// Full labelling record of one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelReport {
    pub tuning: Vec<TuningResult>,
    pub performance: PerformanceMatrix,
    pub labels: MetaLabels,
}

/// Tunes every algorithm, evaluates it on the outer splits and derives labels.
pub fn label_dataset(d: &Dataset, cfg: &LabelingConfig) -> Result<LabelReport> {
    let mut tuning = Vec::with_capacity(5);
    let mut columns = Vec::with_capacity(5);
    for a in Algorithm::ALL {
        let t = tune(a, d, cfg)?;
        columns.push(outer_evaluate(d, &t.config, cfg)?);
        tuning.push(t);
    }
    let performance = PerformanceMatrix::from_columns(d.name(), &columns)?;
    let labels = labels_from_matrix(&performance, cfg.alpha)?;
    Ok(LabelReport {
        tuning,
        performance,
        labels,
    })
}
