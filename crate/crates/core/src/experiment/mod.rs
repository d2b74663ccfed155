//! Downstream evaluation of synthetic augmentation for the meta-learner.
//!
//! Real meta-instances are split with repeated shuffled K-fold; synthetic rows
//! only ever join training splits. Regression targets are scored with pooled
//! out-of-fold R², the multi-label formulation with Hamming loss and subset
//! accuracy.

mod learner;
pub mod report;

pub use learner::{MetaLearner, OracleLearner, SvrGnbLearner};

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{Sampler, Strategy, DEFAULT_ALPHA};
use crate::data::mean;
use crate::error::{Error, Result};
use crate::learners::{hamming_loss, r2_score, subset_accuracy};
use crate::meta::MetaInstance;
use crate::resampling::kfold_shuffled;
use crate::rng::mix_seed;
use crate::stats::{paired_t_test, TestResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    None,
    Uniform,
    Margin,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::None, Condition::Uniform, Condition::Margin];

    pub fn name(self) -> &'static str {
        match self {
            Condition::None => "none",
            Condition::Uniform => "uniform",
            Condition::Margin => "margin",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Condition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Condition::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown condition {s:?} (none, uniform, margin)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    Regression,
    Multilabel,
    Both,
}

impl Formulation {
    fn regression(self) -> bool {
        matches!(self, Formulation::Regression | Formulation::Both)
    }

    fn multilabel(self) -> bool {
        matches!(self, Formulation::Multilabel | Formulation::Both)
    }
}

impl FromStr for Formulation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regression" => Ok(Formulation::Regression),
            "multilabel" => Ok(Formulation::Multilabel),
            "both" => Ok(Formulation::Both),
            _ => Err(Error::Parameter(format!(
                "unknown formulation {s:?} (regression, multilabel, both)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    R2,
    HammingLoss,
    SubsetAccuracy,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::HammingLoss, Metric::SubsetAccuracy, Metric::R2];

    pub fn name(self) -> &'static str {
        match self {
            Metric::R2 => "r2",
            Metric::HammingLoss => "hamming_loss",
            Metric::SubsetAccuracy => "subset_accuracy",
        }
    }

    pub fn higher_is_better(self) -> bool {
        !matches!(self, Metric::HammingLoss)
    }

    fn in_formulation(self, f: Formulation) -> bool {
        match self {
            Metric::R2 => f.regression(),
            _ => f.multilabel(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub folds: usize,
    pub repeats: usize,
    pub seeds: Vec<u64>,
    pub condition: Condition,
    pub n_syn: usize,
    pub alpha: f64,
    pub formulation: Formulation,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            folds: 10,
            repeats: 10,
            seeds: (0..10).collect(),
            condition: Condition::None,
            n_syn: 0,
            alpha: DEFAULT_ALPHA,
            formulation: Formulation::Both,
        }
    }
}

impl ExperimentConfig {
    pub fn with(&self, condition: Condition, n_syn: usize) -> Self {
        ExperimentConfig {
            condition,
            n_syn: if condition == Condition::None { 0 } else { n_syn },
            ..self.clone()
        }
    }

    pub fn validate(&self, n_real: usize, pool: usize) -> Result<()> {
        if self.seeds.is_empty() || self.repeats == 0 {
            return Err(Error::Parameter("at least one seed and one repeat are required".into()));
        }
        if n_real < self.folds || self.folds < 2 {
            return Err(Error::InsufficientData(format!(
                "{} folds need at least as many real meta-instances, got {n_real}",
                self.folds
            )));
        }
        if self.condition != Condition::None && self.n_syn > pool {
            return Err(Error::Parameter(format!(
                "n_syn = {} exceeds the pool size {pool}",
                self.n_syn
            )));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::Parameter(format!("alpha must be positive, got {}", self.alpha)));
        }
        Ok(())
    }

    fn strategy(&self) -> Option<Strategy> {
        match self.condition {
            Condition::None => None,
            _ if self.n_syn == 0 => None,
            Condition::Uniform => Some(Strategy::Uniform),
            Condition::Margin => Some(Strategy::Margin { alpha: self.alpha }),
        }
    }
}

/// Hex SHA-256 of a fold vector, used to check that conditions share folds.
pub fn fold_hash(fold_of: &[usize]) -> String {
    let mut h = Sha256::new();
    for &f in fold_of {
        h.update((f as u64).to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Scores of one (seed, repeat) unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitResult {
    pub seed: u64,
    pub repeat: usize,
    pub fold_hash: String,
    pub synthetic_used: usize,
    /// Pool indices of the synthetic rows added to every training split, ascending.
    pub synthetic_indices: Vec<usize>,
    pub r2: Option<f64>,
    pub r2_per_target: Vec<f64>,
    pub hamming_loss: Option<f64>,
    pub subset_accuracy: Option<f64>,
}

impl UnitResult {
    pub fn metric(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::R2 => self.r2,
            Metric::HammingLoss => self.hamming_loss,
            Metric::SubsetAccuracy => self.subset_accuracy,
        }
    }
}

fn run_unit(
    real: &[MetaInstance],
    pool: &[MetaInstance],
    cfg: &ExperimentConfig,
    sampler: Option<&Sampler>,
    learner: &dyn MetaLearner,
    seed: u64,
    repeat: usize,
) -> Result<UnitResult> {
    let n = real.len();
    let folds = kfold_shuffled(n, cfg.folds, seed.wrapping_add(repeat as u64))?;
    // One synthetic subset per (seed, repeat), shared by every fold. Sorting
    // makes the training set independent of draw order.
    let mut syn = match sampler {
        Some(s) => s.sample(cfg.n_syn, mix_seed(seed, &[repeat as u64]))?,
        None => Vec::new(),
    };
    syn.sort_unstable();

    let mut reg_pred = vec![[0.0; 5]; n];
    let mut cls_pred = vec![[false; 5]; n];
    for f in 0..cfg.folds {
        let test_idx = folds.test_indices(f);
        let train_idx = folds.train_indices(f);
        // Test folds index real rows only; synthetic rows live in a separate pool.
        if test_idx.iter().any(|&i| i >= n) || train_idx.iter().any(|i| test_idx.contains(i)) {
            return Err(Error::Invariant(
                "test fold overlaps training data or leaves the real rows".into(),
            ));
        }
        let mut train: Vec<&MetaInstance> = train_idx.iter().map(|&i| &real[i]).collect();
        train.extend(syn.iter().map(|&j| &pool[j]));
        let test: Vec<&MetaInstance> = test_idx.iter().map(|&i| &real[i]).collect();
        if cfg.formulation.regression() {
            for (p, &i) in learner.regress(&train, &test)?.into_iter().zip(&test_idx) {
                reg_pred[i] = p;
            }
        }
        if cfg.formulation.multilabel() {
            for (p, &i) in learner.classify(&train, &test)?.into_iter().zip(&test_idx) {
                cls_pred[i] = p;
            }
        }
    }

    let mut out = UnitResult {
        seed,
        repeat,
        fold_hash: fold_hash(&folds.fold_of),
        synthetic_used: syn.len(),
        synthetic_indices: syn,
        r2: None,
        r2_per_target: Vec::new(),
        hamming_loss: None,
        subset_accuracy: None,
    };
    if cfg.formulation.regression() {
        for a in 0..5 {
            let truth: Vec<f64> = real.iter().map(|r| r.continuous[a]).collect();
            let pred: Vec<f64> = reg_pred.iter().map(|p| p[a]).collect();
            out.r2_per_target.push(r2_score(&truth, &pred)?);
        }
        out.r2 = Some(mean(&out.r2_per_target));
    }
    if cfg.formulation.multilabel() {
        let truth: Vec<Vec<bool>> = real.iter().map(|r| r.binary.to_vec()).collect();
        let pred: Vec<Vec<bool>> = cls_pred.iter().map(|p| p.to_vec()).collect();
        let h = hamming_loss(&truth, &pred)?;
        let s = subset_accuracy(&truth, &pred)?;
        if s == 1.0 && h != 0.0 {
            return Err(Error::Invariant(
                "perfect subset accuracy with non-zero Hamming loss".into(),
            ));
        }
        out.hamming_loss = Some(h);
        out.subset_accuracy = Some(s);
    }
    Ok(out)
}

/// Across-seed summary of one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: Metric,
    /// Mean over repeats, one entry per seed in configuration order.
    pub per_seed: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation of the per-seed scores.
    pub std: f64,
    /// Mean over seeds of the standard deviation across repeats.
    pub mean_within_seed_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub config: ExperimentConfig,
    pub units: Vec<UnitResult>,
    pub metrics: Vec<MetricSummary>,
}

impl MetricReport {
    pub fn metric(&self, m: Metric) -> Option<&MetricSummary> {
        self.metrics.iter().find(|s| s.metric == m)
    }

    /// `(seed, repeat) → fold hash`, in unit order.
    pub fn fold_hashes(&self) -> Vec<(u64, usize, &str)> {
        self.units
            .iter()
            .map(|u| (u.seed, u.repeat, u.fold_hash.as_str()))
            .collect()
    }
}

fn std_sample(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    crate::data::sample_std(v)
}

/// Evaluates one augmentation condition over every seed and repeat.
pub fn evaluate_condition(
    real: &[MetaInstance],
    pool: &[MetaInstance],
    cfg: &ExperimentConfig,
    learner: &dyn MetaLearner,
) -> Result<MetricReport> {
    cfg.validate(real.len(), pool.len())?;
    let sampler = match cfg.strategy() {
        Some(s) => Some(Sampler::for_pool(s, pool)?),
        None => None,
    };
    let jobs: Vec<(u64, usize)> = cfg
        .seeds
        .iter()
        .flat_map(|&s| (0..cfg.repeats).map(move |r| (s, r)))
        .collect();
    let units: Vec<UnitResult> = jobs
        .par_iter()
        .map(|&(s, r)| run_unit(real, pool, cfg, sampler.as_ref(), learner, s, r))
        .collect::<Result<_>>()?;

    let mut metrics = Vec::new();
    for m in Metric::ALL.into_iter().filter(|m| m.in_formulation(cfg.formulation)) {
        let mut per_seed = Vec::new();
        let mut within = Vec::new();
        for chunk in units.chunks(cfg.repeats) {
            let v: Vec<f64> = chunk.iter().filter_map(|u| u.metric(m)).collect();
            per_seed.push(mean(&v));
            within.push(std_sample(&v));
        }
        metrics.push(MetricSummary {
            metric: m,
            mean: mean(&per_seed),
            std: std_sample(&per_seed),
            mean_within_seed_std: mean(&within),
            per_seed,
        });
    }
    Ok(MetricReport {
        config: cfg.clone(),
        units,
        metrics,
    })
}

/// Fails unless every report used bitwise-identical folds for each (seed, repeat).
pub fn check_shared_folds(reports: &[&MetricReport]) -> Result<()> {
    let Some(first) = reports.first() else { return Ok(()) };
    let reference = first.fold_hashes();
    for r in &reports[1..] {
        if r.fold_hashes() != reference {
            return Err(Error::Invariant(format!(
                "condition {} used different folds from {}",
                r.config.condition, first.config.condition
            )));
        }
    }
    Ok(())
}

/// Relative change in percent, signed so that an improvement is positive.
pub fn relative_delta(new: f64, base: f64, metric: Metric) -> f64 {
    let raw = (new - base) / base.abs() * 100.0;
    if metric.higher_is_better() {
        raw
    } else {
        -raw
    }
}

/// Metric means for the three conditions at one synthetic budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub metric: Metric,
    pub direction: String,
    pub none: f64,
    pub margin: f64,
    pub uniform: f64,
    pub delta_margin_vs_none: f64,
    pub delta_uniform_vs_none: f64,
    pub delta_margin_vs_uniform: f64,
}

pub fn ablation_rows(none: &MetricReport, uniform: &MetricReport, margin: &MetricReport) -> Vec<AblationRow> {
    none.metrics
        .iter()
        .filter_map(|s| {
            let m = s.metric;
            let u = uniform.metric(m)?.mean;
            let g = margin.metric(m)?.mean;
            Some(AblationRow {
                metric: m,
                direction: if m.higher_is_better() { "higher" } else { "lower" }.into(),
                none: s.mean,
                margin: g,
                uniform: u,
                delta_margin_vs_none: relative_delta(g, s.mean, m),
                delta_uniform_vs_none: relative_delta(u, s.mean, m),
                delta_margin_vs_uniform: relative_delta(g, u, m),
            })
        })
        .collect()
}

/// One (n_syn, metric) cell of the learning curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub n_syn: usize,
    pub metric: Metric,
    pub mean_none: f64,
    pub mean_uniform: f64,
    pub mean_margin: f64,
    /// Uniform versus margin paired test; absent at the pool size where the
    /// two samples coincide.
    pub test: Option<TestResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointTest {
    pub metric: Metric,
    pub n_syn: usize,
    pub mean_augmented: f64,
    pub mean_none: f64,
    pub test: TestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub pool_size: usize,
    pub n_grid: Vec<usize>,
    pub rows: Vec<CurveRow>,
    pub endpoint: Vec<EndpointTest>,
    pub none: MetricReport,
    pub points: Vec<(MetricReport, MetricReport)>,
}

/// Default budget grid: 20, 40, ... below the pool size, then the pool size.
pub fn default_grid(pool: usize, step: usize) -> Vec<usize> {
    let mut g: Vec<usize> = (1..).map(|i| i * step.max(1)).take_while(|&v| v < pool).collect();
    g.push(pool);
    g
}

/// Normalises a user grid: sorted, deduplicated, ending at the pool size.
pub fn normalise_grid(mut grid: Vec<usize>, pool: usize) -> Result<Vec<usize>> {
    if let Some(&bad) = grid.iter().find(|&&v| v > pool) {
        return Err(Error::Parameter(format!(
            "grid value {bad} exceeds the pool size {pool}"
        )));
    }
    grid.sort_unstable();
    grid.dedup();
    if grid.last() != Some(&pool) {
        grid.push(pool);
    }
    Ok(grid)
}

/// Sweeps the synthetic budget, comparing uniform and margin sampling at each
/// point and augmented against unaugmented training at the pool size.
pub fn learning_curve(
    real: &[MetaInstance],
    pool: &[MetaInstance],
    base: &ExperimentConfig,
    n_grid: &[usize],
    learner: &dyn MetaLearner,
) -> Result<LearningCurve> {
    let grid = normalise_grid(n_grid.to_vec(), pool.len())?;
    let none = evaluate_condition(real, pool, &base.with(Condition::None, 0), learner)?;
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for &n_syn in &grid {
        let uni = evaluate_condition(real, pool, &base.with(Condition::Uniform, n_syn), learner)?;
        let mar = evaluate_condition(real, pool, &base.with(Condition::Margin, n_syn), learner)?;
        check_shared_folds(&[&none, &uni, &mar])?;
        for s in &none.metrics {
            let m = s.metric;
            let (u, g) = (
                uni.metric(m).expect("same formulation"),
                mar.metric(m).expect("same formulation"),
            );
            let test = if n_syn == pool.len() {
                None
            } else {
                Some(paired_t_test(&u.per_seed, &g.per_seed)?)
            };
            rows.push(CurveRow {
                n_syn,
                metric: m,
                mean_none: s.mean,
                mean_uniform: u.mean,
                mean_margin: g.mean,
                test,
            });
        }
        points.push((uni, mar));
    }
    let (end_uni, _) = points.last().expect("grid ends at the pool size");
    let endpoint = none
        .metrics
        .iter()
        .map(|s| {
            let a = end_uni.metric(s.metric).expect("same formulation");
            Ok(EndpointTest {
                metric: s.metric,
                n_syn: pool.len(),
                mean_augmented: a.mean,
                mean_none: s.mean,
                test: paired_t_test(&a.per_seed, &s.per_seed)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(LearningCurve {
        pool_size: pool.len(),
        n_grid: grid,
        rows,
        endpoint,
        none,
        points,
    })
}

/// Paired comparison of two augmentation pools, each used in full.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GranularityRow {
    pub metric: Metric,
    pub mean_a: f64,
    pub mean_b: f64,
    pub mean_diff: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub t: f64,
    pub p: f64,
    pub degenerate: bool,
    /// "a", "b" or "neither", from the sign of the difference and the metric direction.
    pub favours: String,
}

pub fn granularity_compare(
    real: &[MetaInstance],
    pool_a: &[MetaInstance],
    pool_b: &[MetaInstance],
    base: &ExperimentConfig,
    learner: &dyn MetaLearner,
) -> Result<Vec<GranularityRow>> {
    if pool_a.is_empty() || pool_b.is_empty() {
        return Err(Error::InsufficientData("both pools must be non-empty".into()));
    }
    let ra = evaluate_condition(real, pool_a, &base.with(Condition::Uniform, pool_a.len()), learner)?;
    let rb = evaluate_condition(real, pool_b, &base.with(Condition::Uniform, pool_b.len()), learner)?;
    check_shared_folds(&[&ra, &rb])?;
    ra.metrics
        .iter()
        .map(|sa| {
            let sb = rb.metric(sa.metric).expect("same formulation");
            let t = paired_t_test(&sa.per_seed, &sb.per_seed)?;
            let diff = t.mean_diff.unwrap_or(0.0);
            let (lo, hi) = t.ci.unwrap_or((diff, diff));
            let better_a = if sa.metric.higher_is_better() {
                diff > 0.0
            } else {
                diff < 0.0
            };
            Ok(GranularityRow {
                metric: sa.metric,
                mean_a: sa.mean,
                mean_b: sb.mean,
                mean_diff: diff,
                ci_low: lo,
                ci_high: hi,
                t: t.statistic,
                p: t.p_value,
                degenerate: t.degenerate,
                favours: if diff == 0.0 {
                    "neither"
                } else if better_a {
                    "a"
                } else {
                    "b"
                }
                .into(),
            })
        })
        .collect()
}
