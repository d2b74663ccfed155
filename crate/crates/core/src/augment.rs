//! Synthetic-pool samplers and the selection-frequency study.

use std::collections::HashSet;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complexity::MetaFeatureVector;
use crate::error::{Error, Result};
use crate::meta::MetaInstance;
use crate::rng::{mix_seed, rng_from_seed};
use crate::stats::{cohens_d, ks_two_sample, overlap_coefficient, pearson_test, OVERLAP_BINS};

/// Default softmax temperature of the margin sampler.
pub const DEFAULT_ALPHA: f64 = 10.0;

/// Perpendicular distance of `(s_x, s_y)` to the line y = x.
pub fn margin_distance(s_x: f64, s_y: f64) -> f64 {
    (s_x - s_y).abs() / std::f64::consts::SQRT_2
}

/// Softmax of `-alpha * d`, shifted by the largest exponent for stability.
pub fn selection_probs(distances: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if distances.is_empty() {
        return Err(Error::InsufficientData("the synthetic pool is empty".into()));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Parameter(format!("alpha must be positive, got {alpha}")));
    }
    if distances.iter().any(|d| !d.is_finite()) {
        return Err(Error::Parameter("distances must be finite".into()));
    }
    let top = distances.iter().map(|d| -alpha * d).fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = distances.iter().map(|d| (-alpha * d - top).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|v| v / total).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "lowercase")]
pub enum Strategy {
    Uniform,
    Margin { alpha: f64 },
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Uniform => "uniform",
            Strategy::Margin { .. } => "margin",
        }
    }
}

/// A pool prepared for repeated sampling: the margin probabilities are
/// computed once and reused for every draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Sampler {
    pub strategy: Strategy,
    weights: Option<Vec<f64>>,
    size: usize,
}

impl Sampler {
    pub fn new(strategy: Strategy, distances: &[f64]) -> Result<Self> {
        if distances.is_empty() {
            return Err(Error::InsufficientData("the synthetic pool is empty".into()));
        }
        let weights = match strategy {
            Strategy::Uniform => None,
            Strategy::Margin { alpha } => Some(selection_probs(distances, alpha)?),
        };
        Ok(Sampler {
            strategy,
            weights,
            size: distances.len(),
        })
    }

    pub fn for_pool(strategy: Strategy, pool: &[MetaInstance]) -> Result<Self> {
        Sampler::new(strategy, &pool_distances(pool))
    }

    pub fn pool_size(&self) -> usize {
        self.size
    }

    pub fn probabilities(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// `n` distinct pool indices, in draw order.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<usize>> {
        let m = self.size;
        if n > m {
            return Err(Error::Parameter(format!("cannot draw {n} items from a pool of {m}")));
        }
        let mut rng = rng_from_seed(seed);
        match &self.weights {
            None => {
                let mut perm: Vec<usize> = (0..m).collect();
                for i in 0..n {
                    let j = rng.random_range(i..m);
                    perm.swap(i, j);
                }
                perm.truncate(n);
                Ok(perm)
            }
            Some(p) => {
                let mut w = p.clone();
                let mut out = Vec::with_capacity(n);
                for _ in 0..n {
                    let total: f64 = w.iter().sum();
                    let target = rng.random::<f64>() * total;
                    let mut acc = 0.0;
                    let mut pick = None;
                    for (i, &wi) in w.iter().enumerate() {
                        if wi <= 0.0 {
                            continue;
                        }
                        acc += wi;
                        pick = Some(i);
                        if target < acc {
                            break;
                        }
                    }
                    let i = pick.expect("remaining weight is positive while items remain");
                    w[i] = 0.0;
                    out.push(i);
                }
                Ok(out)
            }
        }
    }
}

/// Margin distances of every pool row, in pool order.
pub fn pool_distances(pool: &[MetaInstance]) -> Vec<f64> {
    pool.iter()
        .map(|r| {
            let (x, y) = r.coordinates();
            margin_distance(x, y)
        })
        .collect()
}

/// Selection frequencies over `iterations` independent draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarlo {
    pub strategy: Strategy,
    pub n: usize,
    pub iterations: usize,
    pub frequencies: Vec<f64>,
    /// Index sets of every iteration, kept for convergence reporting.
    #[serde(skip)]
    pub draws: Vec<Vec<usize>>,
}

/// Runs the frequency study; iteration `t` uses seed `mix(seed, t)`.
pub fn monte_carlo_frequencies(sampler: &Sampler, n: usize, iterations: usize, seed: u64) -> Result<MonteCarlo> {
    if iterations == 0 {
        return Err(Error::Parameter("at least one iteration is required".into()));
    }
    let draws: Vec<Vec<usize>> = (0..iterations)
        .into_par_iter()
        .map(|t| sampler.sample(n, mix_seed(seed, &[t as u64])))
        .collect::<Result<_>>()?;
    let mut counts = vec![0usize; sampler.pool_size()];
    for d in &draws {
        for &i in d {
            counts[i] += 1;
        }
    }
    Ok(MonteCarlo {
        strategy: sampler.strategy,
        n,
        iterations,
        frequencies: counts.iter().map(|&c| c as f64 / iterations as f64).collect(),
        draws,
    })
}

/// One checkpoint of the running-frequency series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub strategy: String,
    pub iteration: usize,
    pub mean_frequency: f64,
    pub std_frequency: f64,
    pub max_abs_change_vs_final: f64,
}

/// Running frequencies at `every`-iteration checkpoints (and the last one).
pub fn convergence_series(mc: &MonteCarlo, every: usize) -> Vec<ConvergencePoint> {
    let m = mc.frequencies.len();
    let mut counts = vec![0usize; m];
    let mut out = Vec::new();
    for (t, d) in mc.draws.iter().enumerate() {
        for &i in d {
            counts[i] += 1;
        }
        let done = t + 1;
        if done % every.max(1) == 0 || done == mc.draws.len() {
            let f: Vec<f64> = counts.iter().map(|&c| c as f64 / done as f64).collect();
            let mean = f.iter().sum::<f64>() / m as f64;
            let var = f.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
            let change = f
                .iter()
                .zip(&mc.frequencies)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            out.push(ConvergencePoint {
                strategy: mc.strategy.name().to_string(),
                iteration: done,
                mean_frequency: mean,
                std_frequency: var.sqrt(),
                max_abs_change_vs_final: change,
            });
        }
    }
    out
}

/// The `n` most frequently selected items; ties favour the lower index.
/// Returned in ascending index order.
pub fn canonical_set(frequencies: &[f64], n: usize) -> Result<Vec<usize>> {
    if n > frequencies.len() {
        return Err(Error::Parameter(format!(
            "canonical set of {n} requested from {} items",
            frequencies.len()
        )));
    }
    let mut order: Vec<usize> = (0..frequencies.len()).collect();
    order.sort_by(|&a, &b| frequencies[b].total_cmp(&frequencies[a]).then(a.cmp(&b)));
    let mut top = order[..n].to_vec();
    top.sort_unstable();
    Ok(top)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceSummary {
    pub mean: f64,
    pub std: f64,
    pub max: f64,
}

fn summarize(d: &[f64]) -> DistanceSummary {
    if d.is_empty() {
        return DistanceSummary {
            mean: 0.0,
            std: 0.0,
            max: 0.0,
        };
    }
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    DistanceSummary {
        mean,
        std: var.sqrt(),
        max: d.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetComparison {
    pub size_a: usize,
    pub size_b: usize,
    pub overlap: usize,
    pub jaccard: f64,
    pub distance_a: DistanceSummary,
    pub distance_b: DistanceSummary,
}

/// Overlap, Jaccard index and margin-distance statistics of two index sets.
pub fn compare_sets(a: &[usize], b: &[usize], distances: &[f64]) -> SetComparison {
    let sa: HashSet<usize> = a.iter().copied().collect();
    let sb: HashSet<usize> = b.iter().copied().collect();
    let overlap = sa.intersection(&sb).count();
    let union = sa.union(&sb).count();
    let pick = |s: &[usize]| s.iter().map(|&i| distances[i]).collect::<Vec<_>>();
    SetComparison {
        size_a: sa.len(),
        size_b: sb.len(),
        overlap,
        jaccard: if union == 0 { 1.0 } else { overlap as f64 / union as f64 },
        distance_a: summarize(&pick(a)),
        distance_b: summarize(&pick(b)),
    }
}

/// Distribution shift between the two canonical sets for one variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableShift {
    pub variable: String,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    pub cohens_d: f64,
    pub overlap: f64,
}

type Extractor = Box<dyn Fn(&MetaInstance) -> f64>;

/// Per-variable KS statistic, Cohen's d (margin minus uniform) and histogram
/// overlap for the meta-features and the two coordinates.
pub fn characterise(pool: &[MetaInstance], uniform: &[usize], margin: &[usize]) -> Result<Vec<VariableShift>> {
    let mut vars: Vec<(String, Extractor)> = Vec::new();
    for (k, name) in MetaFeatureVector::NAMES.iter().enumerate() {
        vars.push((
            name.to_string(),
            Box::new(move |r: &MetaInstance| r.features.to_array()[k]),
        ));
    }
    vars.push(("s_x".into(), Box::new(|r: &MetaInstance| r.coordinates().0)));
    vars.push(("s_y".into(), Box::new(|r: &MetaInstance| r.coordinates().1)));
    let mut out = Vec::new();
    for (name, f) in vars {
        let a: Vec<f64> = margin.iter().map(|&i| f(&pool[i])).collect();
        let b: Vec<f64> = uniform.iter().map(|&i| f(&pool[i])).collect();
        if a.len() < 2 || b.len() < 2 {
            continue;
        }
        let ks = ks_two_sample(&a, &b)?;
        out.push(VariableShift {
            variable: name,
            ks_statistic: ks.statistic,
            ks_p_value: ks.p_value,
            cohens_d: cohens_d(&a, &b)?.value,
            overlap: overlap_coefficient(&a, &b, OVERLAP_BINS)?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub mean_frequency: f64,
    pub std_frequency: f64,
    pub distance_frequency_pearson: Option<f64>,
    pub distance_frequency_p: Option<f64>,
}

/// Everything `augment-analyze` reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentAnalysis {
    pub pool_size: usize,
    pub n: usize,
    pub iterations: usize,
    pub alpha: f64,
    pub seed: u64,
    pub uniform: StrategySummary,
    pub margin: StrategySummary,
    pub canonical: SetComparison,
    pub shifts: Vec<VariableShift>,
    #[serde(skip)]
    pub distances: Vec<f64>,
    #[serde(skip)]
    pub runs: Vec<MonteCarlo>,
    #[serde(skip)]
    pub canonical_sets: [Vec<usize>; 2],
}

fn strategy_summary(mc: &MonteCarlo, distances: &[f64]) -> StrategySummary {
    let f = &mc.frequencies;
    let s = summarize(f);
    let r = pearson_test(distances, f).ok().filter(|t| !t.degenerate);
    StrategySummary {
        strategy: mc.strategy,
        mean_frequency: s.mean,
        std_frequency: s.std,
        distance_frequency_pearson: r.as_ref().map(|t| t.statistic),
        distance_frequency_p: r.map(|t| t.p_value),
    }
}

/// Runs both samplers through the frequency study and compares their canonical sets.
pub fn analyze(pool: &[MetaInstance], n: usize, iterations: usize, alpha: f64, seed: u64) -> Result<AugmentAnalysis> {
    let distances = pool_distances(pool);
    let uni = monte_carlo_frequencies(&Sampler::new(Strategy::Uniform, &distances)?, n, iterations, seed)?;
    let mar = monte_carlo_frequencies(
        &Sampler::new(Strategy::Margin { alpha }, &distances)?,
        n,
        iterations,
        seed,
    )?;
    let cu = canonical_set(&uni.frequencies, n)?;
    let cm = canonical_set(&mar.frequencies, n)?;
    Ok(AugmentAnalysis {
        pool_size: pool.len(),
        n,
        iterations,
        alpha,
        seed,
        uniform: strategy_summary(&uni, &distances),
        margin: strategy_summary(&mar, &distances),
        canonical: compare_sets(&cu, &cm, &distances),
        shifts: characterise(pool, &cu, &cm)?,
        distances,
        runs: vec![uni, mar],
        canonical_sets: [cu, cm],
    })
}

/// Writes frequencies.csv, canonical_uniform.csv, canonical_margin.csv,
/// comparison.json and convergence.csv.
pub fn write_analysis(out: &Path, pool: &[MetaInstance], a: &AugmentAnalysis) -> Result<()> {
    let mut w = csv::Writer::from_path(out.join("frequencies.csv"))?;
    w.write_record([
        "index",
        "name",
        "s_x",
        "s_y",
        "distance",
        "freq_uniform",
        "freq_margin",
        "prob_margin",
    ])?;
    let probs = selection_probs(&a.distances, a.alpha)?;
    for (i, r) in pool.iter().enumerate() {
        let (x, y) = r.coordinates();
        w.write_record([
            i.to_string(),
            r.name.clone(),
            x.to_string(),
            y.to_string(),
            a.distances[i].to_string(),
            a.runs[0].frequencies[i].to_string(),
            a.runs[1].frequencies[i].to_string(),
            probs[i].to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(out, e))?;

    for (file, set, mc) in [
        ("canonical_uniform.csv", &a.canonical_sets[0], &a.runs[0]),
        ("canonical_margin.csv", &a.canonical_sets[1], &a.runs[1]),
    ] {
        let mut w = csv::Writer::from_path(out.join(file))?;
        w.write_record(["index", "name", "frequency", "distance"])?;
        for &i in set {
            w.write_record([
                i.to_string(),
                pool[i].name.clone(),
                mc.frequencies[i].to_string(),
                a.distances[i].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(out, e))?;
    }

    let p = out.join("comparison.json");
    std::fs::write(&p, serde_json::to_string_pretty(a)? + "\n").map_err(|e| Error::io(&p, e))?;

    let mut w = csv::Writer::from_path(out.join("convergence.csv"))?;
    let every = (a.iterations / 100).max(1);
    for mc in &a.runs {
        for pt in convergence_series(mc, every) {
            w.serialize(pt)?;
        }
    }
    w.flush().map_err(|e| Error::io(out, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_examples() {
        assert_eq!(margin_distance(0.4, 0.4), 0.0);
        assert!((margin_distance(0.9, 0.2) - 0.494975).abs() < 1e-6);
        assert_eq!(margin_distance(0.1, 0.7), margin_distance(0.7, 0.1));
    }

    #[test]
    fn probability_ratio() {
        let p = selection_probs(&[0.0, 0.661], 10.0).unwrap();
        assert!((p[0] / p[1] - 6.61f64.exp()).abs() < 1e-6 * 6.61f64.exp());
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let u = selection_probs(&[0.3; 4], 10.0).unwrap();
        assert!(u.iter().all(|v| (v - 0.25).abs() < 1e-15));
        assert!(selection_probs(&[], 10.0).is_err());
    }

    #[test]
    fn full_pool_draws_everything() {
        let d = [0.0, 0.1, 0.5, 0.2, 0.9];
        for s in [Strategy::Uniform, Strategy::Margin { alpha: 10.0 }] {
            let mut got = Sampler::new(s, &d).unwrap().sample(5, 7).unwrap();
            got.sort_unstable();
            assert_eq!(got, vec![0, 1, 2, 3, 4]);
        }
        assert!(Sampler::new(Strategy::Uniform, &d).unwrap().sample(6, 0).is_err());
    }

    #[test]
    fn canonical_ties_go_low() {
        assert_eq!(canonical_set(&[0.5, 0.9, 0.5, 0.5], 2).unwrap(), vec![0, 1]);
        let c = compare_sets(&[0, 1], &[0, 1], &[0.0, 0.2]);
        assert_eq!((c.overlap, c.jaccard), (2, 1.0));
        let c = compare_sets(&[0], &[1], &[0.0, 0.2]);
        assert_eq!((c.overlap, c.jaccard), (0, 0.0));
    }
}
