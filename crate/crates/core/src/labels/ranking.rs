use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::average_ranks;
use crate::stats::special::chi2_sf;

/// Per-row ranks in descending order of score (1 = best), ties averaged.
pub fn rank_splits(scores: &[Vec<f64>]) -> Vec<Vec<f64>> {
    scores
        .iter()
        .map(|row| average_ranks(&row.iter().map(|v| -v).collect::<Vec<_>>()))
        .collect()
}

/// Column means of a rank matrix.
pub fn mean_ranks(ranks: &[Vec<f64>]) -> Vec<f64> {
    let k = ranks.first().map_or(0, Vec::len);
    let mut m = vec![0.0; k];
    for row in ranks {
        for (a, r) in m.iter_mut().zip(row) {
            *a += r;
        }
    }
    m.iter_mut().for_each(|a| *a /= ranks.len() as f64);
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub statistic: f64,
    pub p_value: f64,
    pub df: f64,
}

/// Friedman chi-square test on a rank matrix, with the correction for ties.
///
/// If every row is fully tied the corrected statistic is 0/0; it is then
/// reported as 0 with p = 1.
pub fn friedman_test(ranks: &[Vec<f64>]) -> Result<FriedmanResult> {
    let n = ranks.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "Friedman test needs at least 2 rows, got {n}"
        )));
    }
    let k = ranks[0].len();
    if k < 3 {
        return Err(Error::Parameter(format!(
            "Friedman test needs at least 3 columns, got {k}"
        )));
    }
    if ranks.iter().any(|r| r.len() != k) {
        return Err(Error::Parameter("ragged rank matrix".into()));
    }
    let (nf, kf) = (n as f64, k as f64);
    let sums: Vec<f64> = (0..k).map(|j| ranks.iter().map(|r| r[j]).sum()).collect();
    let ss: f64 = sums.iter().map(|r| r * r).sum();
    let raw = 12.0 / (nf * kf * (kf + 1.0)) * ss - 3.0 * nf * (kf + 1.0);

    let mut tie_sum = 0.0;
    for row in ranks {
        let mut sorted = row.clone();
        sorted.sort_by(f64::total_cmp);
        let mut i = 0;
        while i < k {
            let mut j = i;
            while j + 1 < k && sorted[j + 1] == sorted[i] {
                j += 1;
            }
            let t = (j - i + 1) as f64;
            tie_sum += t * t * t - t;
            i = j + 1;
        }
    }
    let correction = 1.0 - tie_sum / (nf * (kf * kf * kf - kf));
    let df = kf - 1.0;
    if correction <= 1e-12 {
        return Ok(FriedmanResult {
            statistic: 0.0,
            p_value: 1.0,
            df,
        });
    }
    let statistic = (raw / correction).max(0.0);
    Ok(FriedmanResult {
        statistic,
        p_value: chi2_sf(statistic, df),
        df,
    })
}

/// Two-tailed Nemenyi critical values at α = 0.05 for k = 2..=20: the
/// studentised range quantile at infinite degrees of freedom divided by √2.
/// The entries for k ≤ 10 are the widely published table; the remainder were
/// computed from the studentised range distribution with the same convention.
pub const NEMENYI_Q_05: [f64; 19] = [
    1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164, 3.219, 3.268, 3.313, 3.354, 3.391, 3.426, 3.458,
    3.489, 3.517, 3.544,
];

/// Nemenyi critical difference `q_α √(k(k+1)/(6N))`. Only α = 0.05 is tabulated.
pub fn nemenyi_cd(k: usize, n: usize, alpha: f64) -> Result<f64> {
    if (alpha - 0.05).abs() > 1e-12 {
        return Err(Error::Parameter(format!("no Nemenyi table for alpha = {alpha}")));
    }
    if !(2..=20).contains(&k) {
        return Err(Error::Parameter(format!("Nemenyi table covers k = 2..20, got {k}")));
    }
    if n == 0 {
        return Err(Error::Parameter("N must be positive".into()));
    }
    let q = NEMENYI_Q_05[k - 2];
    Ok(q * ((k * (k + 1)) as f64 / (6.0 * n as f64)).sqrt())
}

/// Marks every algorithm whose mean rank is within `cd` of the best.
pub fn assign_multilabel(mean_ranks: &[f64], cd: f64) -> Vec<bool> {
    let best = mean_ranks.iter().cloned().fold(f64::INFINITY, f64::min);
    mean_ranks.iter().map(|&r| r <= best + cd).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_rows() {
        let r = rank_splits(&[
            vec![0.9, 0.5, 0.5, 0.2, 0.1],
            vec![0.3; 5],
            vec![5.0, 4.0, 3.0, 2.0, 1.0],
        ]);
        assert_eq!(r[0], vec![1.0, 2.5, 2.5, 4.0, 5.0]);
        assert_eq!(r[1], vec![3.0; 5]);
        assert_eq!(r[2], vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn friedman_all_tied() {
        let ranks = rank_splits(&vec![vec![0.5; 5]; 10]);
        let f = friedman_test(&ranks).unwrap();
        assert_eq!((f.statistic, f.p_value), (0.0, 1.0));
    }

    #[test]
    fn multilabel_threshold() {
        assert_eq!(
            assign_multilabel(&[1.2, 1.7, 2.5, 4.0, 4.6], 0.61),
            vec![true, true, false, false, false]
        );
        assert!(assign_multilabel(&[1.0, 2.0, 3.0, 4.0, 5.0], 4.0).iter().all(|b| *b));
    }

    #[test]
    fn cd_scaling() {
        let a = nemenyi_cd(5, 100, 0.05).unwrap();
        let b = nemenyi_cd(5, 400, 0.05).unwrap();
        assert!((a / b - 2.0).abs() < 1e-12);
        assert!((nemenyi_cd(2, 9, 0.05).unwrap() - 1.960 / 3.0).abs() < 1e-12);
        assert!(nemenyi_cd(21, 10, 0.05).is_err());
        assert!(nemenyi_cd(1, 10, 0.05).is_err());
    }
}
