//! Correlations, effect sizes and two-sample tests.

pub mod special;

use serde::{Deserialize, Serialize};

use crate::data::{mean, sample_std};
use crate::error::{Error, Result};

/// A point estimate with a flag for inputs where it is undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub degenerate: bool,
}

/// Outcome of a hypothesis test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub df: Option<f64>,
    pub n_a: usize,
    pub n_b: usize,
    pub mean_diff: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub degenerate: bool,
}

/// Average ranks in ascending order (smallest value gets rank 1).
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn check_pair(x: &[f64], y: &[f64], min: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.len() < min {
        return Err(Error::InsufficientData(format!(
            "need at least {min} pairs, got {}",
            x.len()
        )));
    }
    Ok(())
}

/// Pearson correlation. Constant input gives a degenerate zero.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Estimate> {
    check_pair(x, y, 2)?;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let constant = |v: &[f64]| v.iter().all(|a| *a == v[0]);
    if constant(x) || constant(y) || sxx == 0.0 || syy == 0.0 {
        return Ok(Estimate {
            value: 0.0,
            degenerate: true,
        });
    }
    Ok(Estimate {
        value: (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0),
        degenerate: false,
    })
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Estimate> {
    check_pair(x, y, 2)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Pearson correlation with a two-sided p-value from the t distribution on n - 2 df.
pub fn pearson_test(x: &[f64], y: &[f64]) -> Result<TestResult> {
    let r = pearson(x, y)?;
    let n = x.len();
    let df = n as f64 - 2.0;
    let (p, degenerate) = if r.degenerate || n < 3 {
        (1.0, true)
    } else if r.value.abs() >= 1.0 {
        (0.0, false)
    } else {
        let t = r.value * (df / (1.0 - r.value * r.value)).sqrt();
        (special::t_two_sided_p(t, df), false)
    };
    Ok(TestResult {
        statistic: r.value,
        p_value: p,
        df: Some(df),
        n_a: n,
        n_b: n,
        mean_diff: None,
        ci: None,
        degenerate,
    })
}

/// Two-sided paired Student t test on `a - b` with a 95% confidence interval.
///
/// When every difference is identical the statistic is undefined; the result
/// is flagged degenerate with statistic 0, p = 1 and a zero-width interval.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TestResult> {
    check_pair(a, b, 2)?;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len();
    let df = (n - 1) as f64;
    let m = mean(&d);
    if d.iter().all(|v| *v == d[0]) {
        return Ok(TestResult {
            statistic: 0.0,
            p_value: 1.0,
            df: Some(df),
            n_a: n,
            n_b: n,
            mean_diff: Some(d[0]),
            ci: Some((d[0], d[0])),
            degenerate: true,
        });
    }
    let se = sample_std(&d) / (n as f64).sqrt();
    let t = m / se;
    let q = special::t_two_sided_quantile(0.05, df);
    Ok(TestResult {
        statistic: t,
        p_value: special::t_two_sided_p(t, df),
        df: Some(df),
        n_a: n,
        n_b: n,
        mean_diff: Some(m),
        ci: Some((m - q * se, m + q * se)),
        degenerate: false,
    })
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic p-value at
/// effective size `n·m/(n+m)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("KS test needs two nonempty samples".into()));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j, mut stat) = (0usize, 0usize, 0.0f64);
    while i < sa.len() && j < sb.len() {
        let v = sa[i].min(sb[j]);
        while i < sa.len() && sa[i] <= v {
            i += 1;
        }
        while j < sb.len() && sb[j] <= v {
            j += 1;
        }
        stat = stat.max((i as f64 / na - j as f64 / nb).abs());
    }
    let en = na * nb / (na + nb);
    Ok(TestResult {
        statistic: stat,
        p_value: special::kolmogorov_sf(stat * en.sqrt()),
        df: None,
        n_a: sa.len(),
        n_b: sb.len(),
        mean_diff: Some(mean(a) - mean(b)),
        ci: None,
        degenerate: false,
    })
}

/// Cohen's d, `(mean(a) - mean(b)) / pooled sample sd`. Zero pooled spread is degenerate.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<Estimate> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("Cohen's d needs two nonempty samples".into()));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    if na + nb < 3.0 {
        return Ok(Estimate {
            value: 0.0,
            degenerate: true,
        });
    }
    let ss = |v: &[f64]| {
        let m = mean(v);
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>()
    };
    let pooled = ((ss(a) + ss(b)) / (na + nb - 2.0)).sqrt();
    if pooled == 0.0 {
        return Ok(Estimate {
            value: 0.0,
            degenerate: true,
        });
    }
    Ok(Estimate {
        value: (mean(a) - mean(b)) / pooled,
        degenerate: false,
    })
}

/// Default number of equal-width bins for [`overlap_coefficient`].
pub const OVERLAP_BINS: usize = 20;

/// Histogram overlap `Σ min(p_a, p_b)` over equal-width bins spanning both samples.
pub fn overlap_coefficient(a: &[f64], b: &[f64], bins: usize) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("overlap needs two nonempty samples".into()));
    }
    if bins == 0 {
        return Err(Error::Parameter("bins must be at least 1".into()));
    }
    let (lo, hi) = a
        .iter()
        .chain(b)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if hi <= lo {
        return Ok(1.0);
    }
    let width = (hi - lo) / bins as f64;
    let hist = |v: &[f64]| {
        let mut h = vec![0.0; bins];
        for &x in v {
            let k = (((x - lo) / width).floor() as usize).min(bins - 1);
            h[k] += 1.0;
        }
        h.iter_mut().for_each(|c| *c /= v.len() as f64);
        h
    };
    let (ha, hb) = (hist(a), hist(b));
    Ok(ha.iter().zip(&hb).map(|(x, y)| x.min(*y)).sum::<f64>().clamp(0.0, 1.0))
}
