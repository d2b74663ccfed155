//! Regression complexity meta-features.
//!
//! Everything is computed on the row-canonicalised, min-max normalised
//! dataset, which makes the measures exactly invariant to row order.

use serde::{Deserialize, Serialize};

use crate::data::{minmax_normalize, squared_distance, Dataset, Matrix};
use crate::error::{Error, Result};
use crate::learners::{fit_ols, nearest};
use crate::stats::{average_ranks, spearman};

/// Correlation threshold of the C3 removal loop.
pub const C3_THRESHOLD: f64 = 0.9;
/// Residual threshold below which C4 considers an example explained.
pub const C4_RESIDUAL: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetaFeatureVector {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
    pub s4: f64,
    pub t2: f64,
}

impl MetaFeatureVector {
    pub const NAMES: [&'static str; 12] = ["c1", "c2", "c3", "c4", "l1", "l2", "l3", "s1", "s2", "s3", "s4", "t2"];

    pub fn to_array(&self) -> [f64; 12] {
        [
            self.c1, self.c2, self.c3, self.c4, self.l1, self.l2, self.l3, self.s1, self.s2, self.s3, self.s4, self.t2,
        ]
    }

    pub fn from_array(v: [f64; 12]) -> Self {
        MetaFeatureVector {
            c1: v[0],
            c2: v[1],
            c3: v[2],
            c4: v[3],
            l1: v[4],
            l2: v[5],
            l3: v[6],
            s1: v[7],
            s2: v[8],
            s3: v[9],
            s4: v[10],
            t2: v[11],
        }
    }
}

pub fn compute_meta_features(d: &Dataset) -> Result<MetaFeatureVector> {
    let n = d.n_rows();
    if n < 3 {
        return Err(Error::InsufficientData(format!(
            "complexity measures need at least 3 rows, {} has {n}",
            d.name()
        )));
    }
    let norm = minmax_normalize(&d.canonical_order());
    let x = norm.features();
    let y = norm.target();
    let dims = x.ncols();
    let nf = n as f64;

    let columns: Vec<Vec<f64>> = (0..dims).map(|j| x.column(j)).collect();
    let rhos: Vec<f64> = columns
        .iter()
        .map(|c| spearman(c, y).map(|e| e.value.abs()))
        .collect::<Result<_>>()?;
    let c1 = 1.0 - rhos.iter().cloned().fold(0.0, f64::max);
    let c2 = 1.0 - rhos.iter().sum::<f64>() / dims as f64;

    let c3 = columns
        .iter()
        .map(|c| c3_removed(c, y) as f64)
        .fold(f64::INFINITY, f64::min)
        / nf;
    let c4 = c4_remaining(&columns, y)? as f64 / nf;

    let ols = fit_ols(x, y)?;
    let resid: Vec<f64> = ols.predict(x).iter().zip(y).map(|(p, t)| t - p).collect();
    let l1 = resid.iter().map(|r| r.abs()).sum::<f64>() / nf;
    let l2 = resid.iter().map(|r| r * r).sum::<f64>() / nf;

    let nn: Vec<usize> = (0..n).map(|i| nearest(x, x.row(i), 1, Some(i))[0].1).collect();
    let (mid_x, mid_y) = midpoints(x, y, &nn);
    let l3 = mse(&ols.predict(&mid_x), &mid_y);

    let s1 = mst_output_variation(x, y);
    let s2 = (1..n)
        .map(|i| squared_distance(x.row(i), x.row(i - 1)).sqrt())
        .sum::<f64>()
        / (nf - 1.0);
    let s3 = (0..n).map(|i| (y[i] - y[nn[i]]).powi(2)).sum::<f64>() / nf;
    let s4_pred: Vec<f64> = mid_x.rows_iter().map(|q| y[nearest(x, q, 1, None)[0].1]).collect();
    let s4 = mse(&s4_pred, &mid_y);

    let clip = |v: f64| v.max(0.0);
    Ok(MetaFeatureVector {
        c1: clip(c1),
        c2: clip(c2),
        c3: clip(c3),
        c4: clip(c4),
        l1: clip(l1),
        l2: clip(l2),
        l3: clip(l3),
        s1: clip(s1),
        s2: clip(s2),
        s3: clip(s3),
        s4: clip(s4),
        t2: nf / dims as f64,
    })
}

fn mse(pred: &[f64], truth: &[f64]) -> f64 {
    pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / truth.len() as f64
}

fn midpoints(x: &Matrix, y: &[f64], nn: &[usize]) -> (Matrix, Vec<f64>) {
    let mut mx = Matrix::zeros(x.nrows(), x.ncols());
    let mut my = Vec::with_capacity(x.nrows());
    for (i, &j) in nn.iter().enumerate() {
        for (k, v) in mx.row_mut(i).iter_mut().enumerate() {
            *v = 0.5 * (x.get(i, k) + x.get(j, k));
        }
        my.push(0.5 * (y[i] + y[j]));
    }
    (mx, my)
}

/// Number of examples removed before |spearman(x, y)| exceeds the threshold.
/// Each step drops the example whose ranks disagree most with the current
/// correlation direction; ties go to the lowest remaining position.
fn c3_removed(x: &[f64], y: &[f64]) -> usize {
    let mut xs = x.to_vec();
    let mut ys = y.to_vec();
    let mut removed = 0;
    while xs.len() > 2 {
        let rho = spearman(&xs, &ys).map(|e| e.value).unwrap_or(0.0);
        if rho.abs() > C3_THRESHOLD {
            break;
        }
        let (rx, ry) = (average_ranks(&xs), average_ranks(&ys));
        let m1 = xs.len() as f64 + 1.0;
        let mut worst = 0;
        let mut worst_gap = f64::NEG_INFINITY;
        for i in 0..xs.len() {
            let gap = if rho < 0.0 {
                (rx[i] + ry[i] - m1).abs()
            } else {
                (rx[i] - ry[i]).abs()
            };
            if gap > worst_gap {
                worst_gap = gap;
                worst = i;
            }
        }
        xs.remove(worst);
        ys.remove(worst);
        removed += 1;
    }
    removed
}

/// Examples left unexplained after greedily fitting one feature at a time.
fn c4_remaining(columns: &[Vec<f64>], y: &[f64]) -> Result<usize> {
    let mut rows: Vec<usize> = (0..y.len()).collect();
    let mut features: Vec<usize> = (0..columns.len()).collect();
    while !rows.is_empty() && !features.is_empty() {
        let ys: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
        let mut best = 0;
        let mut best_rho = f64::NEG_INFINITY;
        for (pos, &j) in features.iter().enumerate() {
            let xs: Vec<f64> = rows.iter().map(|&i| columns[j][i]).collect();
            let rho = if rows.len() >= 2 {
                spearman(&xs, &ys)?.value.abs()
            } else {
                0.0
            };
            if rho > best_rho {
                best_rho = rho;
                best = pos;
            }
        }
        let j = features.remove(best);
        let xs = Matrix::from_columns(&[rows.iter().map(|&i| columns[j][i]).collect::<Vec<_>>()])?;
        let model = fit_ols(&xs, &ys)?;
        let pred = model.predict(&xs);
        rows = rows
            .iter()
            .zip(pred.iter().zip(&ys))
            .filter(|(_, (p, t))| (*t - *p).abs() >= C4_RESIDUAL)
            .map(|(&i, _)| i)
            .collect();
    }
    Ok(rows.len())
}

/// Mean |Δy| over the edges of the Euclidean minimum spanning tree (Prim).
fn mst_output_variation(x: &Matrix, y: &[f64]) -> f64 {
    let n = x.nrows();
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut parent = vec![0usize; n];
    in_tree[0] = true;
    for (j, b) in best.iter_mut().enumerate().skip(1) {
        *b = squared_distance(x.row(0), x.row(j));
    }
    let mut total = 0.0;
    for _ in 1..n {
        let mut v = usize::MAX;
        let mut bd = f64::INFINITY;
        for j in 0..n {
            if !in_tree[j] && (v == usize::MAX || best[j] < bd) {
                v = j;
                bd = best[j];
            }
        }
        in_tree[v] = true;
        total += (y[v] - y[parent[v]]).abs();
        for j in 0..n {
            if !in_tree[j] {
                let d = squared_distance(x.row(v), x.row(j));
                if d < best[j] {
                    best[j] = d;
                    parent[j] = v;
                }
            }
        }
    }
    total / (n - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(cols: &[Vec<f64>], y: Vec<f64>) -> Dataset {
        Dataset::with_default_names("t", Matrix::from_columns(cols).unwrap(), y).unwrap()
    }

    #[test]
    fn exact_linear_data() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 / 7.0).collect();
        let y = x.iter().map(|v| 2.0 * v).collect();
        let f = compute_meta_features(&dataset(&[x], y)).unwrap();
        assert_eq!(f.c1, 0.0);
        assert_eq!(f.c2, 0.0);
        assert!(f.l1 < 1e-12 && f.l2 < 1e-20);
        assert_eq!(f.c3, 0.0);
        assert_eq!(f.c4, 0.0);
        assert_eq!(f.t2, 50.0);
    }

    #[test]
    fn too_few_rows() {
        let d = dataset(&[vec![1.0, 2.0]], vec![1.0, 2.0]);
        assert!(matches!(compute_meta_features(&d), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn mst_on_a_path() {
        // Points on a line: the MST is the path, so the variation is the mean step.
        let x = Matrix::from_columns(&[[0.0, 1.0, 3.0, 6.0]]).unwrap();
        let y = [0.0, 1.0, 0.0, 2.0];
        assert!((mst_output_variation(&x, &y) - (1.0 + 1.0 + 2.0) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn c3_on_reversed_pair_structure() {
        // Perfect monotone relation: nothing needs removing.
        assert_eq!(c3_removed(&[1.0, 2.0, 3.0, 4.0], &[4.0, 3.0, 2.0, 1.0]), 0);
        // Constant feature never correlates, so removal runs down to two rows.
        assert_eq!(c3_removed(&[1.0; 6], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]), 4);
    }
}
