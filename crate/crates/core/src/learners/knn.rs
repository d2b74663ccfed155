use serde::{Deserialize, Serialize};

use crate::data::{squared_distance, Matrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    Uniform,
    Distance,
}

/// Brute-force k-nearest-neighbour regressor.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    k: usize,
    weighting: Weighting,
    x: Matrix,
    y: Vec<f64>,
}

impl KnnModel {
    pub fn fit(x: &Matrix, y: &[f64], k: usize, weighting: Weighting) -> Result<KnnModel> {
        if x.nrows() != y.len() {
            return Err(Error::LengthMismatch {
                expected: x.nrows(),
                actual: y.len(),
            });
        }
        if k == 0 || k > x.nrows() {
            return Err(Error::Parameter(format!(
                "k = {k} must lie in [1, {}] (training rows)",
                x.nrows()
            )));
        }
        Ok(KnnModel {
            k,
            weighting,
            x: x.clone(),
            y: y.to_vec(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn weighting(&self) -> Weighting {
        self.weighting
    }

    /// Indices and squared distances of the k nearest training rows, ordered by
    /// (distance, index).
    pub fn neighbours(&self, query: &[f64]) -> Vec<(f64, usize)> {
        nearest(&self.x, query, self.k, None)
    }

    pub fn predict_row(&self, query: &[f64]) -> f64 {
        let nb = self.neighbours(query);
        aggregate(&nb, &self.y, self.weighting)
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        x.rows_iter().map(|r| self.predict_row(r)).collect()
    }
}

/// The `k` rows of `x` nearest to `query` by Euclidean distance, ties broken by
/// lower index, optionally skipping one row. Returned as (squared distance, index).
pub fn nearest(x: &Matrix, query: &[f64], k: usize, skip: Option<usize>) -> Vec<(f64, usize)> {
    let mut all: Vec<(f64, usize)> = x
        .rows_iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != skip)
        .map(|(i, r)| (squared_distance(r, query), i))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    let k = k.min(all.len());
    if k < all.len() && k > 0 {
        all.select_nth_unstable_by(k - 1, cmp);
        all.truncate(k);
    }
    all.sort_by(cmp);
    all
}

fn aggregate(nb: &[(f64, usize)], y: &[f64], weighting: Weighting) -> f64 {
    match weighting {
        Weighting::Uniform => nb.iter().map(|&(_, i)| y[i]).sum::<f64>() / nb.len() as f64,
        Weighting::Distance => {
            let exact: Vec<f64> = nb.iter().filter(|(d, _)| *d == 0.0).map(|&(_, i)| y[i]).collect();
            if !exact.is_empty() {
                return exact.iter().sum::<f64>() / exact.len() as f64;
            }
            let (mut num, mut den) = (0.0, 0.0);
            for &(d2, i) in nb {
                let w = 1.0 / d2.sqrt();
                num += w * y[i];
                den += w;
            }
            num / den
        }
    }
}

/// Predictions of every `(k, weighting)` configuration for one query set,
/// sharing the distance computation. `ks` must be sorted ascending and every
/// entry at most the training size.
pub fn predict_many(
    x_train: &Matrix,
    y_train: &[f64],
    x_query: &Matrix,
    configs: &[(usize, Weighting)],
) -> Vec<Vec<f64>> {
    let k_max = configs.iter().map(|c| c.0).max().unwrap_or(1);
    let mut out = vec![Vec::with_capacity(x_query.nrows()); configs.len()];
    for q in x_query.rows_iter() {
        let nb = nearest(x_train, q, k_max, None);
        for (c, &(k, w)) in configs.iter().enumerate() {
            out[c].push(aggregate(&nb[..k.min(nb.len())], y_train, w));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> (Matrix, Vec<f64>) {
        (
            Matrix::from_columns(&[[0.0, 1.0, 2.0]]).unwrap(),
            vec![10.0, 20.0, 30.0],
        )
    }

    #[test]
    fn exact_match_with_distance_weights() {
        let (x, y) = line();
        let m = KnnModel::fit(&x, &y, 3, Weighting::Distance).unwrap();
        assert_eq!(m.predict_row(&[1.0]), 20.0);
    }

    #[test]
    fn full_k_uniform_is_global_mean() {
        let (x, y) = line();
        let m = KnnModel::fit(&x, &y, 3, Weighting::Uniform).unwrap();
        assert_eq!(m.predict_row(&[100.0]), 20.0);
        assert_eq!(m.predict_row(&[-3.0]), 20.0);
    }

    #[test]
    fn one_nn_ties_go_to_lower_index() {
        let (x, y) = line();
        let m = KnnModel::fit(&x, &y, 1, Weighting::Uniform).unwrap();
        assert_eq!(m.predict_row(&[0.4]), 10.0);
        assert_eq!(m.predict_row(&[0.5]), 10.0);
        assert_eq!(m.predict_row(&[1.5]), 20.0);
    }

    #[test]
    fn k_out_of_range_is_error() {
        let (x, y) = line();
        assert!(KnnModel::fit(&x, &y, 4, Weighting::Uniform).is_err());
        assert!(KnnModel::fit(&x, &y, 0, Weighting::Uniform).is_err());
    }

    #[test]
    fn predict_many_matches_single() {
        let x = Matrix::from_columns(&[[0.0, 1.0, 2.5, 4.0, 7.0]]).unwrap();
        let y = vec![1.0, 3.0, 2.0, 5.0, 4.0];
        let q = Matrix::from_columns(&[[0.3, 3.0, 6.0]]).unwrap();
        let cfgs = [
            (1, Weighting::Uniform),
            (3, Weighting::Distance),
            (5, Weighting::Uniform),
        ];
        let many = predict_many(&x, &y, &q, &cfgs);
        for (c, &(k, w)) in cfgs.iter().enumerate() {
            let m = KnnModel::fit(&x, &y, k, w).unwrap();
            assert_eq!(many[c], m.predict(&q));
        }
    }
}
