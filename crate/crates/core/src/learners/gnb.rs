use std::f64::consts::PI;

use crate::data::Matrix;
use crate::error::{Error, Result};

/// Gaussian naive Bayes for a binary label.
#[derive(Debug, Clone, PartialEq)]
pub struct GnbModel {
    /// Present classes in ascending order (0 before 1).
    pub classes: Vec<bool>,
    pub log_priors: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

impl GnbModel {
    /// Fits per-class means and variances. Every variance is smoothed by
    /// `1e-9 × (largest feature variance over the whole training set)`.
    pub fn fit(x: &Matrix, labels: &[bool]) -> Result<GnbModel> {
        if x.nrows() != labels.len() {
            return Err(Error::LengthMismatch {
                expected: x.nrows(),
                actual: labels.len(),
            });
        }
        if labels.is_empty() {
            return Err(Error::InsufficientData("naive Bayes needs at least one example".into()));
        }
        let d = x.ncols();
        let max_var = (0..d).map(|j| crate::data::variance(&x.column(j))).fold(0.0, f64::max);
        let epsilon = if max_var > 0.0 { 1e-9 * max_var } else { 1e-9 };
        let n = labels.len() as f64;
        let mut model = GnbModel {
            classes: Vec::new(),
            log_priors: Vec::new(),
            means: Vec::new(),
            variances: Vec::new(),
        };
        for class in [false, true] {
            let rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
            if rows.is_empty() {
                continue;
            }
            let sub = x.select_rows(&rows);
            let mut means = Vec::with_capacity(d);
            let mut vars = Vec::with_capacity(d);
            for j in 0..d {
                let col = sub.column(j);
                means.push(crate::data::mean(&col));
                vars.push(crate::data::variance(&col) + epsilon);
            }
            model.classes.push(class);
            model.log_priors.push((rows.len() as f64 / n).ln());
            model.means.push(means);
            model.variances.push(vars);
        }
        Ok(model)
    }

    fn joint_log_likelihood(&self, c: usize, x: &[f64]) -> f64 {
        let mut ll = self.log_priors[c];
        for ((v, m), s2) in x.iter().zip(&self.means[c]).zip(&self.variances[c]) {
            ll -= 0.5 * (2.0 * PI * s2).ln() + (v - m) * (v - m) / (2.0 * s2);
        }
        ll
    }

    /// Most probable class; an exact tie goes to class 0.
    pub fn predict_row(&self, x: &[f64]) -> bool {
        let mut best = 0;
        let mut best_ll = self.joint_log_likelihood(0, x);
        for c in 1..self.classes.len() {
            let ll = self.joint_log_likelihood(c, x);
            if ll > best_ll {
                best = c;
                best_ll = ll;
            }
        }
        self.classes[best]
    }

    pub fn predict(&self, x: &Matrix) -> Vec<bool> {
        x.rows_iter().map(|r| self.predict_row(r)).collect()
    }
}

/// Fits on `(x_train, labels)` and predicts `x_query`.
pub fn gnb_fit_predict(x_train: &Matrix, labels: &[bool], x_query: &Matrix) -> Result<Vec<bool>> {
    Ok(GnbModel::fit(x_train, labels)?.predict(x_query))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_clusters() {
        let x = Matrix::from_columns(&[[-6.0, -5.0, -4.0, 4.0, 5.0, 6.0]]).unwrap();
        let y = [false, false, false, true, true, true];
        let q = Matrix::from_columns(&[[-5.0, 5.0, 0.0]]).unwrap();
        // Symmetric classes: the midpoint is an exact tie and goes to class 0.
        assert_eq!(gnb_fit_predict(&x, &y, &q).unwrap(), vec![false, true, false]);
    }

    #[test]
    fn single_class() {
        let x = Matrix::from_columns(&[[1.0, 2.0, 3.0]]).unwrap();
        let q = Matrix::from_columns(&[[-100.0, 100.0]]).unwrap();
        assert_eq!(gnb_fit_predict(&x, &[true; 3], &q).unwrap(), vec![true, true]);
        assert_eq!(gnb_fit_predict(&x, &[false; 3], &q).unwrap(), vec![false, false]);
    }

    #[test]
    fn priors_sum_to_one() {
        let x = Matrix::from_columns(&[[1.0, 2.0, 3.0, 4.0]]).unwrap();
        let m = GnbModel::fit(&x, &[true, false, false, false]).unwrap();
        let s: f64 = m.log_priors.iter().map(|l| l.exp()).sum();
        assert!((s - 1.0).abs() < 1e-15);
        assert!(m.variances.iter().flatten().all(|v| *v > 0.0));
    }
}
