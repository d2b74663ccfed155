//! Dataset representation, CSV ingestion and the preprocessing transforms.

mod csv_io;
mod matrix;
mod scaling;

pub use csv_io::{load_csv, load_csv_from_reader, write_csv, write_csv_to, CategoricalColumns, PreprocessSpec};
pub use matrix::{cholesky_solve, dot, mean, sample_std, squared_distance, variance, Matrix};
pub use scaling::{minmax_normalize, standardize_fit_transform, MinMaxScaler, StandardScaler, TargetScaler};

use std::cmp::Ordering;
use std::collections::HashSet;

use crate::error::{Error, Result};

/// A numeric feature matrix with one continuous target.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    target: Vec<f64>,
    column_names: Vec<String>,
    name: String,
}

impl Dataset {
    /// Validates and builds a dataset.
    ///
    /// Requires at least one row and one column, finite values, matching
    /// lengths and unique column names.
    pub fn new(name: impl Into<String>, features: Matrix, target: Vec<f64>, column_names: Vec<String>) -> Result<Self> {
        let name = name.into();
        if features.nrows() == 0 {
            return Err(Error::InvalidDataset(format!("{name}: no rows")));
        }
        if features.ncols() == 0 {
            return Err(Error::InvalidDataset(format!("{name}: no feature columns")));
        }
        if target.len() != features.nrows() {
            return Err(Error::LengthMismatch {
                expected: features.nrows(),
                actual: target.len(),
            });
        }
        if column_names.len() != features.ncols() {
            return Err(Error::LengthMismatch {
                expected: features.ncols(),
                actual: column_names.len(),
            });
        }
        let mut seen = HashSet::new();
        for c in &column_names {
            if !seen.insert(c.as_str()) {
                return Err(Error::InvalidDataset(format!("{name}: duplicate column name {c:?}")));
            }
        }
        if !features.is_finite() || target.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!("{name}: non-finite values")));
        }
        Ok(Dataset {
            features,
            target,
            column_names,
            name,
        })
    }

    /// Builds a dataset with the synthetic column layout `f0..f{d-1}`.
    pub fn with_default_names(name: impl Into<String>, features: Matrix, target: Vec<f64>) -> Result<Self> {
        let names = (0..features.ncols()).map(|j| format!("f{j}")).collect();
        Dataset::new(name, features, target, names)
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Returns the rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let target = indices.iter().map(|&i| self.target[i]).collect();
        Dataset::new(
            self.name.clone(),
            self.features.select_rows(indices),
            target,
            self.column_names.clone(),
        )
    }

    /// Rows sorted by target, ties broken by the feature values compared
    /// lexicographically. Any row permutation of a dataset maps to the same
    /// canonical dataset, so routines that canonicalise first are exactly
    /// invariant to row order.
    pub fn canonical_order(&self) -> Dataset {
        let mut idx: Vec<usize> = (0..self.n_rows()).collect();
        idx.sort_by(|&a, &b| {
            self.target[a].total_cmp(&self.target[b]).then_with(|| {
                for (x, y) in self.features.row(a).iter().zip(self.features.row(b)) {
                    match x.total_cmp(y) {
                        Ordering::Equal => continue,
                        other => return other,
                    }
                }
                Ordering::Equal
            })
        });
        let target = idx.iter().map(|&i| self.target[i]).collect();
        Dataset {
            features: self.features.select_rows(&idx),
            target,
            column_names: self.column_names.clone(),
            name: self.name.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Dataset {
        let x = Matrix::from_rows(&[[3.0, 1.0], [1.0, 2.0], [2.0, 0.0]]).unwrap();
        Dataset::with_default_names("d", x, vec![0.5, 0.1, 0.5]).unwrap()
    }

    #[test]
    fn rejects_duplicate_names_and_nan() {
        let x = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        assert!(Dataset::new("d", x.clone(), vec![1.0], vec!["a".into(), "a".into()]).is_err());
        let bad = Matrix::from_rows(&[[1.0, f64::NAN]]).unwrap();
        assert!(Dataset::with_default_names("d", bad, vec![1.0]).is_err());
        assert!(Dataset::with_default_names("d", x, vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn canonical_order_is_permutation_free() {
        let d = small();
        let p = d.subset(&[2, 0, 1]).unwrap();
        assert_eq!(d.canonical_order(), p.canonical_order());
        let c = d.canonical_order();
        assert_eq!(c.target(), &[0.1, 0.5, 0.5]);
        assert_eq!(c.features().row(1), &[2.0, 0.0]);
    }
}
