//! Base-level regressors, the meta-level learners and evaluation metrics.

mod gnb;
mod knn;
mod linear;
mod metrics;
mod svr;

pub use gnb::{gnb_fit_predict, GnbModel};
pub use knn::{nearest, predict_many, KnnModel, Weighting};
pub use linear::{fit_elasticnet, fit_elasticnet_with, fit_lasso, fit_ols, fit_ridge, CdFit, CdOptions, LinearModel};
pub use metrics::{hamming_loss, r2_score, subset_accuracy};
pub use svr::{fit_svr, fit_svr_precomputed, rbf_kernel, resolve_gamma, Gamma, SvrModel, SvrParams};

use serde::{Deserialize, Serialize};

use crate::data::{Matrix, MinMaxScaler};
use crate::error::Result;

/// A base regressor together with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RegressorConfig {
    Ols,
    Knn { k: usize, weighting: Weighting },
    Lasso { alpha: f64 },
    Ridge { alpha: f64 },
    ElasticNet { alpha: f64, l1_ratio: f64 },
}

/// A fitted base regressor.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedRegressor {
    Linear(LinearModel),
    Knn(KnnModel),
}

impl RegressorConfig {
    pub fn fit(&self, x: &Matrix, y: &[f64]) -> Result<FittedRegressor> {
        Ok(match *self {
            RegressorConfig::Ols => FittedRegressor::Linear(fit_ols(x, y)?),
            RegressorConfig::Knn { k, weighting } => FittedRegressor::Knn(KnnModel::fit(x, y, k, weighting)?),
            RegressorConfig::Lasso { alpha } => FittedRegressor::Linear(fit_lasso(x, y, alpha)?.model),
            RegressorConfig::Ridge { alpha } => FittedRegressor::Linear(fit_ridge(x, y, alpha)?),
            RegressorConfig::ElasticNet { alpha, l1_ratio } => {
                FittedRegressor::Linear(fit_elasticnet(x, y, alpha, l1_ratio)?.model)
            }
        })
    }
}

impl FittedRegressor {
    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        match self {
            FittedRegressor::Linear(m) => m.predict(x),
            FittedRegressor::Knn(m) => m.predict(x),
        }
    }
}

/// Min-max input scaling fitted on the training rows, followed by a regressor.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxPipeline {
    pub scaler: MinMaxScaler,
    pub model: FittedRegressor,
}

impl MinMaxPipeline {
    pub fn fit(config: &RegressorConfig, x: &Matrix, y: &[f64]) -> Result<Self> {
        let scaler = MinMaxScaler::fit(x);
        let model = config.fit(&scaler.transform(x), y)?;
        Ok(MinMaxPipeline { scaler, model })
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        self.model.predict(&self.scaler.transform(x))
    }
}

/// Fits the pipeline on the training rows and scores R² on the test rows.
pub fn pipeline_r2(
    config: &RegressorConfig,
    x_train: &Matrix,
    y_train: &[f64],
    x_test: &Matrix,
    y_test: &[f64],
) -> Result<f64> {
    let p = MinMaxPipeline::fit(config, x_train, y_train)?;
    r2_score(y_test, &p.predict(x_test))
}
