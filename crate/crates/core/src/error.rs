use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the workbench.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("dataset is empty after cleaning: {0}")]
    EmptyDataset(String),

    #[error("encoding error: {0}")]
    Encoding(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("mechanism validation failed: {0}")]
    Mechanism(String),

    #[error("candidate budget exceeded: {count} candidates (limit {limit})")]
    CandidateBudget { count: usize, limit: usize },

    #[error("proposer failure: {0}")]
    Proposer(String),

    #[error("refusing to overwrite existing path {}", .0.display())]
    AlreadyExists(PathBuf),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("io error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
