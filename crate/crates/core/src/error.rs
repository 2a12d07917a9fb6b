use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("stale or mismatched forward cache: {0}")]
    Cache(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("AUC undefined: {0}")]
    UndefinedAuc(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("run too short: {0}")]
    TooShort(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("oracle mismatch: {0}")]
    Oracle(String),

    #[error("checkpoint not found at {}", .0.display())]
    MissingCheckpoint(PathBuf),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// True for errors caused by user-supplied configuration.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Schema(_))
    }

    /// True for non-finite values or exploded training.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric(_))
    }
}
