use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("column `{0}` not found in header")]
    UnknownColumn(String),

    #[error("non-numeric or missing value `{value}` at row {row}, column `{column}`")]
    NonNumeric { row: usize, column: String, value: String },

    #[error("dataset has {0} usable rows, need at least 2")]
    TooFewRows(usize),

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("dimension mismatch: expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input")]
    Empty,

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("quantile level {0} outside (0, 1)")]
    AlphaOutOfRange(f64),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("model file: {0}")]
    Model(String),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command line tool: 1 for usage
    /// errors, 2 for data errors, 3 for numeric failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::InvalidParam(_) | Error::AlphaOutOfRange(_) => 1,
            Error::Numeric(_) => 3,
            _ => 2,
        }
    }
}
