use std::io;

use thiserror::Error;

/// Errors raised by model construction, sampling, and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {field}: expected {expected}, found {found}")]
    DimensionMismatch {
        field: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {field} at ({row}, {col})")]
    NonFinite {
        field: &'static str,
        row: usize,
        col: usize,
    },

    #[error("invalid hyperparameter {field}: {reason}")]
    InvalidHyperparameter { field: &'static str, reason: String },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerical routines themselves, as opposed to
    /// bad input or I/O.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Factorization(_) | Error::Degenerate(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
