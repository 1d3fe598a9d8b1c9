use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument was outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inputs violated a structural precondition (shapes, missing columns).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("non-finite objective at EM iteration {iteration}")]
    NumericalFailure { iteration: usize },

    #[error("numerical failure: {0}")]
    NonFinite(String),

    #[error("degenerate prior: {0}")]
    DegeneratePrior(String),

    #[error("row {row} of table {table} has zero expected count")]
    StarvedRow { table: String, row: usize },

    #[error("exact enumeration infeasible: {completions} completions exceed cap {cap}")]
    Infeasible { completions: f64, cap: u64 },

    #[error("model selection failed: {0}")]
    Selection(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

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
