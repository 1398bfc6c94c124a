use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    Shape(String),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("feature expansion infeasible: {0}")]
    InfeasibleExpansion(String),

    #[error("covariance is not symmetric positive semi-definite: {0}")]
    NotPsd(String),

    #[error("geometric median solver diverged at iteration {iteration}")]
    SolverDiverged { iteration: usize },

    #[error("candidate pool exhausted after {picked} of {requested} picks")]
    PoolExhausted { picked: usize, requested: usize },

    #[error("corruption mask required but missing")]
    MissingMask,

    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Format(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input data rather than bad arguments.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Config(_) | Error::PoolExhausted { .. })
    }
}
