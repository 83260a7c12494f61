use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("sampler failed at cell {cell} (t1={t1}, t2={t2}): {source}")]
    SamplerAtCell {
        cell: usize,
        t1: f64,
        t2: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("negative density {value} at index {index}")]
    NegativeDensity { index: usize, value: f64 },

    #[error("kernel row {row} overflowed despite log-sum-exp stabilization")]
    KernelOverflow { row: usize },

    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },

    #[error("non-finite parameter update at iteration {iteration}")]
    NonFiniteUpdate { iteration: usize },

    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("quadrature produced a non-finite value at T={temperature}; increase the quadrature order")]
    Quadrature { temperature: f64 },

    #[error("point ({0}, {1}) is outside the grid bounds")]
    OutOfBounds(f64, f64),

    #[error("degenerate path: {0}")]
    DegeneratePath(String),

    #[error("trajectory left the window |x| <= {window} at s={time}")]
    TrajectoryEscaped { window: f64, time: f64 },

    #[error("missing cells in feature file: {0:?}")]
    MissingCells(Vec<usize>),

    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
