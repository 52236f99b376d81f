use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid point: {0}")]
    InvalidPoint(String),

    /// The target lies on the cut locus of the basepoint, so no unique
    /// minimal-norm preimage exists.
    #[error("point lies on the cut locus of the basepoint")]
    CutLocus,

    #[error("cannot project the zero vector onto the manifold")]
    ZeroProjection,

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("Cholesky factorization failed after maximal jitter {max_jitter:e}")]
    Cholesky { max_jitter: f64 },

    #[error("Frechet mean did not converge after {iterations} iterations (last step norm {step_norm:e})")]
    FrechetNotConverged {
        iterations: usize,
        step_norm: f64,
        last: Vec<f64>,
    },

    #[error("objective became non-finite at iteration {iteration}")]
    NonFiniteObjective {
        iteration: usize,
        trace: Vec<(usize, f64)>,
    },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("{path}:{line}: {message}")]
    Data {
        path: String,
        line: u64,
        message: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn data(path: impl Into<String>, line: u64, message: impl Into<String>) -> Self {
        Error::Data {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Coarse category used by front ends to pick exit codes.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Data { .. } | Error::Io(_) | Error::Checkpoint(_) | Error::InvalidPoint(_) => {
                ErrorCategory::Data
            }
            Error::InvalidArgument(_) | Error::DimensionMismatch { .. } => ErrorCategory::Config,
            _ => ErrorCategory::Numerical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numerical,
}
