use thiserror::Error;

use crate::sparse::SparseState;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index {index} out of range for {len} measurements")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("ensemble of {m} matrices of size {n}x{n} exceeds the addressable index range")]
    DimensionOverflow { n: usize, m: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("eigensolver did not converge within {iterations} iterations (residual {residual:e})")]
    EigenNonConvergence { iterations: usize, residual: f64 },

    #[error("zero vector where a nonzero vector is required: {0}")]
    ZeroVector(&'static str),

    #[error("range projection failed: non-finite objective in restart {restart}")]
    ProjectionFailure { restart: usize },

    /// The iterate became non-finite; carries the last finite state.
    #[error("iterate diverged at t = {}", .0.t)]
    Diverged(Box<SparseState>),

    #[error("output error: {0}")]
    Io(String),
}
