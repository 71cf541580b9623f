use thiserror::Error;

/// Errors raised across the solver stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("moment of order {alpha} diverges for mode {mode} (sigma = {sigma})")]
    DivergentMoment { alpha: f64, mode: usize, sigma: f64 },

    #[error("look-ahead depth {q} for mode {mode} outside [1, {max}]")]
    InvalidLookahead { mode: usize, q: usize, max: usize },

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("multi-index {0:?} is not covered by the transform block")]
    IndexOutOfRange(Vec<usize>),

    #[error("multi-index {0:?} is not in the boundary of the active set")]
    IndexNotInBoundary(Vec<usize>),

    #[error("edge {0} lies on the domain boundary")]
    BoundaryEdge(usize),

    #[error("solver did not converge after {maxit} iterations (relative residual {residual:e})")]
    NoConvergence { maxit: usize, residual: f64 },

    #[error("indicator map is empty")]
    EmptyIndicators,

    #[error("threshold {threshold} unreachable: all slab indicators sum to {available}")]
    UnreachableThreshold { threshold: f64, available: f64 },

    #[error("line {line}: {reason}")]
    ParseError { line: usize, reason: String },

    #[error("invalid value for `{key}`: {reason}")]
    ValidationError { key: String, reason: String },

    #[error("unsupported finite element order {0} (supported: 1, 2, 3)")]
    UnsupportedOrder(usize),

    #[error("{0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
