//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("unsupported good-function kind for this operation: {0}")]
    UnsupportedKind(String),

    #[error("goodness violation: {0}")]
    GoodnessViolation(String),

    #[error("singular matrix: smallest eigenvalue {min_eig} below threshold")]
    SingularMatrix { min_eig: f64 },

    #[error("finite-difference stencil does not fit at node {0:?}")]
    Stencil(Vec<usize>),

    #[error("dual box does not cover the gradient range: argmax on the primal boundary for interior dual node {0:?}")]
    RangeCoverage(Vec<usize>),

    #[error("density mass error: {0}")]
    Mass(String),

    #[error("solver did not converge within {iterations} iterations (marginal residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("epsilon schedule error: {0}")]
    Schedule(String),

    #[error("point {point:?} outside the evaluation domain")]
    Domain { point: Vec<f64> },

    #[error("degenerate solution: {0}")]
    Degenerate(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
