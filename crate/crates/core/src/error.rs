use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix entries must be finite")]
    NonFinite,

    #[error("not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid neighbor graph: {0}")]
    InvalidGraph(String),

    #[error("inner solver did not converge after {iterations} iterations (residual {residual:e})")]
    InnerNotConverged { iterations: usize, residual: f64 },

    #[error("step condition {index} violated (margin {margin:e})")]
    StepCondition { index: usize, margin: f64 },

    #[error("overall convexity violated: min eigenvalue of Q is {0:e}")]
    NotConvex(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
