//! Crate-wide error type.

use thiserror::Error;

/// Unified error for cluster construction, solvers, and serialization.
#[derive(Debug, Error)]
pub enum Error {
    /// Cluster dimensions or indices violate a structural rule.
    #[error("invalid cluster: {0}")]
    InvalidCluster(String),

    /// The pi/4 initialization exists only for odd-length periodic chains.
    #[error("pi/4 initialization requires an odd periodic chain, got length {0}")]
    PiFourthRequiresOddChain(usize),

    /// A parameter vector does not match the layout it is used with.
    #[error("parameter shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    /// An eigensolver failed to converge.
    #[error("eigensolver failure: {0}")]
    Eigen(String),

    /// The variational optimizer could not reach the requested tolerance.
    #[error("optimizer failure: {0}")]
    Optimizer(String),

    /// Adaptive quadrature exhausted its refinement budget.
    #[error("quadrature failure: {0}")]
    Quadrature(String),

    /// A checkpoint or output file had unusable contents.
    #[error("malformed data: {0}")]
    MalformedData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
