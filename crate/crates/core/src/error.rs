//! Crate-wide error type.

use thiserror::Error;

/// Per-iteration diagnostics recorded by the message-passing engine.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationStats {
    /// Iteration number, starting from 1.
    pub iteration: usize,
    /// Mean of the per-component scalar-channel noise variances.
    pub mean_variance: f64,
    /// Euclidean norm of the measurement residual `y - E[y | w = Φx̂]`.
    pub residual_norm: f64,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid metric: {0}")]
    Metric(String),

    #[error("unsupported prior: {0}")]
    UnsupportedPrior(String),

    #[error("degenerate prior: {0}")]
    DegeneratePrior(String),

    #[error("message passing diverged at iteration {iteration} (residual {residual:.3e}, best {best:.3e})")]
    Diverged {
        iteration: usize,
        residual: f64,
        best: f64,
        trace: Vec<IterationStats>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
