//! Signal reconstruction for noisy linear mixing systems `y = channel(Φx)`.
//!
//! The pipeline has three stages:
//!
//! 1. [`bp`] — a relaxed belief-propagation engine reduces the vector
//!    problem to a bank of parallel scalar Gaussian channels
//!    `q_j = x_j + N(0, μ)`, the asymptotically sufficient statistics for
//!    the measurements.
//! 2. [`posterior`] — per-component mixed discrete/continuous posteriors
//!    `f(x_j | q_j)` under sparse priors, with moments and quantiles.
//! 3. [`estimators`] — the estimate minimizing the posterior expectation of
//!    any additive error metric, plus ℓ∞-oriented estimators (ℓp surrogate
//!    and Wiener shrinkage).
//!
//! [`limits`] evaluates the matching theoretical performance limits (minimum
//! mean user-defined / absolute / support error) and [`cosamp`] provides a
//! greedy-pursuit baseline for comparisons.

pub mod bp;
pub mod cosamp;
pub mod error;
pub mod estimators;
pub mod limits;
pub mod math;
pub mod model;
pub mod posterior;

pub use error::{Error, Result};
pub use model::{ErrorMetric, MixingMatrix, OutputChannel, SignalPrior};
pub use posterior::{MixedPosterior, ScalarChannelOutput};
