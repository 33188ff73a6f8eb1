//! Estimators driven by the scalar-channel statistics `(q, μ)`: the
//! metric-optimal estimate (argmin of the posterior expected error, computed
//! componentwise by separability), the convex ℓp surrogate used to chase low
//! ℓ∞ error, the linear Wiener shrinkage filter, and the support-threshold
//! detector.

use crate::error::{Error, Result};
use crate::math;
use crate::model::{ErrorMetric, SignalPrior};
use crate::posterior::{posterior, MixedPosterior, ScalarChannelOutput};

/// Named estimator selectable by the experiment harness.
#[derive(Debug, Clone)]
pub enum EstimatorSpec {
    MetricOptimal { metric: ErrorMetric },
    LpHeuristic { p: f64 },
    WienerLinf,
    SupportThreshold,
}

impl EstimatorSpec {
    pub fn lp(p: f64) -> Result<Self> {
        if !(p >= 1.0) {
            return Err(Error::Domain(format!(
                "lp heuristic requires p >= 1 (got {p}); exponents below 1 are reachable via metric-optimal:pow"
            )));
        }
        Ok(EstimatorSpec::LpHeuristic { p })
    }

    /// Parse the harness estimator strings: `metric-optimal:squared`,
    /// `metric-optimal:abs`, `metric-optimal:pow:<p>`,
    /// `metric-optimal:support`, `lp:<p>`, `wiener-linf`,
    /// `support-threshold`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["metric-optimal", "squared"] => Ok(EstimatorSpec::MetricOptimal {
                metric: ErrorMetric::Squared,
            }),
            ["metric-optimal", "abs"] => Ok(EstimatorSpec::MetricOptimal {
                metric: ErrorMetric::Absolute,
            }),
            ["metric-optimal", "pow", p] => {
                let p: f64 = p
                    .parse()
                    .map_err(|_| Error::Config(format!("bad exponent in '{s}'")))?;
                Ok(EstimatorSpec::MetricOptimal {
                    metric: ErrorMetric::pow(p)?,
                })
            }
            ["metric-optimal", "support"] => Ok(EstimatorSpec::MetricOptimal {
                metric: ErrorMetric::SupportXor,
            }),
            ["lp", p] => {
                let p: f64 = p
                    .parse()
                    .map_err(|_| Error::Config(format!("bad exponent in '{s}'")))?;
                EstimatorSpec::lp(p)
            }
            ["wiener-linf"] => Ok(EstimatorSpec::WienerLinf),
            ["support-threshold"] => Ok(EstimatorSpec::SupportThreshold),
            _ => Err(Error::Config(format!("unknown estimator '{s}'"))),
        }
    }

    pub fn name(&self) -> String {
        match self {
            EstimatorSpec::MetricOptimal { metric } => match metric {
                ErrorMetric::Squared => "metric-optimal:squared".into(),
                ErrorMetric::Absolute => "metric-optimal:abs".into(),
                ErrorMetric::PowP { p } => format!("metric-optimal:pow:{p}"),
                ErrorMetric::SupportXor => "metric-optimal:support".into(),
                ErrorMetric::Custom { name, .. } => format!("metric-optimal:custom:{name}"),
            },
            EstimatorSpec::LpHeuristic { p } => format!("lp:{p}"),
            EstimatorSpec::WienerLinf => "wiener-linf".into(),
            EstimatorSpec::SupportThreshold => "support-threshold".into(),
        }
    }

    /// Run the estimator on scalar-channel statistics.
    pub fn apply(&self, sco: &ScalarChannelOutput, prior: &SignalPrior) -> Result<Vec<f64>> {
        match self {
            EstimatorSpec::MetricOptimal { metric } => metric_optimal(metric, sco, prior),
            EstimatorSpec::LpHeuristic { p } => lp_estimate(*p, sco, prior),
            EstimatorSpec::WienerLinf => wiener_linf(sco, prior),
            EstimatorSpec::SupportThreshold => {
                let (support, _tau) = support_estimate(sco, prior)?;
                sco.q
                    .iter()
                    .zip(&support)
                    .map(|(&q, &on)| {
                        if on {
                            Ok(posterior(prior, q, sco.mu)?.continuous_mean())
                        } else {
                            Ok(0.0)
                        }
                    })
                    .collect()
            }
        }
    }
}

/// Posterior expectation `E[d(x̂, X) | q]` under a mixed posterior.
///
/// Squared and absolute errors have exact expressions through the posterior
/// moments and partial means; other metrics are summed over the support
/// representation.
pub fn expected_metric(post: &MixedPosterior, metric: &ErrorMetric, xhat: f64) -> Result<f64> {
    match metric {
        ErrorMetric::Squared => {
            let (m, v) = post.moments();
            return Ok(v + (m - xhat) * (m - xhat));
        }
        ErrorMetric::Absolute => {
            let f = post.cdf(xhat);
            return Ok(xhat * (2.0 * f - 1.0) + post.upper_partial_mean(xhat)
                - post.lower_partial_mean(xhat));
        }
        _ => {}
    }
    let mut total = if post.atom_mass_at_zero() > 0.0 {
        post.atom_mass_at_zero() * metric.checked_distance(xhat, 0.0)?
    } else {
        0.0
    };
    for (&x, &w) in post.grid().iter().zip(post.density_weights()) {
        total += w * metric.checked_distance(xhat, x)?;
    }
    Ok(total)
}

/// ln E[|x̂ - X|^p | q] via streaming log-sum-exp; safe for exponents large
/// enough that the direct sum would overflow.
fn log_expected_pow(post: &MixedPosterior, p: f64, xhat: f64) -> f64 {
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    let mut push = |log_w: f64, diff: f64| {
        let t = log_w + p * diff.abs().ln();
        if t == f64::NEG_INFINITY {
            return;
        }
        if t <= max {
            sum += (t - max).exp();
        } else {
            sum = sum * (max - t).exp() + 1.0;
            max = t;
        }
    };
    if post.atom_mass_at_zero() > 0.0 {
        push(post.atom_mass_at_zero().ln(), xhat);
    }
    for (&x, &w) in post.grid().iter().zip(post.density_weights()) {
        if w > 0.0 {
            push(w.ln(), xhat - x);
        }
    }
    if sum == 0.0 {
        f64::NEG_INFINITY
    } else {
        max + sum.ln()
    }
}

fn expected_pow_direct(post: &MixedPosterior, p: f64, xhat: f64) -> f64 {
    let mut total = post.atom_mass_at_zero() * math::pow_abs(xhat, p);
    for (&x, &w) in post.grid().iter().zip(post.density_weights()) {
        total += w * math::pow_abs(xhat - x, p);
    }
    total
}

const COARSE_SCAN_POINTS: usize = 512;

/// Coarse scan over the bracket followed by golden-section refinement; zero
/// is always tried as an explicit candidate because the atom puts a kink
/// there. Robust to the non-convex landscapes of p < 1 metrics.
fn scan_then_refine<F: FnMut(f64) -> Result<f64>>(mut f: F, lo: f64, hi: f64) -> Result<f64> {
    if !(hi > lo) {
        return Ok(lo);
    }
    let step = (hi - lo) / (COARSE_SCAN_POINTS - 1) as f64;
    let mut best_idx = 0;
    let mut best_val = f64::INFINITY;
    for i in 0..COARSE_SCAN_POINTS {
        let x = lo + step * i as f64;
        let v = f(x)?;
        if v < best_val {
            best_val = v;
            best_idx = i;
        }
    }
    let a = lo + step * best_idx.saturating_sub(1) as f64;
    let b = (lo + step * (best_idx + 1) as f64).min(hi);
    let mut err = None;
    let (x_ref, v_ref) = math::golden_section(
        |x| match f(x) {
            Ok(v) => v,
            Err(e) => {
                err = Some(e);
                f64::INFINITY
            }
        },
        a,
        b,
        ((hi - lo) * 1e-9).max(1e-15),
    );
    if let Some(e) = err {
        return Err(e);
    }
    let mut best = (x_ref, v_ref);
    if lo <= 0.0 && hi >= 0.0 {
        let v0 = f(0.0)?;
        if v0 < best.1 {
            best = (0.0, v0);
        }
    }
    Ok(best.0)
}

/// Golden section alone, for objectives known to be convex in x̂.
fn refine_convex<F: FnMut(f64) -> f64>(f: F, lo: f64, hi: f64) -> f64 {
    if !(hi > lo) {
        return lo;
    }
    let (x, _) = math::golden_section(f, lo, hi, ((hi - lo) * 1e-9).max(1e-15));
    x
}

/// Scalar estimate minimizing `E[d(x̂, X) | q]` over the real line.
///
/// Exact shortcuts: squared error -> posterior mean, absolute error ->
/// posterior median, support error -> zero/nonzero by the posterior test
/// (ties declare zero). Everything else is numeric argmin over the posterior
/// support bracket.
pub fn metric_optimal_scalar(metric: &ErrorMetric, post: &MixedPosterior) -> Result<f64> {
    match metric {
        ErrorMetric::Squared => Ok(post.moments().0),
        ErrorMetric::Absolute => post.quantile(0.5),
        ErrorMetric::SupportXor => {
            if post.nonzero_probability() <= 0.5 {
                Ok(0.0)
            } else {
                // The metric ignores the emitted magnitude; the mean of the
                // nonzero part is a cosmetic choice.
                Ok(post.continuous_mean())
            }
        }
        ErrorMetric::PowP { p } => {
            let p = *p;
            if p == 2.0 {
                return Ok(post.moments().0);
            }
            if p == 1.0 {
                return post.quantile(0.5);
            }
            let (lo, hi) = post.support_bracket();
            let width = (hi - lo).abs();
            let use_logspace = p * (1.0 + width).ln() > 600.0;
            if p > 1.0 {
                // Convex objective: golden section suffices.
                let x = if use_logspace {
                    refine_convex(|x| log_expected_pow(post, p, x), lo, hi)
                } else {
                    refine_convex(|x| expected_pow_direct(post, p, x), lo, hi)
                };
                Ok(x)
            } else {
                scan_then_refine(
                    |x| {
                        Ok(if use_logspace {
                            log_expected_pow(post, p, x)
                        } else {
                            expected_pow_direct(post, p, x)
                        })
                    },
                    lo,
                    hi,
                )
            }
        }
        ErrorMetric::Custom { .. } => {
            let (lo, hi) = post.support_bracket();
            scan_then_refine(|x| expected_metric(post, metric, x), lo, hi)
        }
    }
}

/// Componentwise metric-optimal estimate; the posterior and the metric are
/// both separable, so the vector argmin splits into scalar problems.
pub fn metric_optimal(
    metric: &ErrorMetric,
    sco: &ScalarChannelOutput,
    prior: &SignalPrior,
) -> Result<Vec<f64>> {
    sco.q
        .iter()
        .map(|&q| {
            let post = posterior(prior, q, sco.mu)?;
            metric_optimal_scalar(metric, &post)
        })
        .collect()
}

/// Componentwise minimizer of `E[|x̂ - X|^p | q]` for p >= 1; strictly convex
/// for p > 1, so plain golden section is enough.
pub fn lp_estimate(p: f64, sco: &ScalarChannelOutput, prior: &SignalPrior) -> Result<Vec<f64>> {
    if !(p >= 1.0) {
        return Err(Error::Domain(format!("lp estimate requires p >= 1, got {p}")));
    }
    metric_optimal(&ErrorMetric::PowP { p }, sco, prior)
}

/// Linear shrinkage `x̂ = σ²/(σ² + μ) · q`; the large-system ℓ∞-optimal
/// estimator for sparse Gaussian inputs. The gain uses the nonzero-component
/// variance σ², so a dense prior (s = 1) recovers the classical Wiener
/// filter q/(1+μ).
pub fn wiener_linf(sco: &ScalarChannelOutput, prior: &SignalPrior) -> Result<Vec<f64>> {
    let sigma2 = match prior {
        SignalPrior::SparseGaussian {
            nonzero_variance, ..
        } => *nonzero_variance,
        other => {
            return Err(Error::UnsupportedPrior(format!(
                "Wiener shrinkage is defined for the sparse Gaussian prior, got {other:?}"
            )))
        }
    };
    let gain = sigma2 / (sigma2 + sco.mu);
    Ok(sco.q.iter().map(|&q| gain * q).collect())
}

/// Support threshold for the sparse Gaussian prior:
/// `τ = 2 (σ²+μ)/(σ²/μ) · ln((1-s) √(σ²/μ + 1) / s)`, declaring component j
/// nonzero iff q_j² > τ. Equivalent to the posterior test π(q_j) > 1/2.
pub fn support_threshold(sparsity: f64, sigma2: f64, mu: f64) -> Result<f64> {
    if !(sparsity > 0.0 && sparsity < 1.0) {
        return Err(Error::DegeneratePrior(format!(
            "support threshold undefined for sparsity {sparsity}"
        )));
    }
    if !(sigma2 > 0.0) || !(mu > 0.0) {
        return Err(Error::Domain("sigma2 and mu must be positive".into()));
    }
    let snr = sigma2 / mu;
    Ok(2.0 * (sigma2 + mu) / snr * ((1.0 - sparsity) * (snr + 1.0).sqrt() / sparsity).ln())
}

/// Threshold detector: `(support bits, τ)` with bit j set iff q_j² > τ.
pub fn support_estimate(
    sco: &ScalarChannelOutput,
    prior: &SignalPrior,
) -> Result<(Vec<bool>, f64)> {
    let (s, sigma2) = match prior {
        SignalPrior::SparseGaussian {
            sparsity,
            nonzero_variance,
        } => (*sparsity, *nonzero_variance),
        other => {
            return Err(Error::UnsupportedPrior(format!(
                "support threshold is defined for the sparse Gaussian prior, got {other:?}"
            )))
        }
    };
    let tau = support_threshold(s, sigma2, sco.mu)?;
    let support = sco.q.iter().map(|&q| q * q > tau).collect();
    Ok((support, tau))
}
