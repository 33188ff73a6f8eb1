//! Per-component posterior `f(x | q)` for the scalar Gaussian channel
//! `q = x + v`, `v ~ N(0, μ)`, represented as a mixed object: an atom at zero
//! plus a continuous (or discrete) part.
//!
//! Sparse priors make the posterior genuinely mixed; tracking the atom
//! explicitly keeps support probabilities exact. The sparse-Gaussian prior has
//! a conjugate closed form; other priors go through an adaptive quadrature
//! grid evaluated in log-space (the likelihood can be extremely peaked for
//! small μ).

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::math;
use crate::model::SignalPrior;

/// Scalar-channel sufficient statistics produced by the message-passing
/// front end: pseudo-observations `q` and their common noise variance `μ`.
#[derive(Debug, Clone)]
pub struct ScalarChannelOutput {
    pub q: Vec<f64>,
    pub mu: f64,
}

impl ScalarChannelOutput {
    pub fn new(q: Vec<f64>, mu: f64) -> Result<Self> {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::Domain(format!("channel variance must be positive, got {mu}")));
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("pseudo-observations must be finite".into()));
        }
        Ok(ScalarChannelOutput { q, mu })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ContinuousForm {
    /// Continuous part is exactly Gaussian (conjugate fast path); the stored
    /// grid holds Gauss-Hermite nodes so expectations reuse one code path.
    Gaussian { mean: f64, var: f64 },
    /// Grid nodes carry quadrature-cell masses of a continuous density.
    Gridded,
    /// Grid nodes are genuine point masses.
    Discrete,
}

/// Mixed discrete-continuous posterior: `atom_mass` at exactly zero plus a
/// normalized part supported on `grid`.
#[derive(Debug, Clone)]
pub struct MixedPosterior {
    atom_mass: f64,
    grid: Vec<f64>,
    weights: Vec<f64>,
    form: ContinuousForm,
    /// ln f_Q(q), the marginal density of the pseudo-observation under the
    /// generating (prior, q, μ); None for directly constructed posteriors.
    log_evidence: Option<f64>,
}

const GH_ORDER: usize = 61;
const COARSE_POINTS: usize = 1001;
pub const DEFAULT_GRID_POINTS: usize = 2001;
const SINGULAR_PREFIX_POINTS: usize = 257;

fn gh_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| math::gauss_hermite(GH_ORDER))
}

impl MixedPosterior {
    /// Atom at zero plus a Gaussian continuous part carrying `1 - atom_mass`.
    pub fn gaussian_mixture(atom_mass: f64, mean: f64, var: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&atom_mass) {
            return Err(Error::Domain(format!("atom mass {atom_mass} outside [0,1]")));
        }
        if atom_mass < 1.0 && !(var > 0.0) {
            return Err(Error::Domain(format!("continuous variance must be positive, got {var}")));
        }
        if atom_mass >= 1.0 {
            return Ok(Self::pure_atom(None));
        }
        let mass = 1.0 - atom_mass;
        let (t, w) = gh_rule();
        let scale = (2.0 * var).sqrt();
        let grid: Vec<f64> = t.iter().map(|&t| mean + scale * t).collect();
        let norm = mass / std::f64::consts::PI.sqrt();
        let weights: Vec<f64> = w.iter().map(|&w| w * norm).collect();
        Ok(MixedPosterior {
            atom_mass,
            grid,
            weights,
            form: ContinuousForm::Gaussian { mean, var },
            log_evidence: None,
        })
    }

    /// Atom at zero plus point masses; masses are normalized to `1 - atom`.
    pub fn discrete_mixture(atom_mass: f64, points: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if points.len() != masses.len() {
            return Err(Error::DimensionMismatch("points vs masses".into()));
        }
        if !(0.0..=1.0).contains(&atom_mass) {
            return Err(Error::Domain(format!("atom mass {atom_mass} outside [0,1]")));
        }
        if points.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::Domain("points must be strictly increasing".into()));
        }
        let total: f64 = masses.iter().sum();
        if masses.iter().any(|&m| !(m >= 0.0)) || (total <= 0.0 && atom_mass < 1.0) {
            return Err(Error::Domain("masses must be nonnegative with positive total".into()));
        }
        if atom_mass >= 1.0 {
            return Ok(Self::pure_atom(None));
        }
        let scale = (1.0 - atom_mass) / total;
        Ok(MixedPosterior {
            atom_mass,
            grid: points,
            weights: masses.iter().map(|&m| m * scale).collect(),
            form: ContinuousForm::Discrete,
            log_evidence: None,
        })
    }

    fn pure_atom(log_evidence: Option<f64>) -> Self {
        MixedPosterior {
            atom_mass: 1.0,
            grid: Vec::new(),
            weights: Vec::new(),
            form: ContinuousForm::Discrete,
            log_evidence,
        }
    }

    #[inline]
    pub fn atom_mass_at_zero(&self) -> f64 {
        self.atom_mass
    }

    #[inline]
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    #[inline]
    pub fn density_weights(&self) -> &[f64] {
        &self.weights
    }

    /// ln f_Q(q) of the generating channel, when known.
    #[inline]
    pub fn log_evidence(&self) -> Option<f64> {
        self.log_evidence
    }

    /// Total mass (should be 1 up to numerical noise).
    pub fn total_mass(&self) -> f64 {
        self.atom_mass + self.weights.iter().sum::<f64>()
    }

    /// Probability that the component is nonzero.
    #[inline]
    pub fn nonzero_probability(&self) -> f64 {
        1.0 - self.atom_mass
    }

    /// Exact mixture mean and variance.
    pub fn moments(&self) -> (f64, f64) {
        match self.form {
            ContinuousForm::Gaussian { mean, var } => {
                let mass = 1.0 - self.atom_mass;
                let m = mass * mean;
                let v = mass * (var + mean * mean) - m * m;
                (m, v.max(0.0))
            }
            _ => {
                let m1: f64 = self.grid.iter().zip(&self.weights).map(|(&x, &w)| w * x).sum();
                let m2: f64 = self
                    .grid
                    .iter()
                    .zip(&self.weights)
                    .map(|(&x, &w)| w * x * x)
                    .sum();
                (m1, (m2 - m1 * m1).max(0.0))
            }
        }
    }

    /// Mean of the nonzero part alone, `E[X | X != 0]`.
    pub fn continuous_mean(&self) -> f64 {
        match self.form {
            ContinuousForm::Gaussian { mean, .. } => mean,
            _ => {
                let mass: f64 = self.weights.iter().sum();
                if mass <= 0.0 {
                    0.0
                } else {
                    self.grid
                        .iter()
                        .zip(&self.weights)
                        .map(|(&x, &w)| w * x)
                        .sum::<f64>()
                        / mass
                }
            }
        }
    }

    /// CDF of the mixed distribution at x (atom jump included at 0).
    pub fn cdf(&self, x: f64) -> f64 {
        let atom = if x >= 0.0 { self.atom_mass } else { 0.0 };
        match self.form {
            ContinuousForm::Gaussian { mean, var } => {
                let mass = 1.0 - self.atom_mass;
                atom + mass * math::normal_cdf((x - mean) / var.sqrt())
            }
            _ => {
                let below: f64 = self
                    .grid
                    .iter()
                    .zip(&self.weights)
                    .take_while(|(&g, _)| g <= x)
                    .map(|(_, &w)| w)
                    .sum();
                atom + below
            }
        }
    }

    /// Smallest x with CDF(x) >= alpha; returns exactly 0 when the atom jump
    /// straddles alpha.
    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Domain(format!("quantile level {alpha} outside (0,1)")));
        }
        if self.atom_mass >= 1.0 {
            return Ok(0.0);
        }
        match self.form {
            ContinuousForm::Gaussian { mean, var } => {
                let mass = 1.0 - self.atom_mass;
                let sd = var.sqrt();
                let below_zero = mass * math::normal_cdf((0.0 - mean) / sd);
                if alpha <= below_zero {
                    Ok(mean + sd * math::normal_quantile((alpha / mass).min(1.0 - 1e-16)))
                } else if alpha <= below_zero + self.atom_mass {
                    Ok(0.0)
                } else {
                    let p = ((alpha - self.atom_mass) / mass).clamp(1e-300, 1.0 - 1e-16);
                    Ok(mean + sd * math::normal_quantile(p))
                }
            }
            _ => {
                // Point-mass CDF walk with the atom merged in at x = 0.
                let mut cum = 0.0;
                let mut atom_pending = self.atom_mass > 0.0;
                for (&x, &w) in self.grid.iter().zip(&self.weights) {
                    if atom_pending && x >= 0.0 {
                        cum += self.atom_mass;
                        atom_pending = false;
                        if cum >= alpha && x > 0.0 {
                            return Ok(0.0);
                        }
                    }
                    cum += w;
                    if cum >= alpha {
                        return Ok(x);
                    }
                }
                if atom_pending {
                    let before = cum;
                    cum += self.atom_mass;
                    if cum >= alpha && before < alpha {
                        return Ok(0.0);
                    }
                }
                Ok(self.grid.last().copied().unwrap_or(0.0))
            }
        }
    }

    /// Expectation of a pointwise function under the mixed posterior.
    pub fn expect<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        let mut total = if self.atom_mass > 0.0 {
            self.atom_mass * f(0.0)
        } else {
            0.0
        };
        for (&x, &w) in self.grid.iter().zip(&self.weights) {
            total += w * f(x);
        }
        total
    }

    /// ∫_{x > a} x dF(x); the atom at zero never contributes.
    pub fn upper_partial_mean(&self, a: f64) -> f64 {
        match self.form {
            ContinuousForm::Gaussian { mean, var } => {
                let mass = 1.0 - self.atom_mass;
                let sd = var.sqrt();
                let z = (a - mean) / sd;
                mass * (mean * math::normal_cdf(-z) + sd * math::normal_pdf(z))
            }
            _ => self
                .grid
                .iter()
                .zip(&self.weights)
                .filter(|(&x, _)| x > a)
                .map(|(&x, &w)| w * x)
                .sum(),
        }
    }

    /// ∫_{x <= a} x dF(x).
    pub fn lower_partial_mean(&self, a: f64) -> f64 {
        match self.form {
            ContinuousForm::Gaussian { mean, var } => {
                let mass = 1.0 - self.atom_mass;
                let sd = var.sqrt();
                let z = (a - mean) / sd;
                mass * (mean * math::normal_cdf(z) - sd * math::normal_pdf(z))
            }
            _ => self
                .grid
                .iter()
                .zip(&self.weights)
                .filter(|(&x, _)| x <= a)
                .map(|(&x, &w)| w * x)
                .sum(),
        }
    }

    /// Interval bracketing all posterior support, zero included when an atom
    /// is present. Used as the search bracket by the metric minimizers.
    pub fn support_bracket(&self) -> (f64, f64) {
        let lo = self.grid.first().copied().unwrap_or(0.0);
        let hi = self.grid.last().copied().unwrap_or(0.0);
        if self.atom_mass > 0.0 {
            (lo.min(0.0), hi.max(0.0))
        } else {
            (lo, hi)
        }
    }
}

/// Posterior of x given pseudo-observation `q` with noise variance `mu`.
///
/// Sparse-Gaussian priors use the conjugate closed form; Weibull goes through
/// the adaptive grid; tabulated priors stay discrete.
pub fn posterior(prior: &SignalPrior, q: f64, mu: f64) -> Result<MixedPosterior> {
    check_channel(q, mu)?;
    match prior {
        SignalPrior::SparseGaussian {
            sparsity,
            nonzero_variance,
        } => Ok(sparse_gaussian_posterior(*sparsity, *nonzero_variance, q, mu)),
        SignalPrior::SparseWeibull { .. } => posterior_grid(prior, q, mu, DEFAULT_GRID_POINTS),
        SignalPrior::Tabulated {
            atom_at_zero,
            points,
            weights,
        } => Ok(tabulated_posterior(*atom_at_zero, points, weights, q, mu)),
    }
}

/// Generic grid-quadrature posterior; also accepts the sparse-Gaussian prior
/// so the closed form can be cross-checked against the quadrature route.
pub fn posterior_grid(
    prior: &SignalPrior,
    q: f64,
    mu: f64,
    points: usize,
) -> Result<MixedPosterior> {
    posterior_grid_with(prior, q, mu, COARSE_POINTS, points)
}

/// Reduced-resolution variant used inside the message-passing iteration,
/// where the denoiser runs once per component per iteration and only needs
/// moment-level accuracy.
pub(crate) fn posterior_grid_fast(prior: &SignalPrior, q: f64, mu: f64) -> Result<MixedPosterior> {
    posterior_grid_with(prior, q, mu, 201, 301)
}

fn posterior_grid_with(
    prior: &SignalPrior,
    q: f64,
    mu: f64,
    coarse_points: usize,
    points: usize,
) -> Result<MixedPosterior> {
    check_channel(q, mu)?;
    let (sparsity, logpdf, support): (f64, Box<dyn Fn(f64) -> f64>, (f64, f64)) = match prior {
        SignalPrior::SparseGaussian {
            sparsity,
            nonzero_variance,
        } => {
            let v = *nonzero_variance;
            (
                *sparsity,
                Box::new(move |x: f64| math::normal_logpdf(x, 0.0, v)),
                (f64::NEG_INFINITY, f64::INFINITY),
            )
        }
        SignalPrior::SparseWeibull {
            sparsity,
            scale,
            shape,
        } => {
            let (lam, k) = (*scale, *shape);
            // Truncate where the prior density falls below 1e-300.
            let upper = lam * (700.0f64).powf(1.0 / k);
            (
                *sparsity,
                Box::new(move |x: f64| weibull_logpdf(x, lam, k)),
                (0.0, upper),
            )
        }
        SignalPrior::Tabulated {
            atom_at_zero,
            points,
            weights,
        } => return Ok(tabulated_posterior(*atom_at_zero, points, weights, q, mu)),
    };

    if sparsity <= 0.0 {
        let log_evidence = (1.0 - sparsity).ln() + math::normal_logpdf(q, 0.0, mu);
        let mut p = MixedPosterior::pure_atom(Some(log_evidence));
        p.log_evidence = Some(log_evidence);
        return Ok(p);
    }

    let spread = (prior_continuous_variance(prior) + mu).sqrt();
    let wide_lo = (q.min(0.0) - 8.0 * spread).max(support.0);
    let wide_hi = (q.max(0.0) + 8.0 * spread).min(support.1);

    // Coarse pass locates the continuous posterior mass; the fine pass covers
    // its center plus/minus eight standard deviations at full resolution.
    let coarse = build_grid(support, wide_lo, wide_hi, coarse_points, prior);
    let (c, s) = grid_mass_moments(&coarse, &logpdf, q, mu);
    let sigma = s.max(1e-6 * spread);
    let fine_lo = (c - 8.0 * sigma).max(support.0);
    let fine_hi = (c + 8.0 * sigma).min(support.1);
    let grid = build_grid(support, fine_lo, fine_hi, points.max(101), prior);
    debug_assert!(grid.windows(2).all(|p| p[0] < p[1]));

    // Log-space cell masses with a single max subtraction.
    let mut logs: Vec<f64> = Vec::with_capacity(grid.len() + 1);
    for (idx, &x) in grid.iter().enumerate() {
        let cell = cell_width(&grid, idx);
        logs.push(sparsity.ln() + logpdf(x) + math::normal_logpdf(q, x, mu) + cell.ln());
    }
    let log_atom = if sparsity < 1.0 {
        (1.0 - sparsity).ln() + math::normal_logpdf(q, 0.0, mu)
    } else {
        f64::NEG_INFINITY
    };
    logs.push(log_atom);
    let log_norm = math::log_sum_exp(&logs);
    if log_norm == f64::NEG_INFINITY {
        return Err(Error::Domain(
            "posterior vanished everywhere; inputs out of representable range".into(),
        ));
    }
    let atom_mass = (log_atom - log_norm).exp();
    let weights: Vec<f64> = logs[..grid.len()]
        .iter()
        .map(|&l| (l - log_norm).exp())
        .collect();
    Ok(MixedPosterior {
        atom_mass,
        grid,
        weights,
        form: ContinuousForm::Gridded,
        log_evidence: Some(log_norm),
    })
}

/// Posterior mean and variance (exact mixture moments).
pub fn posterior_moments(post: &MixedPosterior) -> (f64, f64) {
    post.moments()
}

/// Smallest x with posterior CDF >= alpha.
pub fn posterior_quantile(post: &MixedPosterior, alpha: f64) -> Result<f64> {
    post.quantile(alpha)
}

/// 1 - atom mass at zero.
pub fn nonzero_probability(post: &MixedPosterior) -> f64 {
    post.nonzero_probability()
}

fn check_channel(q: f64, mu: f64) -> Result<()> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::Domain(format!("channel variance must be positive, got {mu}")));
    }
    if !q.is_finite() {
        return Err(Error::Domain(format!("pseudo-observation must be finite, got {q}")));
    }
    Ok(())
}

/// Conjugate ingredients of the sparse-Gaussian posterior: the nonzero
/// probability `π = s N(q; 0, σ²+μ) / (s N(q; 0, σ²+μ) + (1-s) N(q; 0, μ))`,
/// the continuous-part mean and variance, and ln f_Q(q). Evaluated through
/// the log density ratio so deep-tail observations never produce NaN.
fn sparse_gaussian_parts(s: f64, sigma2: f64, q: f64, mu: f64) -> (f64, f64, f64, f64) {
    let log_nonzero = if s > 0.0 {
        s.ln() + math::normal_logpdf(q, 0.0, sigma2 + mu)
    } else {
        f64::NEG_INFINITY
    };
    let log_zero = if s < 1.0 {
        (1.0 - s).ln() + math::normal_logpdf(q, 0.0, mu)
    } else {
        f64::NEG_INFINITY
    };
    let log_evidence = math::log_add_exp(log_nonzero, log_zero);
    let pi = if s <= 0.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        1.0 / (1.0 + (log_zero - log_nonzero).exp())
    };
    let mean = q * sigma2 / (sigma2 + mu);
    let var = sigma2 * mu / (sigma2 + mu);
    (pi, mean, var, log_evidence)
}

/// Closed-form posterior mean and variance for the sparse Gaussian prior
/// (allocation-free; this is the hot path of the message-passing engine).
pub fn sparse_gaussian_denoise(s: f64, sigma2: f64, q: f64, mu: f64) -> (f64, f64) {
    let (pi, mc, vc, _) = sparse_gaussian_parts(s, sigma2, q, mu);
    let mean = pi * mc;
    let var = pi * vc + pi * (1.0 - pi) * mc * mc;
    (mean, var.max(0.0))
}

fn sparse_gaussian_posterior(s: f64, sigma2: f64, q: f64, mu: f64) -> MixedPosterior {
    let (pi, mean, var, log_evidence) = sparse_gaussian_parts(s, sigma2, q, mu);
    if pi <= 0.0 {
        return MixedPosterior::pure_atom(Some(log_evidence));
    }
    let mut post = MixedPosterior::gaussian_mixture(1.0 - pi, mean, var)
        .expect("conjugate parameters are valid");
    post.log_evidence = Some(log_evidence);
    post
}

fn tabulated_posterior(
    atom: f64,
    points: &[f64],
    weights: &[f64],
    q: f64,
    mu: f64,
) -> MixedPosterior {
    let mut logs: Vec<f64> = points
        .iter()
        .zip(weights)
        .map(|(&x, &w)| {
            if w > 0.0 {
                w.ln() + math::normal_logpdf(q, x, mu)
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let log_atom = if atom > 0.0 {
        atom.ln() + math::normal_logpdf(q, 0.0, mu)
    } else {
        f64::NEG_INFINITY
    };
    logs.push(log_atom);
    let log_norm = math::log_sum_exp(&logs);
    let atom_mass = (log_atom - log_norm).exp();
    if atom_mass >= 1.0 {
        return MixedPosterior::pure_atom(Some(log_norm));
    }
    MixedPosterior {
        atom_mass,
        grid: points.to_vec(),
        weights: logs[..points.len()]
            .iter()
            .map(|&l| (l - log_norm).exp())
            .collect(),
        form: ContinuousForm::Discrete,
        log_evidence: Some(log_norm),
    }
}

fn weibull_logpdf(x: f64, scale: f64, shape: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let z = x / scale;
    shape.ln() - scale.ln() + (shape - 1.0) * z.ln() - z.powf(shape)
}

fn prior_continuous_variance(prior: &SignalPrior) -> f64 {
    match prior {
        SignalPrior::SparseGaussian {
            nonzero_variance, ..
        } => *nonzero_variance,
        SignalPrior::SparseWeibull { scale, shape, .. } => {
            let m1 = scale * math::gamma(1.0 + 1.0 / shape);
            let m2 = scale * scale * math::gamma(1.0 + 2.0 / shape);
            // Spread about zero of the nonzero part, not about its own mean;
            // the grid must reach from the origin out past the slab.
            m2.max(m2 - m1 * m1)
        }
        SignalPrior::Tabulated { points, .. } => points
            .iter()
            .map(|&p| p * p)
            .fold(0.0, f64::max),
    }
}

/// Ascending evaluation grid on [lo, hi]. When the prior density is singular
/// at the origin (Weibull shape < 1) and the range touches it, a log-spaced
/// prefix resolves the integrable spike; the exact point 0 stays excluded
/// (it belongs to the atom).
fn build_grid(support: (f64, f64), lo: f64, hi: f64, points: usize, prior: &SignalPrior) -> Vec<f64> {
    let singular_at_zero = matches!(
        prior,
        SignalPrior::SparseWeibull { shape, .. } if *shape < 1.0
    );
    let mut lo = lo.max(support.0);
    let hi = hi.min(support.1);
    let mut grid = Vec::with_capacity(points + SINGULAR_PREFIX_POINTS);
    if singular_at_zero && lo <= 0.0 {
        let scale = match prior {
            SignalPrior::SparseWeibull { scale, .. } => *scale,
            _ => 1.0,
        };
        let tiny = 1e-12 * scale;
        let first_linear = (hi - tiny) / points as f64 + tiny;
        let ratio = (first_linear / tiny).max(1.0 + 1e-9);
        let step = ratio.ln() / SINGULAR_PREFIX_POINTS as f64;
        for i in 0..SINGULAR_PREFIX_POINTS {
            grid.push(tiny * (step * i as f64).exp());
        }
        lo = first_linear;
    } else if lo <= 0.0 && support.0 == 0.0 {
        lo = 1e-12 * (hi.abs().max(1.0));
    }
    if hi > lo {
        let n = points.max(2);
        let step = (hi - lo) / (n - 1) as f64;
        for i in 0..n {
            grid.push(lo + step * i as f64);
        }
    } else {
        grid.push(lo);
    }
    grid.dedup_by(|a, b| a == b);
    grid
}

fn cell_width(grid: &[f64], idx: usize) -> f64 {
    let n = grid.len();
    if n == 1 {
        return 1.0;
    }
    if idx == 0 {
        (grid[1] - grid[0]) / 2.0
    } else if idx == n - 1 {
        (grid[n - 1] - grid[n - 2]) / 2.0
    } else {
        (grid[idx + 1] - grid[idx - 1]) / 2.0
    }
}

/// Weighted center and spread of the continuous posterior mass on a grid,
/// computed in log-space.
fn grid_mass_moments<F: Fn(f64) -> f64>(grid: &[f64], logpdf: &F, q: f64, mu: f64) -> (f64, f64) {
    let logs: Vec<f64> = grid
        .iter()
        .enumerate()
        .map(|(i, &x)| logpdf(x) + math::normal_logpdf(q, x, mu) + cell_width(grid, i).ln())
        .collect();
    let norm = math::log_sum_exp(&logs);
    if norm == f64::NEG_INFINITY {
        let mid = 0.5 * (grid[0] + grid[grid.len() - 1]);
        return (mid, (grid[grid.len() - 1] - grid[0]) / 4.0);
    }
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for (&x, &l) in grid.iter().zip(&logs) {
        let w = (l - norm).exp();
        m1 += w * x;
        m2 += w * x * x;
    }
    (m1, (m2 - m1 * m1).max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sg(s: f64, sigma2: f64) -> SignalPrior {
        SignalPrior::sparse_gaussian(s, sigma2).unwrap()
    }

    /// Brute-force oracle: tabulate the unnormalized posterior of a sparse
    /// Gaussian prior on a dense uniform grid and integrate by trapezoid.
    /// Independent of the conjugate fast path and of `posterior_grid`.
    struct SgOracle {
        atom: f64,
        xs: Vec<f64>,
        ws: Vec<f64>,
    }

    impl SgOracle {
        fn build(s: f64, sigma2: f64, q: f64, mu: f64, n: usize) -> Self {
            let spread = (sigma2 + mu).sqrt();
            let lo = q.min(0.0) - 10.0 * spread;
            let hi = q.max(0.0) + 10.0 * spread;
            let step = (hi - lo) / (n - 1) as f64;
            let xs: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
            let logs: Vec<f64> = xs
                .iter()
                .map(|&x| {
                    s.ln() + math::normal_logpdf(x, 0.0, sigma2) + math::normal_logpdf(q, x, mu)
                })
                .collect();
            let log_atom = (1.0 - s).ln() + math::normal_logpdf(q, 0.0, mu);
            let max = logs
                .iter()
                .cloned()
                .fold(log_atom, f64::max);
            let mut ws: Vec<f64> = logs.iter().map(|&l| (l - max).exp() * step).collect();
            // Trapezoid end corrections.
            ws[0] /= 2.0;
            ws[n - 1] /= 2.0;
            let atom_w = (log_atom - max).exp();
            let total: f64 = ws.iter().sum::<f64>() + atom_w;
            for w in ws.iter_mut() {
                *w /= total;
            }
            SgOracle {
                atom: atom_w / total,
                xs,
                ws,
            }
        }

        fn moments(&self) -> (f64, f64) {
            let m1: f64 = self.xs.iter().zip(&self.ws).map(|(&x, &w)| x * w).sum();
            let m2: f64 = self.xs.iter().zip(&self.ws).map(|(&x, &w)| x * x * w).sum();
            (m1, m2 - m1 * m1)
        }

        fn quantile(&self, alpha: f64) -> f64 {
            let mut cum = 0.0;
            let mut atom_pending = true;
            for (&x, &w) in self.xs.iter().zip(&self.ws) {
                if atom_pending && x >= 0.0 {
                    cum += self.atom;
                    atom_pending = false;
                    if cum >= alpha {
                        return 0.0;
                    }
                }
                cum += w;
                if cum >= alpha {
                    return x;
                }
            }
            *self.xs.last().unwrap()
        }
    }

    #[test]
    fn gaussian_conjugacy_when_dense() {
        let post = posterior(&sg(1.0, 1.0), 2.0, 1.0).unwrap();
        let (m, v) = post.moments();
        assert!((m - 1.0).abs() < 1e-12);
        assert!((v - 0.5).abs() < 1e-12);
        assert_eq!(post.atom_mass_at_zero(), 0.0);
    }

    #[test]
    fn all_zero_prior_gives_pure_atom() {
        let post = posterior(&sg(0.0, 1.0), 3.7, 0.5).unwrap();
        assert_eq!(post.atom_mass_at_zero(), 1.0);
        assert_eq!(post.moments(), (0.0, 0.0));
        assert_eq!(post.nonzero_probability(), 0.0);
        assert_eq!(post.quantile(0.3).unwrap(), 0.0);
    }

    #[test]
    fn nonzero_probability_at_origin_matches_density_ratio() {
        // π = s N(0; 0, σ²+μ) / (s N(0; 0, σ²+μ) + (1-s) N(0; 0, μ)) at
        // s = 0.5, σ² = μ = 1 collapses to 1/(1+√2).
        let post = posterior(&sg(0.5, 1.0), 0.0, 1.0).unwrap();
        let expect = 1.0 / (1.0 + std::f64::consts::SQRT_2);
        assert!((post.nonzero_probability() - expect).abs() < 1e-12);
        // Cross-check with the quadrature oracle.
        let oracle = SgOracle::build(0.5, 1.0, 0.0, 1.0, 100_001);
        assert!((post.nonzero_probability() - (1.0 - oracle.atom)).abs() < 1e-6);
    }

    #[test]
    fn moments_of_explicit_mixture() {
        let post = MixedPosterior::gaussian_mixture(0.5, 2.0, 1.0).unwrap();
        let (m, v) = post.moments();
        assert!((m - 1.0).abs() < 1e-10);
        assert!((v - 1.5).abs() < 1e-9);
        // Brute-force check over the materialized node representation.
        let m_nodes: f64 = post
            .grid()
            .iter()
            .zip(post.density_weights())
            .map(|(&x, &w)| x * w)
            .sum();
        assert!((m_nodes - 1.0).abs() < 1e-10);
    }

    #[test]
    fn pure_gaussian_part_moments() {
        let post = MixedPosterior::gaussian_mixture(0.0, 1.0, 0.5).unwrap();
        let (m, v) = post.moments();
        assert!((m - 1.0).abs() < 1e-6);
        assert!((v - 0.5).abs() < 1e-6);
    }

    #[test]
    fn quantile_symmetric_and_jump_cases() {
        let post = MixedPosterior::gaussian_mixture(0.0, 0.7, 2.0).unwrap();
        assert!((post.quantile(0.5).unwrap() - 0.7).abs() < 1e-10);

        // Atom of 0.7 with the continuous part entirely on (0, inf):
        // the jump straddles the median.
        let post = MixedPosterior::discrete_mixture(0.7, vec![1.0, 2.0], vec![0.2, 0.1]).unwrap();
        assert_eq!(post.quantile(0.5).unwrap(), 0.0);
    }

    #[test]
    fn quantile_matches_cdf_tabulation_oracle() {
        // Sparse prior, peaked likelihood away from the origin.
        let (s, sigma2, q, mu) = (0.03, 1.0, 0.9, 3e-4);
        let post = posterior(&sg(s, sigma2), q, mu).unwrap();
        let oracle = SgOracle::build(s, sigma2, q, mu, 100_001);
        for &alpha in &[0.2, 0.5, 0.8] {
            let got = post.quantile(alpha).unwrap();
            let want = oracle.quantile(alpha);
            assert!(
                (got - want).abs() < 2e-4,
                "alpha={alpha} got={got} want={want}"
            );
        }
        let (m, v) = post.moments();
        let (om, ov) = oracle.moments();
        assert!((m - om).abs() < 1e-6, "mean {m} vs oracle {om}");
        assert!((v - ov).abs() < 1e-8, "var {v} vs oracle {ov}");
    }

    #[test]
    fn fast_path_and_grid_path_agree_for_sparse_gaussian() {
        for &(s, sigma2, q, mu) in &[
            (0.03, 1.0, 0.9, 3e-4),
            (0.5, 2.0, -1.3, 0.2),
            (0.9, 0.5, 0.1, 1.0),
            (0.1, 1.0, 4.0, 0.05),
        ] {
            let fast = posterior(&sg(s, sigma2), q, mu).unwrap();
            let grid = posterior_grid(&sg(s, sigma2), q, mu, DEFAULT_GRID_POINTS).unwrap();
            let (fm, fv) = fast.moments();
            let (gm, gv) = grid.moments();
            let pi_f = fast.nonzero_probability();
            let pi_g = grid.nonzero_probability();
            assert!(
                (pi_f - pi_g).abs() <= 1e-5 * pi_f.max(1e-3),
                "pi mismatch at s={s} q={q}: {pi_f} vs {pi_g}"
            );
            let scale = fv.sqrt().max(1e-6);
            assert!((fm - gm).abs() <= 1e-5 * fm.abs().max(scale), "mean {fm} vs {gm}");
            assert!((fv - gv).abs() <= 1e-4 * fv.max(1e-12), "var {fv} vs {gv}");
        }
    }

    #[test]
    fn weibull_posterior_is_normalized_and_positive() {
        let prior = SignalPrior::sparse_weibull(0.03, 1.0, 0.5).unwrap();
        for &(q, mu) in &[(0.9, 3e-4), (0.0, 0.01), (-0.5, 0.1), (3.0, 1.0)] {
            let post = posterior(&prior, q, mu).unwrap();
            assert!((post.total_mass() - 1.0).abs() < 1e-8, "q={q} mu={mu}");
            assert!(post.grid().iter().all(|&x| x > 0.0));
            assert!(post.grid().windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn weibull_posterior_tracks_likelihood_peak() {
        let prior = SignalPrior::sparse_weibull(0.03, 1.0, 0.5).unwrap();
        let post = posterior(&prior, 2.0, 1e-3).unwrap();
        // Likelihood at q = 2 overwhelms the atom.
        assert!(post.nonzero_probability() > 0.99);
        let (m, _) = post.moments();
        assert!((m - 2.0).abs() < 0.1, "mean {m}");
    }

    #[test]
    fn tabulated_posterior_reweights_points() {
        let prior = SignalPrior::tabulated(0.5, vec![-1.0, 1.0], vec![0.25, 0.25]).unwrap();
        let post = posterior(&prior, 1.0, 0.1).unwrap();
        assert!((post.total_mass() - 1.0).abs() < 1e-12);
        // Mass should concentrate on the +1 point.
        let w_plus = post.density_weights()[1];
        assert!(w_plus > 0.9, "w_plus={w_plus}");
        assert_eq!(post.quantile(0.5).unwrap(), 1.0);
    }

    #[test]
    fn extreme_observations_never_produce_nan() {
        let post = posterior(&sg(0.5, 1.0), 400.0, 1e-6).unwrap();
        assert!(post.nonzero_probability() > 1.0 - 1e-12);
        let (m, v) = post.moments();
        assert!(m.is_finite() && v.is_finite());
        let post = posterior(&sg(1e-12, 1.0), 0.0, 1e-8).unwrap();
        assert!(post.atom_mass_at_zero() > 1.0 - 1e-6);
    }

    #[test]
    fn invalid_channel_rejected() {
        assert!(posterior(&sg(0.5, 1.0), 0.0, 0.0).is_err());
        assert!(posterior(&sg(0.5, 1.0), 0.0, -1.0).is_err());
        assert!(posterior(&sg(0.5, 1.0), f64::NAN, 1.0).is_err());
        let post = posterior(&sg(0.5, 1.0), 0.0, 1.0).unwrap();
        assert!(post.quantile(0.0).is_err());
        assert!(post.quantile(1.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn total_mass_is_one(
            s in 0.01f64..0.99,
            sigma2 in 0.1f64..4.0,
            q in -6.0f64..6.0,
            mu in 1e-4f64..2.0,
        ) {
            let fast = posterior(&sg(s, sigma2), q, mu).unwrap();
            prop_assert!((fast.total_mass() - 1.0).abs() < 1e-8);
            let grid = posterior_grid(&sg(s, sigma2), q, mu, DEFAULT_GRID_POINTS).unwrap();
            prop_assert!((grid.total_mass() - 1.0).abs() < 1e-8);
        }

        #[test]
        fn quantile_nondecreasing_in_alpha(
            s in 0.05f64..0.95,
            q in -4.0f64..4.0,
            mu in 1e-3f64..1.0,
        ) {
            let post = posterior(&sg(s, 1.0), q, mu).unwrap();
            let mut prev = f64::NEG_INFINITY;
            for i in 1..40 {
                let alpha = i as f64 / 40.0;
                let x = post.quantile(alpha).unwrap();
                prop_assert!(x >= prev - 1e-12, "alpha={alpha} x={x} prev={prev}");
                prev = x;
            }
        }

        #[test]
        fn posterior_is_odd_in_q_for_symmetric_prior(
            s in 0.05f64..0.95,
            sigma2 in 0.2f64..3.0,
            q in 0.0f64..5.0,
            mu in 1e-3f64..1.0,
        ) {
            let plus = posterior(&sg(s, sigma2), q, mu).unwrap();
            let minus = posterior(&sg(s, sigma2), -q, mu).unwrap();
            let (mp, vp) = plus.moments();
            let (mm, vm) = minus.moments();
            prop_assert!((mp + mm).abs() < 1e-12 * mp.abs().max(1.0));
            prop_assert!((vp - vm).abs() < 1e-12 * vp.max(1e-12));
            prop_assert!((plus.nonzero_probability() - minus.nonzero_probability()).abs() < 1e-12);
        }

        #[test]
        fn dense_prior_mean_is_exact_shrinkage(
            q in -5.0f64..5.0,
            sigma2 in 0.1f64..4.0,
            mu in 1e-4f64..2.0,
        ) {
            let post = posterior(&sg(1.0, sigma2), q, mu).unwrap();
            let (m, _) = post.moments();
            let want = q * sigma2 / (sigma2 + mu);
            prop_assert!((m - want).abs() <= 1e-12 * want.abs().max(1e-9));
        }
    }
}
