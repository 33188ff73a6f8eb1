//! Shared domain types: signal priors, output channels, error metrics, and
//! the dense mixing matrix, plus total-error evaluation.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::math;

/// Per-component i.i.d. prior on the signal entries.
///
/// Sparse variants place probability `1 - s` on an exact zero and draw the
/// remaining mass from a continuous distribution.
#[derive(Debug, Clone)]
pub enum SignalPrior {
    SparseGaussian {
        /// Probability that a component is nonzero.
        sparsity: f64,
        /// Variance of the nonzero (Gaussian) component.
        nonzero_variance: f64,
    },
    SparseWeibull {
        sparsity: f64,
        scale: f64,
        shape: f64,
    },
    /// Discrete prior: an atom at zero plus point masses.
    Tabulated {
        atom_at_zero: f64,
        points: Vec<f64>,
        weights: Vec<f64>,
    },
}

impl SignalPrior {
    pub fn sparse_gaussian(sparsity: f64, nonzero_variance: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&sparsity) {
            return Err(Error::Domain(format!("sparsity {sparsity} outside [0,1]")));
        }
        if !(nonzero_variance > 0.0) {
            return Err(Error::Domain(format!(
                "nonzero variance must be positive, got {nonzero_variance}"
            )));
        }
        Ok(SignalPrior::SparseGaussian {
            sparsity,
            nonzero_variance,
        })
    }

    pub fn sparse_weibull(sparsity: f64, scale: f64, shape: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&sparsity) {
            return Err(Error::Domain(format!("sparsity {sparsity} outside [0,1]")));
        }
        if !(scale > 0.0) || !(shape > 0.0) {
            return Err(Error::Domain(format!(
                "Weibull scale and shape must be positive, got scale={scale} shape={shape}"
            )));
        }
        Ok(SignalPrior::SparseWeibull {
            sparsity,
            scale,
            shape,
        })
    }

    pub fn tabulated(atom_at_zero: f64, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} support points vs {} weights",
                points.len(),
                weights.len()
            )));
        }
        if !(0.0..=1.0).contains(&atom_at_zero) {
            return Err(Error::Domain("atom mass outside [0,1]".into()));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::Domain("tabulated weights must be nonnegative".into()));
        }
        if points.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::Domain("support points must be strictly increasing".into()));
        }
        if points.iter().any(|&p| p == 0.0) {
            return Err(Error::Domain(
                "support point at exactly zero belongs to the atom".into(),
            ));
        }
        let total = atom_at_zero + weights.iter().sum::<f64>();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!(
                "atom + weights must sum to 1, got {total}"
            )));
        }
        Ok(SignalPrior::Tabulated {
            atom_at_zero,
            points,
            weights,
        })
    }

    /// Probability that a component is nonzero.
    pub fn nonzero_probability(&self) -> f64 {
        match self {
            SignalPrior::SparseGaussian { sparsity, .. } => *sparsity,
            SignalPrior::SparseWeibull { sparsity, .. } => *sparsity,
            SignalPrior::Tabulated { atom_at_zero, .. } => 1.0 - atom_at_zero,
        }
    }

    /// Mean of the full (mixed) prior.
    pub fn mean(&self) -> f64 {
        match self {
            SignalPrior::SparseGaussian { .. } => 0.0,
            SignalPrior::SparseWeibull {
                sparsity,
                scale,
                shape,
            } => sparsity * scale * math::gamma(1.0 + 1.0 / shape),
            SignalPrior::Tabulated {
                points, weights, ..
            } => points.iter().zip(weights).map(|(&x, &w)| w * x).sum(),
        }
    }

    /// Variance of the full (mixed) prior.
    pub fn variance(&self) -> f64 {
        match self {
            SignalPrior::SparseGaussian {
                sparsity,
                nonzero_variance,
            } => sparsity * nonzero_variance,
            SignalPrior::SparseWeibull {
                sparsity,
                scale,
                shape,
            } => {
                let m1 = scale * math::gamma(1.0 + 1.0 / shape);
                let m2 = scale * scale * math::gamma(1.0 + 2.0 / shape);
                sparsity * m2 - (sparsity * m1) * (sparsity * m1)
            }
            SignalPrior::Tabulated {
                points, weights, ..
            } => {
                let m1: f64 = points.iter().zip(weights).map(|(&x, &w)| w * x).sum();
                let m2: f64 = points.iter().zip(weights).map(|(&x, &w)| w * x * x).sum();
                m2 - m1 * m1
            }
        }
    }
}

/// Separable measurement channel `f(y_i | w_i)` applied to each entry of
/// `w = Φx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutputChannel {
    Awgn { noise_variance: f64 },
    Poisson { gain: f64 },
}

impl OutputChannel {
    pub fn awgn(noise_variance: f64) -> Result<Self> {
        if !(noise_variance > 0.0) {
            return Err(Error::Domain(format!(
                "noise variance must be positive, got {noise_variance}"
            )));
        }
        Ok(OutputChannel::Awgn { noise_variance })
    }

    pub fn poisson(gain: f64) -> Result<Self> {
        if !(gain > 0.0) {
            return Err(Error::Domain(format!("Poisson gain must be positive, got {gain}")));
        }
        Ok(OutputChannel::Poisson { gain })
    }
}

type MetricFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Additive per-component error metric `d(x̂_j, x_j)`.
#[derive(Clone)]
pub enum ErrorMetric {
    Squared,
    Absolute,
    /// `|x̂ - x|^p` for p > 0 (p may be below 1).
    PowP { p: f64 },
    /// XOR of the nonzeroness indicators (support recovery error).
    SupportXor,
    Custom { name: String, f: MetricFn },
}

impl fmt::Debug for ErrorMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ErrorMetric::Squared => write!(f, "Squared"),
            ErrorMetric::Absolute => write!(f, "Absolute"),
            ErrorMetric::PowP { p } => write!(f, "PowP({p})"),
            ErrorMetric::SupportXor => write!(f, "SupportXor"),
            ErrorMetric::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

impl ErrorMetric {
    pub fn pow(p: f64) -> Result<Self> {
        if !(p > 0.0) {
            return Err(Error::Domain(format!("metric exponent must be positive, got {p}")));
        }
        Ok(ErrorMetric::PowP { p })
    }

    /// Wrap a caller-supplied pointwise distance. Sampled at construction to
    /// check `d(x, x) = 0` and nonnegativity.
    pub fn custom<F>(name: &str, f: F) -> Result<Self>
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        let probes = [-7.3, -1.0, -0.01, 0.0, 0.4, 1.0, 12.5];
        for &a in &probes {
            let identity = f(a, a);
            if !(identity.abs() <= 1e-12) {
                return Err(Error::Metric(format!("d(x,x) = {identity} != 0 at x={a}")));
            }
            for &b in &probes {
                let v = f(a, b);
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Metric(format!("d({a},{b}) = {v} is not a nonnegative real")));
                }
            }
        }
        Ok(ErrorMetric::Custom {
            name: name.to_string(),
            f: Arc::new(f),
        })
    }

    /// Pointwise distance. `SupportXor` tests nonzeroness exactly, so
    /// estimators must emit exact zeros when declaring an empty component.
    #[inline]
    pub fn distance(&self, estimate: f64, truth: f64) -> f64 {
        match self {
            ErrorMetric::Squared => {
                let d = estimate - truth;
                d * d
            }
            ErrorMetric::Absolute => (estimate - truth).abs(),
            ErrorMetric::PowP { p } => math::pow_abs(estimate - truth, *p),
            ErrorMetric::SupportXor => {
                if (estimate != 0.0) != (truth != 0.0) {
                    1.0
                } else {
                    0.0
                }
            }
            ErrorMetric::Custom { f, .. } => f(estimate, truth),
        }
    }

    /// Checked variant used inside minimizers: rejects NaN or negative values
    /// coming out of a user-supplied metric.
    #[inline]
    pub fn checked_distance(&self, estimate: f64, truth: f64) -> Result<f64> {
        let v = self.distance(estimate, truth);
        if !v.is_finite() || v < 0.0 {
            return Err(Error::Metric(format!(
                "metric returned {v} at ({estimate}, {truth})"
            )));
        }
        Ok(v)
    }
}

/// Dense M x N row-major real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl MixingMatrix {
    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "matrix data length {} != {rows}x{cols}",
                data.len()
            )));
        }
        Ok(MixingMatrix { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        MixingMatrix {
            rows: n,
            cols: n,
            data,
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// y = Φ x
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(x)
                    .map(|(&a, &b)| a * b)
                    .sum::<f64>()
            })
            .collect()
    }

    /// y = Φᵀ x
    pub fn transpose_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * xi;
            }
        }
        out
    }
}

fn check_lengths(estimate: &[f64], truth: &[f64]) -> Result<()> {
    if estimate.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "estimate length {} != truth length {}",
            estimate.len(),
            truth.len()
        )));
    }
    Ok(())
}

/// Total additive error `Σ_j d(x̂_j, x_j)`.
pub fn eval_metric(metric: &ErrorMetric, estimate: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(estimate, truth)?;
    let mut total = 0.0;
    for (&e, &t) in estimate.iter().zip(truth) {
        total += metric.checked_distance(e, t)?;
    }
    Ok(total)
}

/// ℓ∞ error `max_j |x̂_j - x_j|`.
pub fn eval_linf(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(estimate, truth)?;
    Ok(estimate
        .iter()
        .zip(truth)
        .map(|(&e, &t)| (e - t).abs())
        .fold(0.0, f64::max))
}
