//! Seeded data generation: measurement matrices, signal draws, and channel
//! noise. Every function is a pure map from its seed, so trials are
//! reproducible regardless of execution order.

use linmix_core::error::{Error, Result};
use linmix_core::model::{MixingMatrix, OutputChannel, SignalPrior};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

/// Derive a stream seed from a master seed and salt indices (SplitMix64
/// chain). Trial seeds never depend on execution order or worker count.
pub fn derive_seed(master: u64, salts: &[u64]) -> u64 {
    let mut state = linmix_core::math::splitmix64(master);
    for &salt in salts {
        state = linmix_core::math::splitmix64(state ^ salt.wrapping_add(0x9E3779B97F4A7C15));
    }
    state
}

/// Bernoulli(0.5) {0,1} matrix with each row scaled to unit Euclidean norm.
/// An all-zero row (probability 2^-N) is redrawn.
pub fn gen_matrix(m: usize, n: usize, seed: u64) -> MixingMatrix {
    assert!(m >= 1 && n >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = vec![0.0; m * n];
    for i in 0..m {
        loop {
            let row = &mut data[i * n..(i + 1) * n];
            let mut ones = 0usize;
            for v in row.iter_mut() {
                *v = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
                ones += (*v != 0.0) as usize;
            }
            if ones > 0 {
                let scale = 1.0 / (ones as f64).sqrt();
                row.iter_mut().for_each(|v| *v *= scale);
                break;
            }
        }
    }
    MixingMatrix::from_rows(m, n, data).expect("construction is dimension-consistent")
}

/// i.i.d. draw from the prior: zero with probability 1-s, otherwise from the
/// nonzero component (Gaussian, Weibull by inverse CDF, or tabulated).
pub fn sample_signal(prior: &SignalPrior, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| match prior {
            SignalPrior::SparseGaussian {
                sparsity,
                nonzero_variance,
            } => {
                if rng.gen_bool(*sparsity) {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    nonzero_variance.sqrt() * z
                } else {
                    0.0
                }
            }
            SignalPrior::SparseWeibull {
                sparsity,
                scale,
                shape,
            } => {
                if rng.gen_bool(*sparsity) {
                    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                    scale * (-u.ln()).powf(1.0 / shape)
                } else {
                    0.0
                }
            }
            SignalPrior::Tabulated {
                atom_at_zero,
                points,
                weights,
            } => {
                let mut u: f64 = rng.gen();
                if u < *atom_at_zero {
                    return 0.0;
                }
                u -= atom_at_zero;
                for (&x, &w) in points.iter().zip(weights) {
                    if u < w {
                        return x;
                    }
                    u -= w;
                }
                points.last().copied().unwrap_or(0.0)
            }
        })
        .collect()
}

/// Pass the noiseless measurements through the output channel.
pub fn sample_channel(channel: &OutputChannel, w: &[f64], seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match channel {
        OutputChannel::Awgn { noise_variance } => {
            let sd = noise_variance.sqrt();
            Ok(w
                .iter()
                .map(|&wi| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    wi + sd * z
                })
                .collect())
        }
        OutputChannel::Poisson { gain } => w
            .iter()
            .map(|&wi| {
                if wi < 0.0 {
                    return Err(Error::Domain(format!(
                        "Poisson channel requires nonnegative input, got {wi}"
                    )));
                }
                let rate = gain * wi;
                if rate == 0.0 {
                    return Ok(0.0);
                }
                let draw = Poisson::new(rate)
                    .map_err(|e| Error::Domain(format!("bad Poisson rate {rate}: {e}")))?
                    .sample(&mut rng);
                Ok(draw)
            })
            .collect(),
    }
}
