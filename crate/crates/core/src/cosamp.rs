//! CoSaMP greedy pursuit baseline: iterative support identification with
//! least-squares refitting and pruning to the target sparsity.

use crate::error::{Error, Result};
use crate::model::MixingMatrix;

/// Options for [`cosamp`]. Defaults: 50 iterations, halting when the
/// relative residual drops below 1e-6.
#[derive(Debug, Clone, Copy)]
pub struct CosampOptions {
    pub sparsity: usize,
    pub max_iterations: usize,
    pub halting_tolerance: f64,
}

impl CosampOptions {
    pub fn new(sparsity: usize) -> Self {
        CosampOptions {
            sparsity,
            max_iterations: 50,
            halting_tolerance: 1e-6,
        }
    }
}

/// Result of a pursuit run.
#[derive(Debug, Clone)]
pub struct CosampOutput {
    pub estimate: Vec<f64>,
    pub iterations: usize,
    /// Final relative residual ||y - Φx̂|| / ||y||.
    pub relative_residual: f64,
    /// Set when the least-squares step needed ridge regularization.
    pub regularized: bool,
    /// Set when the requested sparsity exceeds the recommended M/2 budget
    /// (the merged candidate set can then outgrow the measurement count).
    pub sparsity_above_recommended: bool,
}

/// K-sparse estimate via CoSaMP: correlate the residual, keep the 2K
/// strongest coordinates, merge with the current support, least-squares on
/// the merged set, prune back to K. Iterations that fail to reduce the
/// residual are rejected and the search stops at the best estimate seen.
pub fn cosamp(phi: &MixingMatrix, y: &[f64], opts: &CosampOptions) -> Result<CosampOutput> {
    let m = phi.rows();
    let n = phi.cols();
    if y.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {m}x{n} but y has length {}",
            y.len()
        )));
    }
    let k = opts.sparsity;
    if k > n {
        return Err(Error::Domain(format!("sparsity {k} exceeds signal length {n}")));
    }
    let sparsity_above_recommended = 2 * k > m;
    let y_norm = norm(y);
    if k == 0 || y_norm == 0.0 {
        return Ok(CosampOutput {
            estimate: vec![0.0; n],
            iterations: 0,
            relative_residual: if y_norm == 0.0 { 0.0 } else { 1.0 },
            regularized: false,
            sparsity_above_recommended,
        });
    }

    let mut estimate = vec![0.0; n];
    let mut support: Vec<usize> = Vec::new();
    let mut residual = y.to_vec();
    let mut best_residual = y_norm;
    let mut regularized = false;
    let mut iterations = 0;

    for iter in 1..=opts.max_iterations {
        iterations = iter;
        // Proxy = Φᵀ residual; candidate set = 2K strongest plus current support.
        let proxy = phi.transpose_mul_vec(&residual);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| proxy[b].abs().partial_cmp(&proxy[a].abs()).unwrap());
        let mut candidates: Vec<usize> = order.into_iter().take(2 * k).collect();
        candidates.extend_from_slice(&support);
        candidates.sort_unstable();
        candidates.dedup();

        let (coeffs, used_ridge) = least_squares_on_support(phi, y, &candidates)?;
        regularized |= used_ridge;

        // Prune to the K largest coefficients.
        let mut ranked: Vec<(usize, f64)> = candidates
            .iter()
            .zip(&coeffs)
            .map(|(&j, &c)| (j, c))
            .collect();
        ranked.sort_by(|a, b| b.1.abs().partial_cmp(&a.1.abs()).unwrap());
        ranked.truncate(k);

        let mut trial = vec![0.0; n];
        for &(j, c) in &ranked {
            trial[j] = c;
        }
        let mut r = y.to_vec();
        for i in 0..m {
            let row = phi.row(i);
            let mut dot = 0.0;
            for &(j, c) in &ranked {
                dot += row[j] * c;
            }
            r[i] -= dot;
        }
        let r_norm = norm(&r);

        if r_norm >= best_residual {
            // Accepted iterations keep the residual nonincreasing; a stalled
            // step means the support has stopped improving.
            iterations = iter - 1;
            break;
        }
        estimate = trial;
        support = ranked.iter().map(|&(j, _)| j).collect();
        support.sort_unstable();
        residual = r;
        best_residual = r_norm;

        if r_norm <= opts.halting_tolerance * y_norm {
            break;
        }
    }

    Ok(CosampOutput {
        estimate,
        iterations,
        relative_residual: best_residual / y_norm,
        regularized,
        sparsity_above_recommended,
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solve min ||y - Φ_S c|| over the support columns by normal equations with
/// Cholesky; falls back to a ridge-regularized solve when the Gram matrix is
/// not positive definite.
fn least_squares_on_support(
    phi: &MixingMatrix,
    y: &[f64],
    support: &[usize],
) -> Result<(Vec<f64>, bool)> {
    let m = phi.rows();
    let k = support.len();
    let mut gram = vec![0.0; k * k];
    let mut rhs = vec![0.0; k];
    for i in 0..m {
        let row = phi.row(i);
        for (a, &ja) in support.iter().enumerate() {
            let va = row[ja];
            if va == 0.0 {
                continue;
            }
            rhs[a] += va * y[i];
            for (b, &jb) in support.iter().enumerate().skip(a) {
                gram[a * k + b] += va * row[jb];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            gram[a * k + b] = gram[b * k + a];
        }
    }
    if let Some(c) = cholesky_solve(&gram, &rhs, k) {
        return Ok((c, false));
    }
    // Rank-deficient candidate support: ridge keeps the solve defined.
    let mut ridged = gram;
    for a in 0..k {
        ridged[a * k + a] += 1e-10;
    }
    match cholesky_solve(&ridged, &rhs, k) {
        Some(c) => Ok((c, true)),
        None => Err(Error::Domain("least-squares solve failed even with ridge".into())),
    }
}

/// Dense Cholesky solve of a symmetric positive definite system; returns
/// None when a pivot falls below a relative floor (rank deficiency).
fn cholesky_solve(a: &[f64], b: &[f64], k: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..=i {
            let mut sum = a[i * k + j];
            for p in 0..j {
                sum -= l[i * k + p] * l[j * k + p];
            }
            if i == j {
                if sum <= 1e-12 * a[i * k + i].abs().max(f64::MIN_POSITIVE) {
                    return None;
                }
                l[i * k + i] = sum.sqrt();
            } else {
                l[i * k + j] = sum / l[j * k + j];
            }
        }
    }
    // Forward then back substitution.
    let mut z = vec![0.0; k];
    for i in 0..k {
        let mut sum = b[i];
        for p in 0..i {
            sum -= l[i * k + p] * z[p];
        }
        z[i] = sum / l[i * k + i];
    }
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let mut sum = z[i];
        for p in (i + 1)..k {
            sum -= l[p * k + i] * x[p];
        }
        x[i] = sum / l[i * k + i];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bernoulli_matrix(m: usize, n: usize, seed: u64) -> MixingMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            loop {
                let row = &mut data[i * n..(i + 1) * n];
                let mut ones = 0;
                for v in row.iter_mut() {
                    *v = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
                    ones += (*v != 0.0) as usize;
                }
                if ones > 0 {
                    let norm = (ones as f64).sqrt();
                    row.iter_mut().for_each(|v| *v /= norm);
                    break;
                }
            }
        }
        MixingMatrix::from_rows(m, n, data).unwrap()
    }

    fn k_sparse_signal(n: usize, k: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = vec![0.0; n];
        let mut placed = 0;
        while placed < k {
            let j = rng.gen_range(0..n);
            if x[j] == 0.0 {
                let u1: f64 = rng.gen_range(1e-12..1.0);
                let u2: f64 = rng.gen();
                x[j] = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                placed += 1;
            }
        }
        x
    }

    #[test]
    fn zero_sparsity_returns_zero_vector() {
        let phi = MixingMatrix::identity(4);
        let out = cosamp(&phi, &[1.0, 2.0, 3.0, 4.0], &CosampOptions::new(0)).unwrap();
        assert_eq!(out.estimate, vec![0.0; 4]);
    }

    #[test]
    fn identity_system_recovers_exactly() {
        let n = 20;
        let phi = MixingMatrix::identity(n);
        let x = k_sparse_signal(n, 3, 1);
        let out = cosamp(&phi, &x, &CosampOptions::new(3)).unwrap();
        for (a, b) in out.estimate.iter().zip(&x) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn noiseless_random_instances_recover_at_high_rate() {
        let (m, n, k) = (40, 80, 3);
        let mut successes = 0;
        for trial in 0..100u64 {
            let phi = bernoulli_matrix(m, n, 1000 + trial);
            let x = k_sparse_signal(n, k, 2000 + trial);
            let y = phi.mul_vec(&x);
            let out = cosamp(&phi, &y, &CosampOptions::new(k)).unwrap();
            let err: f64 = out
                .estimate
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if err < 1e-6 {
                successes += 1;
            }
        }
        assert!(successes >= 95, "only {successes}/100 exact recoveries");
    }

    #[test]
    fn output_is_always_k_sparse() {
        let (m, n, k) = (30, 60, 5);
        for trial in 0..20u64 {
            let phi = bernoulli_matrix(m, n, 300 + trial);
            let x = k_sparse_signal(n, 8, 400 + trial); // more active than K
            let y = phi.mul_vec(&x);
            let out = cosamp(&phi, &y, &CosampOptions::new(k)).unwrap();
            let nnz = out.estimate.iter().filter(|&&v| v != 0.0).count();
            assert!(nnz <= k, "trial {trial}: {nnz} > {k}");
        }
    }

    #[test]
    fn residual_is_nonincreasing_over_accepted_iterations() {
        // Track the residual by re-running with increasing iteration caps.
        let (m, n, k) = (40, 100, 6);
        let phi = bernoulli_matrix(m, n, 77);
        let x = k_sparse_signal(n, k, 78);
        let mut y = phi.mul_vec(&x);
        let mut rng = ChaCha8Rng::seed_from_u64(79);
        for v in y.iter_mut() {
            *v += 0.01 * rng.gen::<f64>();
        }
        let mut prev = f64::INFINITY;
        for cap in 1..=12 {
            let mut opts = CosampOptions::new(k);
            opts.max_iterations = cap;
            let out = cosamp(&phi, &y, &opts).unwrap();
            assert!(
                out.relative_residual <= prev + 1e-12,
                "cap {cap}: {} > {prev}",
                out.relative_residual
            );
            prev = out.relative_residual;
        }
    }

    #[test]
    fn oversized_sparsity_rejected_or_flagged() {
        let phi = MixingMatrix::identity(4);
        assert!(cosamp(&phi, &[1.0; 4], &CosampOptions::new(5)).is_err());
        let out = cosamp(&phi, &[1.0; 4], &CosampOptions::new(3)).unwrap();
        assert!(out.sparsity_above_recommended);
        let out = cosamp(&phi, &[1.0; 4], &CosampOptions::new(2)).unwrap();
        assert!(!out.sparsity_above_recommended);
    }

    #[test]
    fn duplicate_columns_trigger_the_ridge_fallback() {
        // Two identical columns make the candidate Gram matrix singular.
        let m = 10;
        let base = bernoulli_matrix(m, 1, 5);
        let mut data = Vec::new();
        for i in 0..m {
            let v = base.row(i)[0];
            data.extend_from_slice(&[v, v, if i % 2 == 0 { 0.5 } else { 0.0 }]);
        }
        let phi = MixingMatrix::from_rows(m, 3, data).unwrap();
        let x = vec![1.0, 0.0, -2.0];
        let y = phi.mul_vec(&x);
        let out = cosamp(&phi, &y, &CosampOptions::new(2)).unwrap();
        assert!(out.regularized, "expected the ridge path to engage");
        // The twin columns are indistinguishable, so the pursuit cannot zero
        // the residual; it must still improve on x̂ = 0 and stay finite.
        assert!(out.relative_residual < 1.0, "residual {}", out.relative_residual);
        assert!(out.estimate.iter().all(|v| v.is_finite()));
        assert!(out.estimate.iter().filter(|&&v| v != 0.0).count() <= 2);
    }
}
