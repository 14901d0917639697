//! Zero-mean Gaussian process with a Matérn-3/2 kernel over encoded
//! configuration vectors, plus expected improvement.

use crate::{MfError, Result};

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Matérn-3/2 kernel value at distance `d`:
/// `sigma2 * (1 + sqrt(3) d / ell) * exp(-sqrt(3) d / ell)`.
pub fn matern32(d: f64, sigma2: f64, ell: f64) -> f64 {
    let r = SQRT3 * d / ell;
    sigma2 * (1.0 + r) * (-r).exp()
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// In-place Cholesky of a row-major symmetric matrix; returns false if a
/// pivot is non-positive. On success the lower triangle holds L.
fn cholesky(a: &mut [f64], n: usize) -> bool {
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            if i == j {
                if s <= 0.0 {
                    return false;
                }
                a[i * n + i] = s.sqrt();
            } else {
                a[i * n + j] = s / a[j * n + j];
            }
        }
    }
    true
}

fn solve_lower(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

fn solve_upper_from_lower(l: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// A fitted GP posterior on standardized targets.
#[derive(Clone, Debug)]
pub struct GpModel {
    inputs: Vec<Vec<f64>>,
    chol: Vec<f64>,
    alpha: Vec<f64>,
    sigma2: f64,
    ell: f64,
    jitter: f64,
    log_marginal: f64,
}

impl GpModel {
    /// Fits at fixed hyperparameters. The diagonal jitter starts at 1e-6 and
    /// escalates tenfold up to 1e-2 when the Cholesky factorization fails.
    pub fn fit(inputs: &[Vec<f64>], targets: &[f64], sigma2: f64, ell: f64) -> Result<Self> {
        assert_eq!(inputs.len(), targets.len());
        let n = inputs.len();
        let mut jitter = 1e-6;
        loop {
            let mut k = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..=i {
                    let v = matern32(euclidean(&inputs[i], &inputs[j]), sigma2, ell);
                    k[i * n + j] = v;
                    k[j * n + i] = v;
                }
                k[i * n + i] += jitter;
            }
            if cholesky(&mut k, n) {
                let mut alpha = targets.to_vec();
                solve_lower(&k, n, &mut alpha);
                let log_det: f64 = (0..n).map(|i| k[i * n + i].ln()).sum();
                let data_fit: f64 = alpha.iter().map(|a| a * a).sum();
                solve_upper_from_lower(&k, n, &mut alpha);
                let log_marginal = -0.5 * data_fit
                    - log_det
                    - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
                return Ok(GpModel {
                    inputs: inputs.to_vec(),
                    chol: k,
                    alpha,
                    sigma2,
                    ell,
                    jitter,
                    log_marginal,
                });
            }
            jitter *= 10.0;
            if jitter > 1e-2 {
                return Err(MfError::CholeskyFailed { max_jitter: 1e-2 });
            }
        }
    }

    /// Fits hyperparameters by log-marginal-likelihood grid search over
    /// a coarse log grid (`ell` in 10^[-1, 1], `sigma2` in {0.25, 1, 4}).
    pub fn fit_ml(inputs: &[Vec<f64>], targets: &[f64]) -> Result<Self> {
        let ells = [0.1, 0.31622776601683794, 1.0, 3.1622776601683795, 10.0];
        let sigma2s = [0.25, 1.0, 4.0];
        let mut best: Option<GpModel> = None;
        for &ell in &ells {
            for &s2 in &sigma2s {
                let model = GpModel::fit(inputs, targets, s2, ell)?;
                if best
                    .as_ref()
                    .map_or(true, |b| model.log_marginal > b.log_marginal)
                {
                    best = Some(model);
                }
            }
        }
        Ok(best.expect("non-empty hyperparameter grid"))
    }

    pub fn log_marginal(&self) -> f64 {
        self.log_marginal
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn hyperparameters(&self) -> (f64, f64) {
        (self.sigma2, self.ell)
    }

    /// Posterior mean and variance at a query point. The variance is clamped
    /// at zero against rounding.
    pub fn posterior(&self, query: &[f64]) -> (f64, f64) {
        let n = self.inputs.len();
        let mut k_star: Vec<f64> = self
            .inputs
            .iter()
            .map(|x| matern32(euclidean(x, query), self.sigma2, self.ell))
            .collect();
        let mean = k_star.iter().zip(&self.alpha).map(|(k, a)| k * a).sum();
        solve_lower(&self.chol, n, &mut k_star);
        let explained: f64 = k_star.iter().map(|v| v * v).sum();
        let var = (self.sigma2 - explained).max(0.0);
        (mean, var)
    }
}

/// Standard normal pdf.
fn phi(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal cdf via an erfc rational approximation (|err| < 1.2e-7).
fn big_phi(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let ans = t
        * (-z * z - 1.26551223
            + t * (1.00002368
                + t * (0.37409196
                    + t * (0.09678418
                        + t * (-0.18628806
                            + t * (0.27886807
                                + t * (-1.13520398
                                    + t * (1.48851587
                                        + t * (-0.82215223 + t * 0.17087277)))))))))
        .exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

/// Expected improvement for minimization: how much the posterior at `query`
/// is expected to improve on `best` (both on the standardized scale).
pub fn expected_improvement(mean: f64, var: f64, best: f64) -> f64 {
    let sd = var.sqrt();
    if sd < 1e-12 {
        return (best - mean).max(0.0);
    }
    let z = (best - mean) / sd;
    (sd * (z * big_phi(z) + phi(z))).max(0.0)
}
