//! Independent oracles shared by the integration tests: dense Gaussian
//! algebra, grid integration, and batch-means Monte Carlo errors.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

pub const LN_2PI: f64 = 1.8378770664093453;

/// Covariance of a stationary AR(1) path of length `n`.
pub fn ar1_cov(n: usize, phi: f64, sigma2: f64) -> DMatrix<f64> {
    let v = sigma2 / (1.0 - phi * phi);
    DMatrix::from_fn(n, n, |i, j| v * phi.powi((i as i32 - j as i32).abs()))
}

pub fn mvn_logpdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let chol = cov.clone().cholesky().expect("positive definite covariance");
    let d = x - mean;
    let sol = chol.solve(&d);
    let log_det: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    -0.5 * (x.len() as f64 * LN_2PI + log_det + d.dot(&sol))
}

/// Moments of `x | obs` for `obs = d + x + e`, `x ~ N(m 1, Sx)`, `e ~ N(0, diag(v))`.
pub fn gaussian_conditional(
    obs: &[f64],
    intercept: &[f64],
    obs_var: &[f64],
    state_mean: f64,
    phi: f64,
    sigma2: f64,
) -> (DVector<f64>, DMatrix<f64>) {
    let n = obs.len();
    let sx = ar1_cov(n, phi, sigma2);
    let sy = &sx + DMatrix::from_diagonal(&DVector::from_column_slice(obs_var));
    let resid = DVector::from_fn(n, |i, _| obs[i] - intercept[i] - state_mean);
    let sy_inv = sy.try_inverse().expect("invertible");
    let gain = &sx * &sy_inv;
    let mean = DVector::from_element(n, state_mean) + &gain * resid;
    let cov = &sx - &gain * &sx;
    (mean, cov)
}

/// Normalized mean and variance of `exp(logf)` on `[lo, hi]` with Simpson's rule.
pub fn grid_moments(logf: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> (f64, f64) {
    let n = n + n % 2;
    let h = (hi - lo) / n as f64;
    let xs: Vec<f64> = (0..=n).map(|i| lo + i as f64 * h).collect();
    let lf: Vec<f64> = xs.iter().map(|&x| logf(x)).collect();
    let max = lf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for (i, (&x, &l)) in xs.iter().zip(&lf).enumerate() {
        let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        let f = w * (l - max).exp();
        z += f;
        m1 += f * x;
        m2 += f * x * x;
    }
    let mean = m1 / z;
    (mean, m2 / z - mean * mean)
}

/// Normalized CDF of `exp(logf)` at `at`, on the same grid rule.
pub fn grid_cdf(logf: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize, at: f64) -> f64 {
    let n = n + n % 2;
    let h = (hi - lo) / n as f64;
    let xs: Vec<f64> = (0..=n).map(|i| lo + i as f64 * h).collect();
    let lf: Vec<f64> = xs.iter().map(|&x| logf(x)).collect();
    let max = lf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    let mut below = 0.0;
    for (&x, &l) in xs.iter().zip(&lf) {
        let f = (l - max).exp();
        total += f;
        if x <= at {
            below += f;
        }
    }
    below / total
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Monte Carlo standard error of the mean of a correlated chain, by batch means.
pub fn batch_mcse(x: &[f64], batches: usize) -> f64 {
    let size = x.len() / batches;
    let means: Vec<f64> = (0..batches).map(|b| mean(&x[b * size..(b + 1) * size])).collect();
    (variance(&means) / batches as f64).sqrt()
}

/// The log-chi-square(1) density, `z/2 - e^z/2 - log(2 pi)/2`.
pub fn log_chi2_density(z: f64) -> f64 {
    0.5 * z - 0.5 * z.exp() - 0.5 * LN_2PI
}

pub const TABLE_Q: [f64; 7] = [0.00730, 0.10556, 0.00002, 0.04395, 0.34001, 0.24566, 0.25750];
pub const TABLE_M: [f64; 7] = [-10.12999, -3.97281, -8.56686, 2.77786, 0.61942, 1.79518, -1.08819];
pub const TABLE_V2: [f64; 7] = [5.79596, 2.61369, 5.17950, 0.16735, 0.64009, 0.34023, 1.26261];

/// Mixture density evaluated term by term, no log-sum-exp.
pub fn mixture_density(z: f64) -> f64 {
    (0..7)
        .map(|i| {
            let m = TABLE_M[i] - 1.2704;
            TABLE_Q[i] * (-(z - m).powi(2) / (2.0 * TABLE_V2[i])).exp() / (2.0 * std::f64::consts::PI * TABLE_V2[i]).sqrt()
        })
        .sum()
}
