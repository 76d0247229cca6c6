//! Normal-mixture approximation of the log-chi-square(1) distribution and the
//! offset log-square transform of the returns.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ReturnSeries;

/// Mean of `log(chi^2_1)`; component means are stored relative to it.
pub const LOG_CHI2_MEAN: f64 = -1.2704;

/// Default offset `c` in `log(y^2 + c)`.
pub const DEFAULT_OFFSET: f64 = 0.001;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

// Seven-component table: probabilities, means (before the -1.2704 shift), variances.
pub const KSC_Q: [f64; 7] = [0.00730, 0.10556, 0.00002, 0.04395, 0.34001, 0.24566, 0.25750];
pub const KSC_M: [f64; 7] = [-10.12999, -3.97281, -8.56686, 2.77786, 0.61942, 1.79518, -1.08819];
pub const KSC_V2: [f64; 7] = [5.79596, 2.61369, 5.17950, 0.16735, 0.64009, 0.34023, 1.26261];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixtureTable {
    q: Vec<f64>,
    m: Vec<f64>,
    v2: Vec<f64>,
    // cached: ln q_i - ln sqrt(2 pi v2_i), and the shifted means
    log_norm: Vec<f64>,
    means: Vec<f64>,
}

impl MixtureTable {
    /// The seven-component table.
    pub fn ksc() -> Self {
        Self::new(KSC_Q.to_vec(), KSC_M.to_vec(), KSC_V2.to_vec()).expect("embedded table is valid")
    }

    /// A custom table. `m` are means before the [`LOG_CHI2_MEAN`] shift.
    pub fn new(q: Vec<f64>, m: Vec<f64>, v2: Vec<f64>) -> Result<Self> {
        if q.is_empty() || q.len() != m.len() || q.len() != v2.len() {
            return Err(Error::Config("mixture table columns must be non-empty and equal length".into()));
        }
        if q.iter().any(|&x| !(x > 0.0)) || v2.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::Config("mixture probabilities and variances must be positive".into()));
        }
        let total: f64 = q.iter().sum();
        if (total - 1.0).abs() > 1e-4 {
            return Err(Error::Config(format!("mixture probabilities sum to {total}")));
        }
        let log_norm = q
            .iter()
            .zip(&v2)
            .map(|(q, v)| q.ln() - LN_SQRT_2PI - 0.5 * v.ln())
            .collect();
        let means = m.iter().map(|m| m + LOG_CHI2_MEAN).collect();
        Ok(Self { q, m, v2, log_norm, means })
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.q
    }

    pub fn raw_means(&self) -> &[f64] {
        &self.m
    }

    pub fn variances(&self) -> &[f64] {
        &self.v2
    }

    /// Mean of component `i` (0-based) including the shift.
    pub fn component_mean(&self, i: usize) -> f64 {
        self.means[i]
    }

    pub fn component_variance(&self, i: usize) -> f64 {
        self.v2[i]
    }

    /// `ln q_i + ln N(z | m_i - 1.2704, v2_i)` for every component.
    pub fn component_log_joint(&self, z: f64, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.len()) {
            let d = z - self.means[i];
            *o = self.log_norm[i] - d * d / (2.0 * self.v2[i]);
        }
    }

    pub fn mean(&self) -> f64 {
        self.q.iter().zip(&self.means).map(|(q, m)| q * m).sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.q
            .iter()
            .zip(&self.means)
            .zip(&self.v2)
            .map(|((q, m), v)| q * (v + (m - mean).powi(2)))
            .sum()
    }

    /// Log of the mixture density at `z`.
    pub fn log_density(&self, z: f64) -> f64 {
        let mut buf = [0.0; 16];
        let comps = self.scratch(&mut buf);
        self.component_log_joint(z, comps);
        log_sum_exp(comps)
    }

    /// Log density and its derivative in `z`.
    pub fn log_density_and_derivative(&self, z: f64) -> (f64, f64) {
        let mut buf = [0.0; 16];
        let comps = self.scratch(&mut buf);
        self.component_log_joint(z, comps);
        let lse = log_sum_exp(comps);
        let deriv = comps
            .iter()
            .enumerate()
            .map(|(i, lj)| -(lj - lse).exp() * (z - self.means[i]) / self.v2[i])
            .sum();
        (lse, deriv)
    }

    fn scratch<'a>(&self, buf: &'a mut [f64; 16]) -> &'a mut [f64] {
        assert!(self.len() <= buf.len(), "mixture tables are limited to 16 components");
        &mut buf[..self.len()]
    }
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Log density of `log(X)` for `X ~ chi^2_1`.
pub fn log_chi2_1_logdensity(z: f64) -> f64 {
    0.5 * z - 0.5 * z.exp() - LN_SQRT_2PI
}

/// `y* = log(y^2 + c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedSeries {
    pub ystar: Vec<f64>,
    pub offset: f64,
}

pub fn transform_returns(y: &ReturnSeries, offset: f64) -> Result<TransformedSeries> {
    if !(offset > 0.0 && offset.is_finite()) {
        return Err(Error::Config(format!("offset must be positive, got {offset}")));
    }
    let ystar = y.values().iter().map(|v| (v * v + offset).ln()).collect();
    Ok(TransformedSeries { ystar, offset })
}

/// Log importance weight of one draw: exact log-chi-square measurement density
/// minus the mixture density, summed over time.
pub fn approximation_log_weight(ystar: &[f64], h: &[f64], table: &MixtureTable) -> f64 {
    ystar
        .iter()
        .zip(h)
        .map(|(ys, h)| {
            let z = ys - h;
            log_chi2_1_logdensity(z) - table.log_density(z)
        })
        .sum()
}
