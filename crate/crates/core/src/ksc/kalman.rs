//! Kalman filter, smoother and simulation smoother for the scalar model
//!
//! ```text
//! obs_t   = d_t + x_t + e_t,                 e_t ~ N(0, v_t)
//! x_{t+1} = m (1 - phi) + phi x_t + eta_t,   eta_t ~ N(0, sigma2)
//! x_1     ~ N(m, sigma2 / (1 - phi^2))
//! ```
//!
//! Conditional on the mixture indicators, the offset-mixture model has this
//! form with `m = mu` (centered) or `m = 0` and `mu` folded into `d_t`
//! (non-centered in location).

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::mixture::MixtureTable;
use crate::error::{Error, Result};
use crate::model::{LatentPath, Parameterization, PathKind, StaticParams};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianModel {
    pub obs: Vec<f64>,
    pub obs_intercept: Vec<f64>,
    pub obs_var: Vec<f64>,
    pub state_mean: f64,
    pub phi: f64,
    pub sigma2: f64,
}

impl LinearGaussianModel {
    /// The conditionally Gaussian model implied by indicators `s` (1-based).
    pub fn from_mixture(
        ystar: &[f64],
        s: &[u8],
        params: &StaticParams,
        parameterization: Parameterization,
        table: &MixtureTable,
    ) -> Result<Self> {
        if ystar.len() != s.len() {
            return Err(Error::Length {
                expected: ystar.len(),
                got: s.len(),
            });
        }
        let shift = match parameterization {
            Parameterization::Centered => 0.0,
            Parameterization::NonCentered => params.mu(),
        };
        let mut obs_intercept = Vec::with_capacity(s.len());
        let mut obs_var = Vec::with_capacity(s.len());
        for &si in s {
            let i = usize::from(si);
            if i == 0 || i > table.len() {
                return Err(Error::Data(format!("mixture indicator {si} out of range")));
            }
            obs_intercept.push(shift + table.component_mean(i - 1));
            obs_var.push(table.component_variance(i - 1));
        }
        Ok(Self {
            obs: ystar.to_vec(),
            obs_intercept,
            obs_var,
            state_mean: match parameterization {
                Parameterization::Centered => params.mu(),
                Parameterization::NonCentered => 0.0,
            },
            phi: params.phi(),
            sigma2: params.sigma2(),
        })
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.phi.abs() >= 1.0 || !self.phi.is_finite() {
            return Err(Error::InvalidParams(format!(
                "stationary initialization needs |phi| < 1, got {}",
                self.phi
            )));
        }
        if !(self.sigma2 >= 0.0) {
            return Err(Error::InvalidParams(format!("sigma2 = {}", self.sigma2)));
        }
        let n = self.obs.len();
        for got in [self.obs_intercept.len(), self.obs_var.len()] {
            if got != n {
                return Err(Error::Length { expected: n, got });
            }
        }
        Ok(())
    }

    fn initial_variance(&self) -> f64 {
        self.sigma2 / (1.0 - self.phi * self.phi)
    }

    fn state_intercept(&self) -> f64 {
        self.state_mean * (1.0 - self.phi)
    }

    /// Same dynamics and noise, with both intercepts removed and new observations.
    fn centered_copy(&self, obs: Vec<f64>) -> Self {
        Self {
            obs,
            obs_intercept: vec![0.0; self.obs.len()],
            obs_var: self.obs_var.clone(),
            state_mean: 0.0,
            phi: self.phi,
            sigma2: self.sigma2,
        }
    }
}

/// Forward-pass quantities, indexed by time.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanCache {
    pub predicted_mean: Vec<f64>,
    pub predicted_var: Vec<f64>,
    pub filtered_mean: Vec<f64>,
    pub filtered_var: Vec<f64>,
    pub innovation: Vec<f64>,
    pub innovation_var: Vec<f64>,
    pub log_likelihood: f64,
}

pub fn filter(model: &LinearGaussianModel) -> Result<KalmanCache> {
    model.validate()?;
    let n = model.len();
    let mut cache = KalmanCache {
        predicted_mean: Vec::with_capacity(n),
        predicted_var: Vec::with_capacity(n),
        filtered_mean: Vec::with_capacity(n),
        filtered_var: Vec::with_capacity(n),
        innovation: Vec::with_capacity(n),
        innovation_var: Vec::with_capacity(n),
        log_likelihood: 0.0,
    };
    let c = model.state_intercept();
    let mut a = model.state_mean;
    let mut p = model.initial_variance();
    for t in 0..n {
        let v = model.obs[t] - model.obs_intercept[t] - a;
        let f = p + model.obs_var[t];
        if !(f > 0.0) {
            return Err(Error::NonFinite(format!("innovation variance {f} at t={}", t + 1)));
        }
        let k = p / f;
        let am = a + k * v;
        let pm = p * model.obs_var[t] / f;
        cache.log_likelihood -= 0.5 * (LN_2PI + f.ln() + v * v / f);
        cache.predicted_mean.push(a);
        cache.predicted_var.push(p);
        cache.filtered_mean.push(am);
        cache.filtered_var.push(pm);
        cache.innovation.push(v);
        cache.innovation_var.push(f);
        a = c + model.phi * am;
        p = model.phi * model.phi * pm + model.sigma2;
    }
    Ok(cache)
}

/// Smoothed means and variances `E[x_t | obs]`, `Var[x_t | obs]` (Rauch-Tung-Striebel).
pub fn smooth(model: &LinearGaussianModel, cache: &KalmanCache) -> (Vec<f64>, Vec<f64>) {
    let n = model.len();
    let mut mean = cache.filtered_mean.clone();
    let mut var = cache.filtered_var.clone();
    for t in (0..n.saturating_sub(1)).rev() {
        let p_next = cache.predicted_var[t + 1];
        let j = if p_next > 0.0 {
            cache.filtered_var[t] * model.phi / p_next
        } else {
            0.0
        };
        mean[t] = cache.filtered_mean[t] + j * (mean[t + 1] - cache.predicted_mean[t + 1]);
        var[t] = cache.filtered_var[t] + j * j * (var[t + 1] - p_next);
    }
    (mean, var)
}

/// One joint draw of the states given the observations (mean-correction
/// simulation smoother): simulate `(x+, obs+)` from the model and return
/// `x+ + E[x | obs - obs+]` under the intercept-free model.
pub fn draw_states<R: Rng + ?Sized>(model: &LinearGaussianModel, rng: &mut R) -> Result<Vec<f64>> {
    model.validate()?;
    let n = model.len();
    let c = model.state_intercept();
    let sigma = model.sigma2.sqrt();
    let mut x_sim = Vec::with_capacity(n);
    let mut diff = Vec::with_capacity(n);
    let z: f64 = StandardNormal.sample(rng);
    let mut x = model.state_mean + model.initial_variance().sqrt() * z;
    for t in 0..n {
        x_sim.push(x);
        let e: f64 = StandardNormal.sample(rng);
        let obs_sim = model.obs_intercept[t] + x + model.obs_var[t].sqrt() * e;
        diff.push(model.obs[t] - obs_sim);
        if t + 1 < n {
            let eta: f64 = StandardNormal.sample(rng);
            x = c + model.phi * x + sigma * eta;
        }
    }
    let zero_model = model.centered_copy(diff);
    let cache = filter(&zero_model)?;
    let (correction, _) = smooth(&zero_model, &cache);
    Ok(x_sim.iter().zip(&correction).map(|(a, b)| a + b).collect())
}

/// Kalman filter for the offset-mixture model given indicators `s` (1-based).
pub fn kalman_filter(
    ystar: &[f64],
    s: &[u8],
    params: &StaticParams,
    parameterization: Parameterization,
    table: &MixtureTable,
) -> Result<KalmanCache> {
    filter(&LinearGaussianModel::from_mixture(ystar, s, params, parameterization, table)?)
}

/// One draw of the latent path from `p(states | y*, s, params)`.
pub fn simulation_smoother<R: Rng + ?Sized>(
    ystar: &[f64],
    s: &[u8],
    params: &StaticParams,
    parameterization: Parameterization,
    table: &MixtureTable,
    rng: &mut R,
) -> Result<LatentPath> {
    let model = LinearGaussianModel::from_mixture(ystar, s, params, parameterization, table)?;
    let values = draw_states(&model, rng)?;
    let kind = match parameterization {
        Parameterization::Centered => PathKind::LogVariance,
        Parameterization::NonCentered => PathKind::Demeaned,
    };
    Ok(LatentPath { values, kind })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{SeedStreams, StreamRole};

    #[test]
    fn single_observation_closed_form() {
        let table = MixtureTable::ksc();
        let p = StaticParams::new(-0.4, 0.9, 0.05).unwrap();
        let ystar = [-1.7];
        for s in 1..=7u8 {
            let cache = kalman_filter(&ystar, &[s], &p, Parameterization::Centered, &table).unwrap();
            let m = -0.4 + table.component_mean(usize::from(s) - 1);
            let v = 0.05 / (1.0 - 0.81) + table.component_variance(usize::from(s) - 1);
            let expected = -0.5 * (LN_2PI + v.ln() + (-1.7 - m).powi(2) / v);
            assert!((cache.log_likelihood - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_noise_collapses_to_observations() {
        let model = LinearGaussianModel {
            obs: vec![0.3, -0.2, 1.1, 0.4],
            obs_intercept: vec![0.1, -0.5, 0.0, 0.2],
            obs_var: vec![0.0; 4],
            state_mean: 0.2,
            phi: 0.7,
            sigma2: 0.3,
        };
        let mut rng = SeedStreams::new(3).stream(0, StreamRole::Auxiliary);
        for _ in 0..10 {
            let draw = draw_states(&model, &mut rng).unwrap();
            for t in 0..4 {
                assert!((draw[t] - (model.obs[t] - model.obs_intercept[t])).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn rejects_mismatched_lengths_and_bad_indicators() {
        let table = MixtureTable::ksc();
        let p = StaticParams::new(0.0, 0.5, 0.1).unwrap();
        assert!(kalman_filter(&[0.0, 1.0], &[1], &p, Parameterization::Centered, &table).is_err());
        assert!(kalman_filter(&[0.0], &[8], &p, Parameterization::Centered, &table).is_err());
        assert!(kalman_filter(&[0.0], &[0], &p, Parameterization::Centered, &table).is_err());
    }

    #[test]
    fn explosive_dynamics_rejected() {
        let model = LinearGaussianModel {
            obs: vec![0.0],
            obs_intercept: vec![0.0],
            obs_var: vec![1.0],
            state_mean: 0.0,
            phi: 1.0,
            sigma2: 0.1,
        };
        assert!(filter(&model).is_err());
    }
}
