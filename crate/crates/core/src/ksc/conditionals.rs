//! Full conditionals of the offset-mixture Gibbs sampler.

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use super::mixture::{log_sum_exp, MixtureTable};
use crate::error::{Error, Result};
use crate::model::{stretch_beta, PriorSpec, StaticParams};

/// Prior used inside the conjugate `mu` update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MuUpdate {
    /// Flat prior on `mu`, as in the classic offset-mixture sampler.
    #[default]
    Flat,
    /// The `N(mu_mean, mu_var)` prior of [`PriorSpec`].
    Conjugate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalConditional {
    pub mean: f64,
    pub var: f64,
}

impl NormalConditional {
    fn with_prior(precision: f64, weighted_sum: f64, prior: &PriorSpec, update: MuUpdate) -> Self {
        let (precision, weighted_sum) = match update {
            MuUpdate::Flat => (precision, weighted_sum),
            MuUpdate::Conjugate => (
                precision + 1.0 / prior.mu_var,
                weighted_sum + prior.mu_mean / prior.mu_var,
            ),
        };
        Self {
            mean: weighted_sum / precision,
            var: 1.0 / precision,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        Normal::new(self.mean, self.var.sqrt())
            .expect("positive variance")
            .sample(rng)
    }
}

/// `log P(s = i | z)` for every component, where `z = y* - h`.
pub fn indicator_log_probs(z: f64, table: &MixtureTable) -> Vec<f64> {
    let mut lp = vec![0.0; table.len()];
    table.component_log_joint(z, &mut lp);
    let norm = log_sum_exp(&lp);
    lp.iter_mut().for_each(|v| *v -= norm);
    lp
}

/// Draws each indicator (1-based) from its discrete conditional given `y*_t - h_t`.
pub fn sample_indicators<R: Rng + ?Sized>(
    ystar: &[f64],
    h: &[f64],
    table: &MixtureTable,
    rng: &mut R,
    out: &mut Vec<u8>,
) -> Result<()> {
    if ystar.len() != h.len() {
        return Err(Error::Length {
            expected: ystar.len(),
            got: h.len(),
        });
    }
    out.clear();
    let k = table.len();
    let mut lp = [0.0; 16];
    for (t, (ys, ht)) in ystar.iter().zip(h).enumerate() {
        let lp = &mut lp[..k];
        table.component_log_joint(ys - ht, lp);
        let max = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::NonFinite(format!("indicator mass at t={}", t + 1)));
        }
        let mut total = 0.0;
        for v in lp.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        let mut u = rng.random::<f64>() * total;
        let mut pick = k - 1;
        for (i, w) in lp.iter().enumerate() {
            if u < *w {
                pick = i;
                break;
            }
            u -= w;
        }
        out.push((pick + 1) as u8);
    }
    Ok(())
}

/// Gaussian conditional of `mu` given centered states.
///
/// The state equation gives precision `((n-1)(1-phi)^2 + (1-phi^2)) / sigma2` and
/// the weighted sum `((1-phi^2) h_1 + (1-phi) sum_t (h_{t+1} - phi h_t)) / sigma2`.
pub fn mu_conditional(h: &[f64], params: &StaticParams, prior: &PriorSpec, update: MuUpdate) -> NormalConditional {
    let phi = params.phi();
    let s2 = params.sigma2();
    let n = h.len();
    let one_m_phi2 = 1.0 - phi * phi;
    let precision = ((n.saturating_sub(1)) as f64 * (1.0 - phi).powi(2) + one_m_phi2) / s2;
    let sum: f64 = h.windows(2).map(|w| w[1] - phi * w[0]).sum();
    let weighted = (one_m_phi2 * h[0] + (1.0 - phi) * sum) / s2;
    NormalConditional::with_prior(precision, weighted, prior, update)
}

pub fn sample_mu<R: Rng + ?Sized>(
    h: &[f64],
    params: &StaticParams,
    prior: &PriorSpec,
    update: MuUpdate,
    rng: &mut R,
) -> f64 {
    mu_conditional(h, params, prior, update).sample(rng)
}

/// Conditional of `mu` when it is the measurement intercept:
/// `y*_t - g_t - (m_{s_t} - 1.2704) = mu + e_t`, `e_t ~ N(0, v2_{s_t})`.
pub fn mu_intercept_conditional(
    ystar: &[f64],
    g: &[f64],
    s: &[u8],
    table: &MixtureTable,
    prior: &PriorSpec,
    update: MuUpdate,
) -> NormalConditional {
    let mut precision = 0.0;
    let mut weighted = 0.0;
    for ((ys, gt), &si) in ystar.iter().zip(g).zip(s) {
        let i = usize::from(si) - 1;
        let w = 1.0 / table.component_variance(i);
        precision += w;
        weighted += w * (ys - gt - table.component_mean(i));
    }
    NormalConditional::with_prior(precision, weighted, prior, update)
}

/// Shape and scale of the inverse-gamma conditional of `sigma2`.
pub fn sigma2_conditional(h: &[f64], params: &StaticParams, prior: &PriorSpec) -> (f64, f64) {
    let mu = params.mu();
    let phi = params.phi();
    let d1 = h[0] - mu;
    let mut ss = d1 * d1 * (1.0 - phi * phi);
    for w in h.windows(2) {
        let e = (w[1] - mu) - phi * (w[0] - mu);
        ss += e * e;
    }
    let shape = (h.len() as f64 + prior.sigma_r) / 2.0;
    let scale = (2.0 * prior.sigma2_scale + ss) / 2.0;
    (shape, scale)
}

pub fn sample_sigma2<R: Rng + ?Sized>(h: &[f64], params: &StaticParams, prior: &PriorSpec, rng: &mut R) -> f64 {
    let (shape, scale) = sigma2_conditional(h, params, prior);
    let gamma = Gamma::new(shape, 1.0 / scale).expect("positive shape and scale");
    loop {
        let s = 1.0 / gamma.sample(rng);
        if s.is_finite() && s > 0.0 {
            return s;
        }
    }
}

/// Least-squares proposal `(phi_hat, V_phi)` from the state transitions, if defined.
pub fn phi_proposal(h: &[f64], mu: f64, sigma2: f64) -> Option<(f64, f64)> {
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for w in h.windows(2) {
        let x = w[0] - mu;
        sxx += x * x;
        sxy += (w[1] - mu) * x;
    }
    (sxx > 0.0).then(|| (sxy / sxx, sigma2 / sxx))
}

/// Log acceptance target of the `phi` step: prior, initial-state density, and
/// the stationary normalizing term.
pub fn phi_log_target(phi: f64, h1: f64, mu: f64, sigma2: f64, prior: &PriorSpec) -> f64 {
    if phi.abs() >= 1.0 {
        return f64::NEG_INFINITY;
    }
    let one_m_phi2 = 1.0 - phi * phi;
    prior.phi_log_prior(phi) - (h1 - mu).powi(2) * one_m_phi2 / (2.0 * sigma2) + 0.5 * one_m_phi2.ln()
}

/// Metropolis-Hastings update of `phi`. Returns the new value and whether the proposal was accepted.
pub fn sample_phi_mh<R: Rng + ?Sized>(
    h: &[f64],
    params: &StaticParams,
    prior: &PriorSpec,
    rng: &mut R,
) -> (f64, bool) {
    let (mu, s2, current) = (params.mu(), params.sigma2(), params.phi());
    let h1 = h[0];
    let (proposal, log_ratio) = match phi_proposal(h, mu, s2) {
        Some((mean, var)) => {
            let proposal = Normal::new(mean, var.sqrt()).expect("positive variance").sample(rng);
            let log_ratio = phi_log_target(proposal, h1, mu, s2, prior) - phi_log_target(current, h1, mu, s2, prior);
            (proposal, log_ratio)
        }
        None => {
            // No transitions to regress on: independence proposal from the prior.
            let beta = Beta::new(prior.phi_beta_a, prior.phi_beta_b).expect("validated prior");
            let proposal = stretch_beta(beta.sample(rng));
            let init = |phi: f64| {
                if phi.abs() >= 1.0 {
                    return f64::NEG_INFINITY;
                }
                let one_m_phi2 = 1.0 - phi * phi;
                -(h1 - mu).powi(2) * one_m_phi2 / (2.0 * s2) + 0.5 * one_m_phi2.ln()
            };
            (proposal, init(proposal) - init(current))
        }
    };
    if proposal.abs() >= 1.0 || !log_ratio.is_finite() && log_ratio < 0.0 {
        return (current, false);
    }
    let u: f64 = rng.random();
    if log_ratio >= 0.0 || u.ln() < log_ratio {
        (proposal, true)
    } else {
        (current, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{SeedStreams, StreamRole};

    fn rng() -> crate::rng::StreamRng {
        SeedStreams::new(5).stream(0, StreamRole::Auxiliary)
    }

    #[test]
    fn identical_components_return_prior_weights() {
        let table = MixtureTable::new(vec![0.3, 0.7], vec![0.5, 0.5], vec![2.0, 2.0]).unwrap();
        for z in [-3.0, 0.0, 4.0] {
            let lp = indicator_log_probs(z, &table);
            assert!((lp[0].exp() - 0.3).abs() < 1e-12);
            assert!((lp[1].exp() - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_persistence_mu_is_sample_mean() {
        let h = [0.3, -0.1, 0.8, 0.2, 0.5];
        let p = StaticParams::new(0.0, 0.0, 0.2).unwrap();
        let c = mu_conditional(&h, &p, &PriorSpec::default(), MuUpdate::Flat);
        assert!((c.mean - 0.34).abs() < 1e-12);
        assert!((c.var - 0.2 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn mu_variance_formula() {
        let h = [0.3, -0.1, 0.8, 0.2];
        let p = StaticParams::new(0.0, 0.9, 0.05).unwrap();
        let c = mu_conditional(&h, &p, &PriorSpec::default(), MuUpdate::Flat);
        let expected = 0.05 / (3.0 * 0.1f64.powi(2) + (1.0 - 0.81));
        assert!((c.var - expected).abs() < 1e-15);
    }

    #[test]
    fn sigma2_at_flat_path() {
        let p = StaticParams::new(0.4, 0.8, 0.1).unwrap();
        let h = [0.4; 6];
        let (shape, scale) = sigma2_conditional(&h, &p, &PriorSpec::default());
        assert_eq!(shape, (6.0 + 5.0) / 2.0);
        assert!((scale - 0.025).abs() < 1e-15);
    }

    #[test]
    fn out_of_support_proposal_rejected() {
        // A path that regresses to phi_hat = 1.2 with negligible spread.
        let mut h = vec![1e-3];
        for _ in 0..40 {
            let last = *h.last().unwrap();
            h.push(1.2 * last);
        }
        let p = StaticParams::new(0.0, 0.5, 1e-12).unwrap();
        let (mean, var) = phi_proposal(&h, 0.0, 1e-12).unwrap();
        assert!((mean - 1.2).abs() < 1e-9 && var < 1e-9);
        let mut r = rng();
        for _ in 0..20 {
            let (phi, accepted) = sample_phi_mh(&h, &p, &PriorSpec::default(), &mut r);
            assert!(!accepted);
            assert_eq!(phi, 0.5);
        }
    }

    #[test]
    fn indicator_draws_are_one_based() {
        let table = MixtureTable::ksc();
        let mut out = Vec::new();
        sample_indicators(&[0.0, -5.0, 3.0], &[0.0, 0.0, 0.0], &table, &mut rng(), &mut out).unwrap();
        assert_eq!(out.len(), 3);
        assert!(out.iter().all(|&s| (1..=7).contains(&s)));
        assert!(sample_indicators(&[0.0], &[0.0, 1.0], &table, &mut rng(), &mut out).is_err());
    }
}
