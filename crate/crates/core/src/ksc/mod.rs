//! Offset-mixture Gibbs sampler for the SV model.
//!
//! Squared returns are mapped to `y* = log(y^2 + c)`, which is linear in the
//! log variance with log-chi-square noise. The noise is replaced by a seven
//! component Gaussian mixture, so conditional on the indicators the model is
//! linear Gaussian and the states are drawn jointly with a simulation smoother.

mod conditionals;
mod kalman;
mod mixture;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use conditionals::{
    indicator_log_probs, mu_conditional, mu_intercept_conditional, phi_log_target, phi_proposal, sample_indicators,
    sample_mu, sample_phi_mh, sample_sigma2, sigma2_conditional, MuUpdate, NormalConditional,
};
pub use kalman::{draw_states, filter, kalman_filter, simulation_smoother, smooth, KalmanCache, LinearGaussianModel};
pub use mixture::{
    approximation_log_weight, log_chi2_1_logdensity, transform_returns, MixtureTable, TransformedSeries,
    DEFAULT_OFFSET, KSC_M, KSC_Q, KSC_V2, LOG_CHI2_MEAN,
};

use crate::draws::{DrawObserver, PosteriorDraws, StateSelection, Stopwatch};
use crate::error::{Error, Result};
use crate::model::{Parameterization, PriorSpec, ReturnSeries, StaticParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KscConfig {
    pub n_burnin: usize,
    /// Retained draws after thinning.
    pub n_draws: usize,
    pub thin: usize,
    pub offset: f64,
    pub mu_update: MuUpdate,
    pub record_states: StateSelection,
}

impl Default for KscConfig {
    fn default() -> Self {
        Self {
            n_burnin: 10_000,
            n_draws: 9_999,
            thin: 1,
            offset: DEFAULT_OFFSET,
            mu_update: MuUpdate::Flat,
            record_states: StateSelection::None,
        }
    }
}

impl KscConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_draws == 0 {
            return Err(Error::Config("n_draws must be at least 1".into()));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if !(self.offset > 0.0 && self.offset.is_finite()) {
            return Err(Error::Config(format!("offset must be positive, got {}", self.offset)));
        }
        Ok(())
    }
}

const INIT_COMPONENT: u8 = 4;
const INIT_MU: f64 = 0.0;
const INIT_PHI: f64 = 0.95;
const INIT_SIGMA2: f64 = 0.02;

/// Runs one offset-mixture Gibbs chain.
///
/// Each sweep draws the states, the indicators, `mu`, `sigma2` and `phi` in
/// that order. Every retained draw is passed to `observer` with the full
/// log-variance path, and its log importance weight is stored.
pub fn run_ksc_chain<R: Rng + ?Sized, O: DrawObserver + ?Sized>(
    y: &ReturnSeries,
    prior: &PriorSpec,
    parameterization: Parameterization,
    config: &KscConfig,
    table: &MixtureTable,
    rng: &mut R,
    observer: &mut O,
) -> Result<PosteriorDraws> {
    prior.validate()?;
    config.validate()?;
    let watch = Stopwatch::start();
    let ystar = transform_returns(y, config.offset)?.ystar;
    let n = ystar.len();
    let tracked = config.record_states.resolve(n);

    let mut params = StaticParams::new(INIT_MU, INIT_PHI, INIT_SIGMA2)?;
    let mut s = vec![INIT_COMPONENT; n];
    let mut h = vec![0.0; n];

    let mut out = PosteriorDraws::new(&tracked);
    out.draws.reserve(config.n_draws);
    let mut log_weights = Vec::with_capacity(config.n_draws);
    let mut accepted = 0usize;
    let total = config.n_burnin + config.n_draws * config.thin;

    for sweep in 0..total {
        let states = simulation_smoother(&ystar, &s, &params, parameterization, table, rng)?.values;
        if let Some(t) = states.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("state h[{}] at sweep {}", t + 1, sweep + 1)));
        }
        match parameterization {
            Parameterization::Centered => {
                sample_indicators(&ystar, &states, table, rng, &mut s)?;
                let mu = sample_mu(&states, &params, prior, config.mu_update, rng);
                params = params.with_mu(mu);
                let sigma2 = sample_sigma2(&states, &params, prior, rng);
                params = params.with_sigma2(sigma2);
                let (phi, acc) = sample_phi_mh(&states, &params, prior, rng);
                params = params.with_phi(phi);
                accepted += usize::from(acc);
                h.copy_from_slice(&states);
            }
            Parameterization::NonCentered => {
                for (ht, g) in h.iter_mut().zip(&states) {
                    *ht = g + params.mu();
                }
                sample_indicators(&ystar, &h, table, rng, &mut s)?;
                let mu = mu_intercept_conditional(&ystar, &states, &s, table, prior, config.mu_update).sample(rng);
                let demeaned = params.with_mu(0.0);
                let sigma2 = sample_sigma2(&states, &demeaned, prior, rng);
                let (phi, acc) = sample_phi_mh(&states, &demeaned.with_sigma2(sigma2), prior, rng);
                params = params.with_mu(mu).with_sigma2(sigma2).with_phi(phi);
                accepted += usize::from(acc);
                for (ht, g) in h.iter_mut().zip(&states) {
                    *ht = g + mu;
                }
            }
        }
        if !(params.mu().is_finite() && params.sigma2().is_finite() && params.sigma2() > 0.0) {
            return Err(Error::NonFinite(format!("static parameters at sweep {}", sweep + 1)));
        }
        if sweep >= config.n_burnin && (sweep - config.n_burnin + 1).is_multiple_of(config.thin) {
            out.push(&params, &h, &tracked);
            log_weights.push(approximation_log_weight(&ystar, &h, table));
            observer.observe(&params, &h);
        }
    }

    out.log_weights = Some(log_weights);
    out.accept_rate = accepted as f64 / total as f64;
    out.wall_time = watch.elapsed();
    Ok(out)
}
