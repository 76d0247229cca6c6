//! The stochastic volatility model: parameters, priors, simulation,
//! unconstrained transforms, and the log-posterior used by HMC.

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ksc::MixtureTable;

const LN_2: f64 = std::f64::consts::LN_2;

/// Static parameters `(mu, phi, sigma2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StaticParams {
    mu: f64,
    phi: f64,
    sigma2: f64,
}

impl StaticParams {
    pub fn new(mu: f64, phi: f64, sigma2: f64) -> Result<Self> {
        if !(mu.is_finite() && phi.is_finite() && sigma2.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "parameters must be finite (mu={mu}, phi={phi}, sigma2={sigma2})"
            )));
        }
        if phi.abs() >= 1.0 {
            return Err(Error::InvalidParams(format!(
                "stationarity requires |phi| < 1, got phi={phi}"
            )));
        }
        if sigma2 <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "sigma2 must be positive, got {sigma2}"
            )));
        }
        Ok(Self { mu, phi, sigma2 })
    }

    /// Skips validation; `sigma2 == 0` is allowed to exercise degenerate limits.
    #[cfg(test)]
    pub(crate) fn degenerate(mu: f64, phi: f64, sigma2: f64) -> Self {
        Self { mu, phi, sigma2 }
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    /// Variance of the stationary distribution of the states.
    pub fn stationary_variance(&self) -> f64 {
        self.sigma2 / (1.0 - self.phi * self.phi)
    }

    pub(crate) fn with_mu(self, mu: f64) -> Self {
        Self { mu, ..self }
    }

    pub(crate) fn with_phi(self, phi: f64) -> Self {
        debug_assert!(phi.abs() < 1.0);
        Self { phi, ..self }
    }

    pub(crate) fn with_sigma2(self, sigma2: f64) -> Self {
        debug_assert!(sigma2 > 0.0);
        Self { sigma2, ..self }
    }
}

/// Priors on the static parameters.
///
/// `mu ~ N(mu_mean, mu_var)`, `sigma2 ~ IG(sigma2_shape, sigma2_scale)` and
/// `(phi + 1) / 2 ~ Beta(phi_beta_a, phi_beta_b)`. `sigma_r` is the prior
/// degrees-of-freedom count of the conjugate `sigma2` update and must equal
/// `2 * sigma2_shape`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSpec {
    pub mu_mean: f64,
    pub mu_var: f64,
    pub sigma2_shape: f64,
    pub sigma2_scale: f64,
    pub phi_beta_a: f64,
    pub phi_beta_b: f64,
    pub sigma_r: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            mu_mean: 0.0,
            mu_var: 10.0,
            sigma2_shape: 2.5,
            sigma2_scale: 0.025,
            phi_beta_a: 20.0,
            phi_beta_b: 1.5,
            sigma_r: 5.0,
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("mu_mean", self.mu_mean),
            ("mu_var", self.mu_var),
            ("sigma2_shape", self.sigma2_shape),
            ("sigma2_scale", self.sigma2_scale),
            ("phi_beta_a", self.phi_beta_a),
            ("phi_beta_b", self.phi_beta_b),
            ("sigma_r", self.sigma_r),
        ];
        for (name, value) in fields {
            if !value.is_finite() {
                return Err(Error::Config(format!("prior {name} must be finite")));
            }
            if name != "mu_mean" && value <= 0.0 {
                return Err(Error::Config(format!("prior {name} must be positive, got {value}")));
            }
        }
        if (self.sigma_r - 2.0 * self.sigma2_shape).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "sigma_r ({}) must equal 2 * sigma2_shape ({})",
                self.sigma_r,
                2.0 * self.sigma2_shape
            )));
        }
        Ok(())
    }

    /// Log density of the stretched beta prior on `phi`, up to a constant.
    pub fn phi_log_prior(&self, phi: f64) -> f64 {
        if phi.abs() >= 1.0 {
            return f64::NEG_INFINITY;
        }
        (self.phi_beta_a - 1.0) * (1.0 + phi).ln() + (self.phi_beta_b - 1.0) * (1.0 - phi).ln()
    }
}

/// Maps a `Beta` draw on `(0, 1)` onto `(-1, 1)`.
pub fn stretch_beta(phi_star: f64) -> f64 {
    2.0 * phi_star - 1.0
}

pub fn sample_prior<R: Rng + ?Sized>(prior: &PriorSpec, rng: &mut R) -> StaticParams {
    let mu = Normal::new(prior.mu_mean, prior.mu_var.sqrt())
        .expect("validated prior")
        .sample(rng);
    let gamma = Gamma::new(prior.sigma2_shape, 1.0 / prior.sigma2_scale).expect("validated prior");
    let sigma2 = loop {
        let s = 1.0 / gamma.sample(rng);
        if s.is_finite() && s > 0.0 {
            break s;
        }
    };
    let beta = Beta::new(prior.phi_beta_a, prior.phi_beta_b).expect("validated prior");
    // A Beta draw can round to exactly 0 or 1 in double precision.
    let phi = loop {
        let phi = stretch_beta(beta.sample(rng));
        if phi.abs() < 1.0 {
            break phi;
        }
    };
    StaticParams { mu, phi, sigma2 }
}

/// How states are expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parameterization {
    /// States are the log variances `h_t`, centered on `mu`.
    Centered,
    /// HMC: states are standardized innovations `h_std`.
    /// Offset-mixture Gibbs: states are demeaned, `g_t = h_t - mu`.
    #[serde(alias = "non-centered", alias = "reparameterized")]
    NonCentered,
}

impl Parameterization {
    pub fn as_str(&self) -> &'static str {
        match self {
            Parameterization::Centered => "centered",
            Parameterization::NonCentered => "noncentered",
        }
    }
}

impl std::str::FromStr for Parameterization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "centered" => Ok(Parameterization::Centered),
            "noncentered" | "non-centered" | "reparameterized" => Ok(Parameterization::NonCentered),
            other => Err(Error::Config(format!("unknown parameterization '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathKind {
    LogVariance,
    Demeaned,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentPath {
    pub values: Vec<f64>,
    pub kind: PathKind,
}

impl LatentPath {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The path on the log-variance scale.
    pub fn log_variance(&self, mu: f64) -> Vec<f64> {
        match self.kind {
            PathKind::LogVariance => self.values.clone(),
            PathKind::Demeaned => self.values.iter().map(|g| g + mu).collect(),
        }
    }
}

/// Demeaned log returns.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    values: Vec<f64>,
}

impl ReturnSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Data("return series is empty".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("return {i} is not finite")));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Draws a latent path and returns from the model.
pub fn simulate<R: Rng + ?Sized>(
    params: &StaticParams,
    len: usize,
    rng: &mut R,
) -> Result<(LatentPath, ReturnSeries)> {
    if len == 0 {
        return Err(Error::Config("series length must be at least 1".into()));
    }
    let sigma = params.sigma();
    let mut h = Vec::with_capacity(len);
    let mut y = Vec::with_capacity(len);
    let z: f64 = StandardNormal.sample(rng);
    let mut state = params.mu + params.stationary_variance().sqrt() * z;
    for t in 0..len {
        h.push(state);
        let eps: f64 = StandardNormal.sample(rng);
        y.push((state / 2.0).exp() * eps);
        if t + 1 < len {
            let eta: f64 = StandardNormal.sample(rng);
            state = params.mu + params.phi * (state - params.mu) + sigma * eta;
        }
    }
    let path = LatentPath {
        values: h,
        kind: PathKind::LogVariance,
    };
    Ok((path, ReturnSeries::new(y)?))
}

/// Draws of the second state `h_2` under the prior, generated through the
/// requested parameterization's construction.
pub fn prior_predictive_h2<R: Rng + ?Sized>(
    prior: &PriorSpec,
    parameterization: Parameterization,
    n: usize,
    rng: &mut R,
) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let p = sample_prior(prior, rng);
            second_state(p.mu, p.phi, p.sigma2, parameterization, rng)
        })
        .collect()
}

fn second_state<R: Rng + ?Sized>(
    mu: f64,
    phi: f64,
    sigma2: f64,
    parameterization: Parameterization,
    rng: &mut R,
) -> f64 {
    let sigma = sigma2.sqrt();
    match parameterization {
        Parameterization::Centered => {
            let sd1 = (sigma2 / (1.0 - phi * phi)).sqrt();
            let h1 = Normal::new(mu, sd1).expect("finite sd").sample(rng);
            Normal::new(mu + phi * (h1 - mu), sigma)
                .expect("finite sd")
                .sample(rng)
        }
        Parameterization::NonCentered => {
            let z1: f64 = StandardNormal.sample(rng);
            let z2: f64 = StandardNormal.sample(rng);
            let h1 = z1 * sigma / (1.0 - phi * phi).sqrt() + mu;
            z2 * sigma + mu + phi * (h1 - mu)
        }
    }
}

// ---------------------------------------------------------------------------
// Unconstrained space
// ---------------------------------------------------------------------------

/// Index of `mu` in the flat unconstrained vector.
pub const IDX_MU: usize = 0;
/// Index of `phi_raw`, with `phi = tanh(phi_raw / 2)`.
pub const IDX_PHI: usize = 1;
/// Index of `log(sigma2)`.
pub const IDX_LOG_SIGMA2: usize = 2;
/// First state coordinate.
pub const IDX_STATES: usize = 3;

/// Unconstrained coordinates. `states` holds `h` (centered) or `h_std`
/// (non-centered). The flat layout is `[mu, phi_raw, log_sigma2, states..]`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnconstrainedParams {
    pub mu: f64,
    pub phi_raw: f64,
    pub log_sigma2: f64,
    pub states: Vec<f64>,
}

impl UnconstrainedParams {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(IDX_STATES + self.states.len());
        v.extend([self.mu, self.phi_raw, self.log_sigma2]);
        v.extend_from_slice(&self.states);
        v
    }

    pub fn from_slice(x: &[f64]) -> Result<Self> {
        if x.len() < IDX_STATES {
            return Err(Error::Length {
                expected: IDX_STATES,
                got: x.len(),
            });
        }
        Ok(Self {
            mu: x[IDX_MU],
            phi_raw: x[IDX_PHI],
            log_sigma2: x[IDX_LOG_SIGMA2],
            states: x[IDX_STATES..].to_vec(),
        })
    }
}

pub fn phi_from_raw(raw: f64) -> f64 {
    (raw / 2.0).tanh()
}

pub fn phi_to_raw(phi: f64) -> f64 {
    2.0 * phi.atanh()
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `log(1 + phi)` and `log(1 - phi)` for `phi = tanh(raw / 2)`, stable for large `|raw|`.
fn log_one_pm_phi(raw: f64) -> (f64, f64) {
    (LN_2 - softplus(-raw), LN_2 - softplus(raw))
}

pub fn to_unconstrained(
    params: &StaticParams,
    h: &[f64],
    parameterization: Parameterization,
) -> UnconstrainedParams {
    let states = match parameterization {
        Parameterization::Centered => h.to_vec(),
        Parameterization::NonCentered => standardize_states(params, h),
    };
    UnconstrainedParams {
        mu: params.mu,
        phi_raw: phi_to_raw(params.phi),
        log_sigma2: params.sigma2.ln(),
        states,
    }
}

pub fn from_unconstrained(
    u: &UnconstrainedParams,
    parameterization: Parameterization,
) -> Result<(StaticParams, Vec<f64>)> {
    let params = StaticParams::new(u.mu, phi_from_raw(u.phi_raw), u.log_sigma2.exp())?;
    let h = match parameterization {
        Parameterization::Centered => u.states.clone(),
        Parameterization::NonCentered => destandardize_states(&params, &u.states),
    };
    Ok((params, h))
}

fn standardize_states(params: &StaticParams, h: &[f64]) -> Vec<f64> {
    let sigma = params.sigma();
    let mu = params.mu;
    let mut out = Vec::with_capacity(h.len());
    if let Some(&h1) = h.first() {
        out.push((h1 - mu) * (1.0 - params.phi * params.phi).sqrt() / sigma);
    }
    for w in h.windows(2) {
        out.push((w[1] - mu - params.phi * (w[0] - mu)) / sigma);
    }
    out
}

fn destandardize_states(params: &StaticParams, h_std: &[f64]) -> Vec<f64> {
    let mut h = vec![0.0; h_std.len()];
    let sd1 = params.sigma() / (1.0 - params.phi * params.phi).sqrt();
    fill_states_from_std(params.mu, params.phi, params.sigma(), sd1, h_std, &mut h);
    h
}

fn fill_states_from_std(mu: f64, phi: f64, sigma: f64, sd1: f64, h_std: &[f64], h: &mut [f64]) {
    let mut prev = 0.0;
    for (t, (&z, out)) in h_std.iter().zip(h.iter_mut()).enumerate() {
        let v = if t == 0 {
            z * sd1 + mu
        } else {
            z * sigma + mu + phi * (prev - mu)
        };
        *out = v;
        prev = v;
    }
}

/// Observation density linking the returns to the states.
#[derive(Debug, Clone)]
pub enum Likelihood {
    /// `y_t ~ N(0, exp(h_t))`.
    Exact,
    /// `log(y_t^2 + c) - h_t` follows the normal-mixture approximation.
    OffsetMixture { ystar: Vec<f64>, table: MixtureTable },
}

/// Log posterior of `(mu, phi, sigma2, states)` on the unconstrained scale,
/// including the log-Jacobians of the `phi` and `log sigma2` maps.
#[derive(Debug, Clone)]
pub struct SvPosterior {
    y2: Vec<f64>,
    prior: PriorSpec,
    parameterization: Parameterization,
    likelihood: Likelihood,
}

impl SvPosterior {
    pub fn new(y: &ReturnSeries, prior: PriorSpec, parameterization: Parameterization) -> Self {
        Self {
            y2: y.values().iter().map(|v| v * v).collect(),
            prior,
            parameterization,
            likelihood: Likelihood::Exact,
        }
    }

    /// Posterior of the offset-mixture approximation, for cross-checking the Gibbs sampler.
    pub fn offset_mixture(
        ystar: Vec<f64>,
        table: MixtureTable,
        prior: PriorSpec,
        parameterization: Parameterization,
    ) -> Self {
        Self {
            y2: vec![0.0; ystar.len()],
            prior,
            parameterization,
            likelihood: Likelihood::OffsetMixture { ystar, table },
        }
    }

    pub fn series_len(&self) -> usize {
        self.y2.len()
    }

    pub fn dim(&self) -> usize {
        IDX_STATES + self.y2.len()
    }

    pub fn parameterization(&self) -> Parameterization {
        self.parameterization
    }

    /// Log posterior (up to a constant); `-inf` or NaN outside the numerically valid region.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        self.evaluate(x, None)
    }

    /// Log posterior and its gradient, written into `grad`.
    pub fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.evaluate(x, Some(grad))
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Length {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("unconstrained coordinate {i}")));
        }
        Ok(())
    }

    /// Log-likelihood term and its derivative with respect to `h_t`.
    fn obs_term(&self, t: usize, h: f64) -> (f64, f64) {
        match &self.likelihood {
            Likelihood::Exact => {
                let e = self.y2[t] * (-h).exp();
                (-0.5 * h - 0.5 * e, -0.5 + 0.5 * e)
            }
            Likelihood::OffsetMixture { ystar, table } => {
                let (lp, dz) = table.log_density_and_derivative(ystar[t] - h);
                (lp, -dz)
            }
        }
    }

    fn evaluate(&self, x: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        let n = self.series_len();
        let p = &self.prior;
        let mu = x[IDX_MU];
        let raw = x[IDX_PHI];
        let ls = x[IDX_LOG_SIGMA2];
        let phi = phi_from_raw(raw);
        let sigma2 = ls.exp();
        let sigma = (0.5 * ls).exp();
        let (log1p_phi, log1m_phi) = log_one_pm_phi(raw);
        let log1m_phi2 = log1p_phi + log1m_phi;
        let one_m_phi2 = log1m_phi2.exp();
        let dphi_draw = 0.5 * one_m_phi2;

        // Priors with Jacobians of the unconstrained maps.
        let mut lp = -(mu - p.mu_mean).powi(2) / (2.0 * p.mu_var)
            - p.sigma2_shape * ls
            - p.sigma2_scale * (-ls).exp()
            + p.phi_beta_a * log1p_phi
            + p.phi_beta_b * log1m_phi;
        let mut g_mu = -(mu - p.mu_mean) / p.mu_var;
        let mut g_ls = -p.sigma2_shape + p.sigma2_scale * (-ls).exp();
        let mut g_raw = p.phi_beta_a * (1.0 - phi) / 2.0 - p.phi_beta_b * (1.0 + phi) / 2.0;

        let states = &x[IDX_STATES..];
        match self.parameterization {
            Parameterization::Centered => {
                let h = states;
                let inv_s2 = 1.0 / sigma2;
                let d1 = h[0] - mu;
                let mut ss = d1 * d1 * one_m_phi2;
                let mut g_phi = -phi / one_m_phi2 + d1 * d1 * phi * inv_s2;
                g_mu += d1 * one_m_phi2 * inv_s2;
                if let Some(g) = grad.as_deref_mut() {
                    g[IDX_STATES] = -d1 * one_m_phi2 * inv_s2;
                    for v in &mut g[IDX_STATES + 1..] {
                        *v = 0.0;
                    }
                }
                for t in 1..n {
                    let prev = h[t - 1] - mu;
                    let e = (h[t] - mu) - phi * prev;
                    ss += e * e;
                    g_mu += e * (1.0 - phi) * inv_s2;
                    g_phi += e * prev * inv_s2;
                    if let Some(g) = grad.as_deref_mut() {
                        g[IDX_STATES + t] -= e * inv_s2;
                        g[IDX_STATES + t - 1] += phi * e * inv_s2;
                    }
                }
                lp += -0.5 * n as f64 * ls + 0.5 * log1m_phi2 - 0.5 * ss * inv_s2;
                g_ls += -0.5 * n as f64 + 0.5 * ss * inv_s2;
                g_raw += g_phi * dphi_draw;
                for (t, &ht) in h.iter().enumerate() {
                    let (l, dl) = self.obs_term(t, ht);
                    lp += l;
                    if let Some(g) = grad.as_deref_mut() {
                        g[IDX_STATES + t] += dl;
                    }
                }
            }
            Parameterization::NonCentered => {
                let z = states;
                let sd1 = sigma / one_m_phi2.sqrt();
                let mut h = vec![0.0; n];
                fill_states_from_std(mu, phi, sigma, sd1, z, &mut h);
                let mut adj = vec![0.0; n];
                for t in 0..n {
                    let (l, dl) = self.obs_term(t, h[t]);
                    lp += l - 0.5 * z[t] * z[t];
                    adj[t] = dl;
                }
                if grad.is_some() {
                    // Reverse sweep through h_{t} = mu + phi (h_{t-1} - mu) + sigma z_t.
                    for t in (0..n.saturating_sub(1)).rev() {
                        adj[t] += phi * adj[t + 1];
                    }
                    let mut g_phi = adj[0] * sigma * z[0] * phi / (one_m_phi2 * one_m_phi2.sqrt());
                    g_mu += adj[0];
                    g_ls += adj[0] * (h[0] - mu) / 2.0;
                    for t in 1..n {
                        g_mu += (1.0 - phi) * adj[t];
                        g_phi += adj[t] * (h[t - 1] - mu);
                        g_ls += adj[t] * sigma * z[t] / 2.0;
                    }
                    g_raw += g_phi * dphi_draw;
                    let g = grad.as_deref_mut().expect("checked above");
                    g[IDX_STATES] = adj[0] * sd1 - z[0];
                    for t in 1..n {
                        g[IDX_STATES + t] = adj[t] * sigma - z[t];
                    }
                }
            }
        }
        if let Some(g) = grad {
            g[IDX_MU] = g_mu;
            g[IDX_PHI] = g_raw;
            g[IDX_LOG_SIGMA2] = g_ls;
        }
        lp
    }
}

/// Log posterior at `u`, up to an additive constant.
pub fn log_posterior(
    u: &UnconstrainedParams,
    y: &ReturnSeries,
    prior: &PriorSpec,
    parameterization: Parameterization,
) -> Result<f64> {
    let target = SvPosterior::new(y, *prior, parameterization);
    let x = u.to_vec();
    target.check(&x)?;
    Ok(target.log_density(&x))
}

/// Gradient of [`log_posterior`] in the flat layout `[mu, phi_raw, log_sigma2, states..]`.
pub fn log_posterior_grad(
    u: &UnconstrainedParams,
    y: &ReturnSeries,
    prior: &PriorSpec,
    parameterization: Parameterization,
) -> Result<Vec<f64>> {
    let target = SvPosterior::new(y, *prior, parameterization);
    let x = u.to_vec();
    target.check(&x)?;
    let mut grad = vec![0.0; x.len()];
    target.log_density_and_grad(&x, &mut grad);
    Ok(grad)
}

/// `log |det d h / d h_std|` of the non-centered state map.
pub fn state_map_log_jacobian(params: &StaticParams, len: usize) -> f64 {
    0.5 * len as f64 * params.sigma2.ln() - 0.5 * (1.0 - params.phi * params.phi).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{SeedStreams, StreamRole};

    fn rng(i: u64) -> crate::rng::StreamRng {
        SeedStreams::new(11).stream(i, StreamRole::Auxiliary)
    }

    #[test]
    fn constructor_rejects_invalid() {
        assert!(StaticParams::new(0.0, 1.0, 0.1).is_err());
        assert!(StaticParams::new(0.0, -1.2, 0.1).is_err());
        assert!(StaticParams::new(0.0, 0.5, 0.0).is_err());
        assert!(StaticParams::new(f64::NAN, 0.5, 0.1).is_err());
        assert!(StaticParams::new(0.0, 0.5, 0.1).is_ok());
    }

    #[test]
    fn stretch_map_endpoints() {
        assert_eq!(stretch_beta(0.5), 0.0);
        assert_eq!(stretch_beta(0.0), -1.0);
        assert_eq!(stretch_beta(1.0), 1.0);
    }

    #[test]
    fn prior_means() {
        let prior = PriorSpec::default();
        let mut r = rng(0);
        let n = 100_000;
        let draws: Vec<_> = (0..n).map(|_| sample_prior(&prior, &mut r)).collect();
        let mean = |f: &dyn Fn(&StaticParams) -> f64| draws.iter().map(f).sum::<f64>() / n as f64;
        let sd = |f: &dyn Fn(&StaticParams) -> f64| {
            let m = mean(f);
            (draws.iter().map(|d| (f(d) - m).powi(2)).sum::<f64>() / n as f64).sqrt()
        };
        let phi_mean = 2.0 * 20.0 / 21.5 - 1.0;
        let mc = 4.0 * sd(&|d| d.phi) / (n as f64).sqrt();
        assert!((mean(&|d| d.phi) - phi_mean).abs() < mc);
        // IG(2.5) has finite variance, so the sample mean is well behaved.
        let mc = 4.0 * sd(&|d| d.sigma2) / (n as f64).sqrt();
        assert!((mean(&|d| d.sigma2) - 0.025 / 1.5).abs() < mc);
        let mc = 4.0 * 10f64.sqrt() / (n as f64).sqrt();
        assert!(mean(&|d| d.mu).abs() < mc);
    }

    #[test]
    fn degenerate_innovations_stay_at_mean() {
        let p = StaticParams::degenerate(-1.3, 0.7, 0.0);
        let (h, _) = simulate(&p, 50, &mut rng(1)).unwrap();
        assert!(h.values.iter().all(|&v| v == -1.3));
    }

    #[test]
    fn zero_persistence_variance() {
        let p = StaticParams::new(0.5, 0.0, 0.01).unwrap();
        let (h, _) = simulate(&p, 1_000_000, &mut rng(2)).unwrap();
        let n = h.len() as f64;
        let m = h.values.iter().sum::<f64>() / n;
        let v = h.values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        assert!((v - 0.01).abs() / 0.01 < 0.01, "var {v}");
    }

    #[test]
    fn stationary_variance_of_long_path() {
        let p = StaticParams::new(0.0, 0.9, 0.04).unwrap();
        let (h, _) = simulate(&p, 1_000_000, &mut rng(3)).unwrap();
        let n = h.len() as f64;
        let m = h.values.iter().sum::<f64>() / n;
        let v = h.values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        let target = 0.04 / (1.0 - 0.81);
        assert!((v - target).abs() / target < 0.05, "var {v} vs {target}");
    }

    #[test]
    fn unconstrained_round_trip() {
        let p = StaticParams::new(-0.7, 0.93, 0.02).unwrap();
        let (h, _) = simulate(&p, 30, &mut rng(4)).unwrap();
        for par in [Parameterization::Centered, Parameterization::NonCentered] {
            let u = to_unconstrained(&p, &h.values, par);
            let (p2, h2) = from_unconstrained(&u, par).unwrap();
            assert!((p2.mu - p.mu).abs() < 1e-12);
            assert!((p2.phi - p.phi).abs() < 1e-12);
            assert!((p2.sigma2 - p.sigma2).abs() < 1e-12);
            for (a, b) in h2.iter().zip(&h.values) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_observation_density() {
        let prior = PriorSpec::default();
        let y = ReturnSeries::new(vec![0.3]).unwrap();
        let eval = |mu: f64, phi: f64, s2: f64, h1: f64| {
            let p = StaticParams::new(mu, phi, s2).unwrap();
            let u = to_unconstrained(&p, &[h1], Parameterization::Centered);
            log_posterior(&u, &y, &prior, Parameterization::Centered).unwrap()
        };
        // Hand-assembled density: likelihood, stationary state, priors, Jacobians.
        let oracle = |mu: f64, phi: f64, s2: f64, h1: f64| {
            let ln_norm = |x: f64, m: f64, v: f64| -0.5 * (2.0 * std::f64::consts::PI * v).ln() - (x - m).powi(2) / (2.0 * v);
            let ig = -(2.5 + 1.0) * s2.ln() - 0.025 / s2;
            let beta = 19.0 * ((1.0 + phi) / 2.0).ln() + 0.5 * ((1.0 - phi) / 2.0).ln();
            ln_norm(0.3, 0.0, h1.exp())
                + ln_norm(h1, mu, s2 / (1.0 - phi * phi))
                + ln_norm(mu, 0.0, 10.0)
                + ig
                + beta
                + s2.ln()
                + ((1.0 - phi * phi) / 2.0).ln()
        };
        let a = (0.1, 0.8, 0.05, -0.4);
        let b = (-1.0, 0.95, 0.01, 0.2);
        let lhs = eval(a.0, a.1, a.2, a.3) - eval(b.0, b.1, b.2, b.3);
        let rhs = oracle(a.0, a.1, a.2, a.3) - oracle(b.0, b.1, b.2, b.3);
        assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
    }

    #[test]
    fn likelihood_term_matches_normal_density() {
        // Only h moves between the two points, so the prior terms cancel
        // except the state density, which we add back by hand.
        let prior = PriorSpec::default();
        let y = ReturnSeries::new(vec![1.7]).unwrap();
        let p = StaticParams::new(0.0, 0.5, 0.1).unwrap();
        let f = |h1: f64| {
            let u = to_unconstrained(&p, &[h1], Parameterization::Centered);
            log_posterior(&u, &y, &prior, Parameterization::Centered).unwrap()
                + h1 * h1 * (1.0 - 0.25) / (2.0 * 0.1)
        };
        let ln_norm = |x: f64, v: f64| -0.5 * v.ln() - x * x / (2.0 * v);
        let lhs = f(0.9) - f(-0.3);
        let rhs = ln_norm(1.7, 0.9f64.exp()) - ln_norm(1.7, (-0.3f64).exp());
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn parameterizations_agree_up_to_jacobian() {
        let prior = PriorSpec::default();
        let mut r = rng(5);
        for _ in 0..20 {
            let p = sample_prior(&prior, &mut r);
            let (h, y) = simulate(&p, 12, &mut r).unwrap();
            let uc = to_unconstrained(&p, &h.values, Parameterization::Centered);
            let un = to_unconstrained(&p, &h.values, Parameterization::NonCentered);
            let lc = log_posterior(&uc, &y, &prior, Parameterization::Centered).unwrap();
            let ln = log_posterior(&un, &y, &prior, Parameterization::NonCentered).unwrap();
            let jac = state_map_log_jacobian(&p, h.len());
            assert!((lc - (ln - jac)).abs() < 1e-8 * lc.abs().max(1.0), "{lc} vs {ln} - {jac}");
        }
    }

    #[test]
    fn mu_prior_score() {
        // With a single state at mu, the state terms contribute no mu-gradient.
        let prior = PriorSpec::default();
        let y = ReturnSeries::new(vec![0.1]).unwrap();
        let p = StaticParams::new(1.7, 0.3, 0.2).unwrap();
        let u = to_unconstrained(&p, &[1.7], Parameterization::Centered);
        let g = log_posterior_grad(&u, &y, &prior, Parameterization::Centered).unwrap();
        assert!((g[IDX_MU] - (-(1.7 - 0.0) / 10.0)).abs() < 1e-12);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let y = ReturnSeries::new(vec![0.1, 0.2]).unwrap();
        let u = UnconstrainedParams {
            mu: f64::NAN,
            phi_raw: 0.0,
            log_sigma2: 0.0,
            states: vec![0.0, 0.0],
        };
        assert!(log_posterior(&u, &y, &PriorSpec::default(), Parameterization::Centered).is_err());
    }

    #[test]
    fn h2_collapses_to_mu_without_innovations() {
        let mut r = rng(6);
        for par in [Parameterization::Centered, Parameterization::NonCentered] {
            assert_eq!(second_state(0.37, 0.9, 0.0, par, &mut r), 0.37);
        }
    }

    #[test]
    fn h2_mean_matches_prior_mean() {
        let prior = PriorSpec::default();
        let draws = prior_predictive_h2(&prior, Parameterization::NonCentered, 100_000, &mut rng(7));
        let n = draws.len() as f64;
        let m = draws.iter().sum::<f64>() / n;
        let sd = (draws.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt();
        assert!(m.abs() < 4.0 * sd / n.sqrt(), "mean {m}");
    }

    #[test]
    fn prior_spec_validation() {
        assert!(PriorSpec::default().validate().is_ok());
        let bad = PriorSpec {
            mu_var: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = PriorSpec {
            sigma_r: 4.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
