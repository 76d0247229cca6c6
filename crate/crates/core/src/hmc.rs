//! Static-path Hamiltonian Monte Carlo with a diagonal mass matrix.
//!
//! Warmup adapts the step size by dual averaging and estimates the mass
//! matrix from the sample variances of a middle warmup window. The number of
//! leapfrog steps is jittered per iteration.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::draws::{DrawObserver, PosteriorDraws, StateSelection, Stopwatch};
use crate::error::{Error, Result};
use crate::model::{from_unconstrained, Parameterization, PriorSpec, ReturnSeries, SvPosterior, UnconstrainedParams};

/// Energy error above which a trajectory is treated as divergent.
pub const MAX_ENERGY_ERROR: f64 = 1000.0;

/// A differentiable log density on an unconstrained space.
pub trait Target {
    fn dim(&self) -> usize;
    /// Log density, with its gradient written into `grad`.
    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

impl Target for SvPosterior {
    fn dim(&self) -> usize {
        SvPosterior::dim(self)
    }

    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        SvPosterior::log_density_and_grad(self, x, grad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmcConfig {
    /// Initial step size; the final one when `n_warmup == 0`.
    pub step_size: f64,
    pub n_leapfrog: usize,
    /// Diagonal of the mass matrix `M`; unit mass when absent.
    pub mass_diag: Option<Vec<f64>>,
    pub n_warmup: usize,
    /// Retained draws after thinning.
    pub n_draws: usize,
    pub thin: usize,
    pub target_accept: f64,
    pub jitter_fraction: f64,
    pub record_states: StateSelection,
}

impl Default for HmcConfig {
    fn default() -> Self {
        Self {
            step_size: 0.1,
            n_leapfrog: 64,
            mass_diag: None,
            n_warmup: 1000,
            n_draws: 999,
            thin: 1,
            target_accept: 0.8,
            jitter_fraction: 0.5,
            record_states: StateSelection::None,
        }
    }
}

impl HmcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Config(format!("step_size must be positive, got {}", self.step_size)));
        }
        if self.n_leapfrog == 0 {
            return Err(Error::Config("n_leapfrog must be at least 1".into()));
        }
        if self.n_draws == 0 {
            return Err(Error::Config("n_draws must be at least 1".into()));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config(format!("target_accept must lie in (0, 1), got {}", self.target_accept)));
        }
        if !(0.0..1.0).contains(&self.jitter_fraction) {
            return Err(Error::Config(format!("jitter_fraction must lie in [0, 1), got {}", self.jitter_fraction)));
        }
        if let Some(m) = &self.mass_diag {
            if m.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::Config("mass_diag entries must be positive".into()));
            }
        }
        Ok(())
    }

    /// Inclusive range of per-iteration leapfrog step counts.
    pub fn step_range(&self) -> (usize, usize) {
        let lo = ((1.0 - self.jitter_fraction) * self.n_leapfrog as f64).ceil() as usize;
        (lo.clamp(1, self.n_leapfrog), self.n_leapfrog)
    }
}

/// Position, momentum and the cached density and gradient at the position.
#[derive(Debug, Clone, PartialEq)]
pub struct HmcState {
    pub position: Vec<f64>,
    pub momentum: Vec<f64>,
    pub log_density: f64,
    pub grad: Vec<f64>,
}

impl HmcState {
    pub fn new<T: Target + ?Sized>(target: &T, position: Vec<f64>, momentum: Vec<f64>) -> Self {
        let mut grad = vec![0.0; position.len()];
        let log_density = target.log_density_and_grad(&position, &mut grad);
        Self {
            position,
            momentum,
            log_density,
            grad,
        }
    }

    /// `H = -log pi(theta) + alpha' M^{-1} alpha / 2`.
    pub fn hamiltonian(&self, mass_diag: &[f64]) -> f64 {
        -self.log_density + kinetic_energy(&self.momentum, mass_diag)
    }

    fn is_finite(&self) -> bool {
        self.log_density.is_finite() && self.grad.iter().all(|g| g.is_finite())
    }
}

pub fn kinetic_energy(momentum: &[f64], mass_diag: &[f64]) -> f64 {
    0.5 * momentum.iter().zip(mass_diag).map(|(p, m)| p * p / m).sum::<f64>()
}

/// `n_steps` leapfrog steps. Returns the end state and whether a non-finite
/// value was met, in which case integration stops early.
pub fn leapfrog<T: Target + ?Sized>(
    target: &T,
    state: &HmcState,
    step_size: f64,
    n_steps: usize,
    mass_diag: &[f64],
) -> (HmcState, bool) {
    let mut s = state.clone();
    for _ in 0..n_steps {
        for (p, g) in s.momentum.iter_mut().zip(&s.grad) {
            *p += 0.5 * step_size * g;
        }
        for ((x, p), m) in s.position.iter_mut().zip(&s.momentum).zip(mass_diag) {
            *x += step_size * p / m;
        }
        s.log_density = target.log_density_and_grad(&s.position, &mut s.grad);
        if !s.is_finite() {
            return (s, true);
        }
        for (p, g) in s.momentum.iter_mut().zip(&s.grad) {
            *p += 0.5 * step_size * g;
        }
    }
    let divergent = !s.momentum.iter().all(|p| p.is_finite());
    (s, divergent)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub accepted: bool,
    pub divergent: bool,
    /// `min(1, exp(H_0 - H_1))`, zero for divergent trajectories.
    pub accept_prob: f64,
}

/// One HMC transition from `current`, updated in place on acceptance.
pub fn hmc_step<T: Target + ?Sized, R: Rng + ?Sized>(
    target: &T,
    current: &mut HmcState,
    step_size: f64,
    n_steps: usize,
    mass_diag: &[f64],
    rng: &mut R,
) -> StepOutcome {
    for (p, m) in current.momentum.iter_mut().zip(mass_diag) {
        let z: f64 = StandardNormal.sample(rng);
        *p = z * m.sqrt();
    }
    let h0 = current.hamiltonian(mass_diag);
    let (proposal, nonfinite) = leapfrog(target, current, step_size, n_steps, mass_diag);
    let h1 = proposal.hamiltonian(mass_diag);
    let delta = h1 - h0;
    let divergent = nonfinite || !delta.is_finite() || delta > MAX_ENERGY_ERROR;
    if divergent {
        return StepOutcome {
            accepted: false,
            divergent: true,
            accept_prob: 0.0,
        };
    }
    let log_a = (-delta).min(0.0);
    let accept_prob = log_a.exp();
    let u: f64 = rng.random();
    let accepted = u.ln() < log_a;
    if accepted {
        *current = proposal;
    }
    StepOutcome {
        accepted,
        divergent: false,
        accept_prob,
    }
}

/// Nesterov dual averaging of `log(step_size)` toward a target acceptance rate.
#[derive(Debug, Clone, PartialEq)]
pub struct DualAveraging {
    mu: f64,
    target: f64,
    h_bar: f64,
    log_step: f64,
    log_step_bar: f64,
    count: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    pub fn new(step_size: f64, target: f64) -> Self {
        Self {
            mu: (10.0 * step_size).ln(),
            target,
            h_bar: 0.0,
            log_step: step_size.ln(),
            log_step_bar: 0.0,
            count: 0.0,
        }
    }

    /// Records one acceptance statistic and returns the next step size.
    pub fn update(&mut self, accept_prob: f64) -> f64 {
        self.count += 1.0;
        let eta = 1.0 / (self.count + Self::T0);
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target - accept_prob);
        self.log_step = self.mu - self.count.sqrt() / Self::GAMMA * self.h_bar;
        let w = self.count.powf(-Self::KAPPA);
        self.log_step_bar = w * self.log_step + (1.0 - w) * self.log_step_bar;
        self.log_step.exp()
    }

    /// The averaged step size used after warmup.
    pub fn final_step_size(&self) -> f64 {
        if self.count == 0.0 {
            self.log_step.exp()
        } else {
            self.log_step_bar.exp()
        }
    }
}

/// Doubles or halves the step size until a single leapfrog step crosses an
/// acceptance probability of one half.
pub fn find_reasonable_step_size<T: Target + ?Sized, R: Rng + ?Sized>(
    target: &T,
    state: &HmcState,
    step_size: f64,
    mass_diag: &[f64],
    rng: &mut R,
) -> f64 {
    let mut s = state.clone();
    for (p, m) in s.momentum.iter_mut().zip(mass_diag) {
        let z: f64 = StandardNormal.sample(rng);
        *p = z * m.sqrt();
    }
    let h0 = s.hamiltonian(mass_diag);
    let log_accept = |eps: f64| {
        let (next, bad) = leapfrog(target, &s, eps, 1, mass_diag);
        let d = h0 - next.hamiltonian(mass_diag);
        if bad || d.is_nan() {
            f64::NEG_INFINITY
        } else {
            d
        }
    };
    let mut eps = step_size;
    let direction = if log_accept(eps) > 0.5f64.ln() { 1.0 } else { -1.0 };
    for _ in 0..60 {
        if direction * log_accept(eps) <= -direction * std::f64::consts::LN_2 {
            break;
        }
        eps *= 2f64.powf(direction);
    }
    eps.clamp(1e-10, 1e3)
}

/// Running mean and variance.
#[derive(Debug, Clone, PartialEq)]
struct Welford {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(dim: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    /// Variances shrunk toward `1e-3`, used as the inverse mass.
    fn regularized_variance(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.m2
            .iter()
            .map(|s| {
                let var = s / (n - 1.0);
                (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
            })
            .collect()
    }
}

/// Summary of one sampling run.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainStats {
    pub step_size: f64,
    pub mass_diag: Vec<f64>,
    pub accept_rate: f64,
    pub divergence_count: usize,
    pub warmup_divergences: usize,
}

/// Runs warmup and sampling from `init`, passing each retained position to `on_draw`.
pub fn sample<T, R, F>(target: &T, config: &HmcConfig, init: Vec<f64>, rng: &mut R, mut on_draw: F) -> Result<ChainStats>
where
    T: Target + ?Sized,
    R: Rng + ?Sized,
    F: FnMut(&[f64]) -> Result<()>,
{
    config.validate()?;
    let dim = target.dim();
    if init.len() != dim {
        return Err(Error::Length {
            expected: dim,
            got: init.len(),
        });
    }
    let mut mass = match &config.mass_diag {
        Some(m) if m.len() != dim => {
            return Err(Error::Length {
                expected: dim,
                got: m.len(),
            })
        }
        Some(m) => m.clone(),
        None => vec![1.0; dim],
    };
    let mut state = HmcState::new(target, init, vec![0.0; dim]);
    if !state.is_finite() {
        return Err(Error::Sampler("log density is not finite at the initial point".into()));
    }
    let (lo, hi) = config.step_range();
    let draw_steps = |rng: &mut R| if lo == hi { hi } else { rng.random_range(lo..=hi) };

    let mut eps = config.step_size;
    let n_warmup = config.n_warmup;
    let mut warmup_divergences = 0usize;
    if n_warmup > 0 {
        let window_start = n_warmup / 2;
        let window_end = (n_warmup as f64 * 0.85) as usize;
        let adapt_mass = window_end > window_start + 10;
        eps = find_reasonable_step_size(target, &state, eps, &mass, rng);
        let mut da = DualAveraging::new(eps, config.target_accept);
        let mut welford = Welford::new(dim);
        for i in 0..n_warmup {
            if adapt_mass && i == window_end {
                mass = welford.regularized_variance().iter().map(|v| 1.0 / v).collect();
                eps = find_reasonable_step_size(target, &state, eps, &mass, rng);
                da = DualAveraging::new(eps, config.target_accept);
            }
            let n_steps = draw_steps(rng);
            let out = hmc_step(target, &mut state, eps, n_steps, &mass, rng);
            warmup_divergences += usize::from(out.divergent);
            eps = da.update(out.accept_prob);
            if adapt_mass && (window_start..window_end).contains(&i) {
                welford.push(&state.position);
            }
        }
        if warmup_divergences == n_warmup {
            return Err(Error::Sampler(format!(
                "all {n_warmup} warmup iterations diverged (final step size {eps:.3e}, log density {:.3e})",
                state.log_density
            )));
        }
        eps = da.final_step_size();
    }

    let total = config.n_draws * config.thin;
    let mut accepted = 0usize;
    let mut divergences = 0usize;
    for i in 0..total {
        let n_steps = draw_steps(rng);
        let out = hmc_step(target, &mut state, eps, n_steps, &mass, rng);
        accepted += usize::from(out.accepted);
        divergences += usize::from(out.divergent);
        if (i + 1) % config.thin == 0 {
            on_draw(&state.position)?;
        }
    }
    Ok(ChainStats {
        step_size: eps,
        mass_diag: mass,
        accept_rate: accepted as f64 / total as f64,
        divergence_count: divergences,
        warmup_divergences,
    })
}

/// Uniform(-2, 2) initial point with a finite density; retried a few times.
pub fn initial_point<T: Target + ?Sized, R: Rng + ?Sized>(target: &T, rng: &mut R) -> Result<Vec<f64>> {
    let dim = target.dim();
    let mut grad = vec![0.0; dim];
    for _ in 0..100 {
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        if target.log_density_and_grad(&x, &mut grad).is_finite() && grad.iter().all(|g| g.is_finite()) {
            return Ok(x);
        }
    }
    Err(Error::Sampler("no finite initial point found in 100 attempts".into()))
}

/// Fits the exact SV posterior by HMC. Each retained draw is passed to
/// `observer` with its full log-variance path.
pub fn run_chain<R: Rng + ?Sized, O: DrawObserver + ?Sized>(
    y: &ReturnSeries,
    prior: &PriorSpec,
    parameterization: Parameterization,
    config: &HmcConfig,
    rng: &mut R,
    observer: &mut O,
) -> Result<PosteriorDraws> {
    prior.validate()?;
    let watch = Stopwatch::start();
    let target = SvPosterior::new(y, *prior, parameterization);
    let tracked = config.record_states.resolve(y.len());
    let mut out = PosteriorDraws::new(&tracked);
    out.draws.reserve(config.n_draws);
    let init = initial_point(&target, rng)?;
    let stats = sample(&target, config, init, rng, |x| {
        let u = UnconstrainedParams::from_slice(x)?;
        let (params, h) = from_unconstrained(&u, parameterization)?;
        out.push(&params, &h, &tracked);
        observer.observe(&params, &h);
        Ok(())
    })?;
    out.accept_rate = stats.accept_rate;
    out.divergence_count = stats.divergence_count;
    out.wall_time = watch.elapsed();
    Ok(out)
}
