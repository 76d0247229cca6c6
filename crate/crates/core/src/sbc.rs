//! Simulation-based calibration: draw parameters from the prior, simulate a
//! series, fit it, and rank the truth among the posterior draws.
//!
//! A calibrated sampler gives ranks that are uniform on `0..=B_eff`.

use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::diagnostics::ess;
use crate::draws::{PosteriorDraws, StateSelection};
use crate::error::{Error, Result};
use crate::hmc::{run_chain, HmcConfig};
use crate::ksc::{approximation_log_weight, run_ksc_chain, transform_returns, KscConfig, MixtureTable};
use crate::model::{sample_prior, simulate, Parameterization, PriorSpec, StaticParams};
use crate::rng::{SeedStreams, StreamRole};

/// Number of draws strictly below `truth`.
pub fn compute_rank(draws: &[f64], truth: f64) -> usize {
    draws.iter().filter(|&&d| d < truth).count()
}

/// Unnormalized and normalized importance weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LogWeights {
    pub v: Vec<f64>,
    pub w: Vec<f64>,
}

impl LogWeights {
    pub fn from_log(v: Vec<f64>) -> Result<Self> {
        if let Some(b) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("log weight of draw {} is {}", b + 1, v[b])));
        }
        if v.is_empty() {
            return Err(Error::Data("no draws to weight".into()));
        }
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut w: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
        Ok(Self { v, w })
    }
}

/// Log weights of the exact log-chi-square measurement density against the
/// mixture approximation, one per state path.
pub fn compute_log_weights(paths: &[Vec<f64>], ystar: &[f64], table: &MixtureTable) -> Result<LogWeights> {
    LogWeights::from_log(paths.iter().map(|h| approximation_log_weight(ystar, h, table)).collect())
}

/// `B * sum_b w_b 1[draw_b < truth]`.
pub fn compute_weighted_rank(draws: &[f64], weights: &LogWeights, truth: f64) -> Result<f64> {
    if draws.len() != weights.w.len() {
        return Err(Error::Length {
            expected: draws.len(),
            got: weights.w.len(),
        });
    }
    let mass: f64 = draws.iter().zip(&weights.w).filter(|(d, _)| **d < truth).map(|(_, w)| w).sum();
    let b = draws.len() as f64;
    Ok((b * mass).min(b))
}

/// Streams ranks and importance-weighted ranks of a fixed vector of true
/// values against a sequence of draws, without storing the draws.
///
/// Weighted sums are kept relative to the running maximum log weight.
#[derive(Debug, Clone)]
pub struct RankAccumulator {
    truth: Vec<f64>,
    below: Vec<u32>,
    weighted_below: Vec<f64>,
    weight_total: f64,
    max_log_weight: f64,
    count: usize,
}

impl RankAccumulator {
    pub fn new(truth: Vec<f64>) -> Self {
        let n = truth.len();
        Self {
            truth,
            below: vec![0; n],
            weighted_below: vec![0.0; n],
            weight_total: 0.0,
            max_log_weight: f64::NEG_INFINITY,
            count: 0,
        }
    }

    pub fn push(&mut self, draw: impl IntoIterator<Item = f64>, log_weight: Option<f64>) {
        self.count += 1;
        let w = match log_weight {
            Some(v) if v > self.max_log_weight => {
                let scale = (self.max_log_weight - v).exp();
                self.weighted_below.iter_mut().for_each(|s| *s *= scale);
                self.weight_total *= scale;
                self.max_log_weight = v;
                1.0
            }
            Some(v) => (v - self.max_log_weight).exp(),
            None => 0.0,
        };
        self.weight_total += w;
        for (((x, t), b), wb) in draw.into_iter().zip(&self.truth).zip(&mut self.below).zip(&mut self.weighted_below) {
            if x < *t {
                *b += 1;
                *wb += w;
            }
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn ranks(&self) -> &[u32] {
        &self.below
    }

    /// Weighted ranks, or `None` if no weights were pushed.
    pub fn weighted_ranks(&self) -> Option<Vec<f64>> {
        if self.weight_total <= 0.0 || !self.weight_total.is_finite() {
            return None;
        }
        let b = self.count as f64;
        Some(self.weighted_below.iter().map(|s| (b * s / self.weight_total).min(b)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Hmc,
    Ksc,
}

impl SamplerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SamplerKind::Hmc => "hmc",
            SamplerKind::Ksc => "ksc",
        }
    }
}

impl std::str::FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hmc" => Ok(SamplerKind::Hmc),
            "ksc" => Ok(SamplerKind::Ksc),
            _ => Err(Error::Config(format!("unknown sampler {s:?} (expected hmc or ksc)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SbcConfig {
    pub sampler: SamplerKind,
    pub parameterization: Parameterization,
    /// Number of SBC iterations `K`.
    pub iterations: usize,
    /// Simulated series length `T`.
    pub series_len: usize,
    /// Keep every `rank_thin`-th retained draw for ranking.
    pub rank_thin: usize,
    /// 1-based states ranked and reported individually, with ESS.
    pub tracked_states: Vec<usize>,
    /// Also rank every latent state (chi-square per state).
    pub all_states: bool,
    pub base_seed: u64,
    pub prior: PriorSpec,
    pub hmc: HmcConfig,
    pub ksc: KscConfig,
}

impl Default for SbcConfig {
    fn default() -> Self {
        Self {
            sampler: SamplerKind::Hmc,
            parameterization: Parameterization::NonCentered,
            iterations: 5000,
            series_len: 1000,
            rank_thin: 1,
            tracked_states: Vec::new(),
            all_states: true,
            base_seed: 1,
            prior: PriorSpec::default(),
            hmc: HmcConfig::default(),
            ksc: KscConfig::default(),
        }
    }
}

impl SbcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.series_len == 0 {
            return Err(Error::Config("series_len must be at least 1".into()));
        }
        if self.rank_thin == 0 {
            return Err(Error::Config("rank_thin must be at least 1".into()));
        }
        if let Some(&bad) = self.tracked_states.iter().find(|&&i| i == 0 || i > self.series_len) {
            return Err(Error::Config(format!("tracked state {bad} outside 1..={}", self.series_len)));
        }
        self.prior.validate()?;
        match self.sampler {
            SamplerKind::Hmc => self.hmc.validate()?,
            SamplerKind::Ksc => self.ksc.validate()?,
        }
        if self.support() == 0 {
            return Err(Error::Config("rank_thin exceeds the number of retained draws".into()));
        }
        Ok(())
    }

    /// Retained draws `B` of the configured sampler.
    pub fn draws(&self) -> usize {
        match self.sampler {
            SamplerKind::Hmc => self.hmc.n_draws,
            SamplerKind::Ksc => self.ksc.n_draws,
        }
    }

    /// Rank support `B_eff = floor(B / rank_thin)`.
    pub fn support(&self) -> usize {
        self.draws() / self.rank_thin
    }

    /// `mu, phi, sigma2` followed by the tracked states.
    pub fn tracked_names(&self) -> Vec<String> {
        let mut names = vec!["mu".to_string(), "phi".to_string(), "sigma2".to_string()];
        names.extend(self.tracked_states.iter().map(|&i| crate::draws::state_name(i)));
        names
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRank {
    pub name: String,
    pub truth: f64,
    /// `None` for failed iterations.
    pub rank: Option<usize>,
    pub weighted_rank: Option<f64>,
    pub ess: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRanks {
    pub ranks: Vec<u32>,
    pub weighted: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbcRecord {
    pub iteration: u64,
    pub seed: u64,
    pub support: usize,
    pub failed: bool,
    pub error: Option<String>,
    pub params: Vec<ParamRank>,
    pub state_ranks: Option<StateRanks>,
    pub accept_rate: f64,
    pub divergences: usize,
}

/// One SBC experiment: iteration `k` must be a pure function of `k`.
pub trait Experiment: Sync {
    fn support(&self) -> usize;
    fn param_names(&self) -> Vec<String>;
    fn run_iteration(&self, k: u64) -> SbcRecord;
}

/// The SV model fitted by one of the two samplers.
#[derive(Debug, Clone)]
pub struct SvExperiment {
    config: SbcConfig,
    table: MixtureTable,
}

impl SvExperiment {
    pub fn new(config: SbcConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            table: MixtureTable::ksc(),
        })
    }

    pub fn config(&self) -> &SbcConfig {
        &self.config
    }

    fn fit(&self, k: u64, streams: &SeedStreams, truth: &StaticParams, keep_all_states: bool) -> Result<(Vec<f64>, RecordParts)> {
        let cfg = &self.config;
        let (path, y) = simulate(truth, cfg.series_len, &mut streams.stream(k, StreamRole::Simulate))?;
        let mut truth_vec = vec![truth.mu(), truth.phi(), truth.sigma2()];
        truth_vec.extend_from_slice(&path.values);
        let weighted = cfg.sampler == SamplerKind::Ksc;
        let ystar = if weighted {
            transform_returns(&y, cfg.ksc.offset)?.ystar
        } else {
            Vec::new()
        };
        let mut acc = RankAccumulator::new(truth_vec.clone());
        let thin = cfg.rank_thin;
        let limit = cfg.support() * thin;
        let mut seen = 0usize;
        let table = &self.table;
        let mut observer = |p: &StaticParams, h: &[f64]| {
            seen += 1;
            if !seen.is_multiple_of(thin) || seen > limit {
                return;
            }
            let lw = weighted.then(|| approximation_log_weight(&ystar, h, table));
            let head = [p.mu(), p.phi(), p.sigma2()];
            acc.push(head.into_iter().chain(h.iter().copied()), lw);
        };
        let selection = if keep_all_states {
            StateSelection::All
        } else {
            StateSelection::Indices(cfg.tracked_states.clone())
        };
        let mut rng = streams.stream(k, StreamRole::Sampler);
        let draws = match cfg.sampler {
            SamplerKind::Hmc => {
                let hc = HmcConfig {
                    record_states: selection,
                    ..cfg.hmc.clone()
                };
                run_chain(&y, &cfg.prior, cfg.parameterization, &hc, &mut rng, &mut observer)?
            }
            SamplerKind::Ksc => {
                let kc = KscConfig {
                    record_states: selection,
                    ..cfg.ksc.clone()
                };
                run_ksc_chain(&y, &cfg.prior, cfg.parameterization, &kc, table, &mut rng, &mut observer)?
            }
        };
        Ok((truth_vec, RecordParts { acc, draws }))
    }
}

struct RecordParts {
    acc: RankAccumulator,
    draws: PosteriorDraws,
}

impl Experiment for SvExperiment {
    fn support(&self) -> usize {
        self.config.support()
    }

    fn param_names(&self) -> Vec<String> {
        self.config.tracked_names()
    }

    fn run_iteration(&self, k: u64) -> SbcRecord {
        self.run_iteration_with_draws(k, false).0
    }
}

impl SvExperiment {
    /// The record of iteration `k` and, unless the fit failed, the retained
    /// draws. `keep_all_states` stores every state path in the draws.
    pub fn run_iteration_with_draws(&self, k: u64, keep_all_states: bool) -> (SbcRecord, Option<PosteriorDraws>) {
        let cfg = &self.config;
        let streams = SeedStreams::new(cfg.base_seed);
        let truth = sample_prior(&cfg.prior, &mut streams.stream(k, StreamRole::Prior));
        let names = self.param_names();
        let mut record = SbcRecord {
            iteration: k,
            seed: cfg.base_seed,
            support: self.support(),
            failed: false,
            error: None,
            params: Vec::new(),
            state_ranks: None,
            accept_rate: 0.0,
            divergences: 0,
        };
        let fitted = self.fit(k, &streams, &truth, keep_all_states);
        let (truth_vec, parts) = match fitted {
            Ok(v) => v,
            Err(e) => {
                let statics = [truth.mu(), truth.phi(), truth.sigma2()];
                record.failed = true;
                record.error = Some(e.to_string());
                record.params = names
                    .into_iter()
                    .enumerate()
                    .map(|(i, name)| ParamRank {
                        name,
                        truth: statics.get(i).copied().unwrap_or(f64::NAN),
                        rank: None,
                        weighted_rank: None,
                        ess: None,
                    })
                    .collect();
                return (record, None);
            }
        };
        let RecordParts { acc, draws } = parts;
        let ranks = acc.ranks();
        let weighted = acc.weighted_ranks();
        let thin = cfg.rank_thin;
        let support = self.support();
        record.params = names
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let slot = if i < 3 { i } else { 2 + cfg.tracked_states[i - 3] };
                let col = draws.column_index(name).expect("tracked column");
                let chain: Vec<f64> = draws.draws.iter().skip(thin - 1).step_by(thin).take(support).map(|row| row[col]).collect();
                ParamRank {
                    name: name.clone(),
                    truth: truth_vec[slot],
                    rank: Some(ranks[slot] as usize),
                    weighted_rank: weighted.as_ref().map(|w| w[slot]),
                    ess: ess(&[chain]).ok().map(|e| e.n_eff),
                }
            })
            .collect();
        if cfg.all_states {
            record.state_ranks = Some(StateRanks {
                ranks: ranks[3..].to_vec(),
                weighted: weighted.map(|w| w[3..].to_vec()),
            });
        }
        record.accept_rate = draws.accept_rate;
        record.divergences = draws.divergence_count;
        (record, Some(draws))
    }
}

/// Normal mean with known noise variance and a conjugate normal prior, fitted
/// by exact i.i.d. posterior draws. A sampler that cannot be miscalibrated.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMeanExperiment {
    pub prior_mean: f64,
    pub prior_var: f64,
    pub noise_var: f64,
    pub n_obs: usize,
    pub draws: usize,
    pub base_seed: u64,
}

impl NormalMeanExperiment {
    /// The true mean and `draws` exact posterior draws for iteration `k`.
    pub fn simulate_and_fit(&self, k: u64) -> (f64, Vec<f64>) {
        let streams = SeedStreams::new(self.base_seed);
        let mut prior_rng = streams.stream(k, StreamRole::Prior);
        let theta = Normal::new(self.prior_mean, self.prior_var.sqrt()).unwrap().sample(&mut prior_rng);
        let noise = Normal::new(0.0, self.noise_var.sqrt()).unwrap();
        let mut sim = streams.stream(k, StreamRole::Simulate);
        let sum: f64 = (0..self.n_obs).map(|_| theta + noise.sample(&mut sim)).sum();
        let precision = 1.0 / self.prior_var + self.n_obs as f64 / self.noise_var;
        let mean = (self.prior_mean / self.prior_var + sum / self.noise_var) / precision;
        let post = Normal::new(mean, precision.recip().sqrt()).unwrap();
        let mut rng = streams.stream(k, StreamRole::Sampler);
        (theta, (0..self.draws).map(|_| post.sample(&mut rng)).collect())
    }

    /// A fresh prior draw, independent of every iteration's streams.
    pub fn prior_draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        Normal::new(self.prior_mean, self.prior_var.sqrt()).unwrap().sample(rng)
    }
}

impl Experiment for NormalMeanExperiment {
    fn support(&self) -> usize {
        self.draws
    }

    fn param_names(&self) -> Vec<String> {
        vec!["theta".to_string()]
    }

    fn run_iteration(&self, k: u64) -> SbcRecord {
        let (theta, draws) = self.simulate_and_fit(k);
        SbcRecord {
            iteration: k,
            seed: self.base_seed,
            support: self.draws,
            failed: false,
            error: None,
            params: vec![ParamRank {
                name: "theta".into(),
                truth: theta,
                rank: Some(compute_rank(&draws, theta)),
                weighted_rank: None,
                ess: ess(&[draws]).ok().map(|e| e.n_eff),
            }],
            state_ranks: None,
            accept_rate: 1.0,
            divergences: 0,
        }
    }
}

/// Runs iterations `range` on up to `parallelism` threads and hands the
/// records to `sink` in iteration order.
pub fn run_sbc<E, F>(experiment: &E, range: Range<u64>, parallelism: usize, mut sink: F) -> Result<()>
where
    E: Experiment + ?Sized,
    F: FnMut(SbcRecord) -> Result<()>,
{
    let parallelism = parallelism.max(1);
    let chunk = (parallelism * 4) as u64;
    #[cfg(feature = "parallel")]
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::Sampler(format!("thread pool: {e}")))?;
    #[cfg(feature = "parallel")]
    let run = |r: Range<u64>| -> Vec<SbcRecord> {
        use rayon::prelude::*;
        if parallelism == 1 {
            r.map(|k| experiment.run_iteration(k)).collect()
        } else {
            pool.install(|| r.into_par_iter().map(|k| experiment.run_iteration(k)).collect())
        }
    };
    #[cfg(not(feature = "parallel"))]
    let run = |r: Range<u64>| -> Vec<SbcRecord> { r.map(|k| experiment.run_iteration(k)).collect() };
    let mut start = range.start;
    while start < range.end {
        let end = (start + chunk).min(range.end);
        for record in run(start..end) {
            sink(record)?;
        }
        start = end;
    }
    Ok(())
}

/// All records of iterations `0..iterations`.
pub fn collect_sbc<E: Experiment + ?Sized>(experiment: &E, iterations: usize, parallelism: usize) -> Result<Vec<SbcRecord>> {
    let mut out = Vec::with_capacity(iterations);
    run_sbc(experiment, 0..iterations as u64, parallelism, |r| {
        out.push(r);
        Ok(())
    })?;
    Ok(out)
}
