//! Browser demo: simulate a volatility path, compare the two prior predictive
//! constructions of `h_2`, and run a small SBC experiment.
//!
//! Each export returns a JSON string; the page in `www/` draws it on a canvas.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use svcal::diagnostics::{ks_two_sample, RankHistogram};
use svcal::hmc::HmcConfig;
use svcal::ksc::KscConfig;
use svcal::model::{prior_predictive_h2, simulate};
use svcal::sbc::{collect_sbc, SamplerKind, SbcConfig, SvExperiment};
use svcal::{Parameterization, PriorSpec, SeedStreams, StaticParams, StreamRole};

#[derive(Debug, Serialize)]
pub struct SimulatedPath {
    pub h: Vec<f64>,
    pub y: Vec<f64>,
}

pub fn simulate_path(mu: f64, phi: f64, sigma2: f64, len: usize, seed: u64) -> svcal::Result<SimulatedPath> {
    let params = StaticParams::new(mu, phi, sigma2)?;
    let mut rng = SeedStreams::new(seed).stream(0, StreamRole::Simulate);
    let (h, y) = simulate(&params, len, &mut rng)?;
    Ok(SimulatedPath {
        h: h.values,
        y: y.values().to_vec(),
    })
}

#[derive(Debug, Serialize)]
pub struct PriorPredictive {
    pub centered: Vec<f64>,
    pub noncentered: Vec<f64>,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
}

pub fn prior_predictive(n: usize, seed: u64) -> svcal::Result<PriorPredictive> {
    let prior = PriorSpec::default();
    let streams = SeedStreams::new(seed);
    let centered = prior_predictive_h2(&prior, Parameterization::Centered, n, &mut streams.stream(0, StreamRole::Prior));
    let noncentered =
        prior_predictive_h2(&prior, Parameterization::NonCentered, n, &mut streams.stream(1, StreamRole::Prior));
    let ks = ks_two_sample(&centered, &noncentered)?;
    Ok(PriorPredictive {
        centered,
        noncentered,
        ks_statistic: ks.statistic,
        ks_p_value: ks.p_value,
    })
}

#[derive(Debug, Serialize)]
pub struct ParamHistogram {
    pub name: String,
    pub counts: Vec<u64>,
    pub chi_squared: f64,
}

#[derive(Debug, Serialize)]
pub struct SbcDemo {
    pub support: usize,
    pub iterations: usize,
    pub failed: usize,
    pub params: Vec<ParamHistogram>,
}

/// A small SBC run on a short series; `sampler` is `hmc` or `ksc`.
pub fn sbc_demo(
    sampler: &str,
    parameterization: &str,
    iterations: usize,
    series_len: usize,
    draws: usize,
    bins: usize,
    seed: u64,
) -> svcal::Result<SbcDemo> {
    let sampler: SamplerKind = sampler.parse()?;
    let config = SbcConfig {
        sampler,
        parameterization: parameterization.parse()?,
        iterations,
        series_len,
        all_states: false,
        base_seed: seed,
        hmc: HmcConfig {
            n_warmup: draws,
            n_draws: draws,
            n_leapfrog: 32,
            ..HmcConfig::default()
        },
        ksc: KscConfig {
            n_burnin: draws,
            n_draws: draws,
            ..KscConfig::default()
        },
        ..SbcConfig::default()
    };
    let support = config.support();
    let records = collect_sbc(&SvExperiment::new(config)?, iterations, 1)?;
    let ok: Vec<_> = records.iter().filter(|r| !r.failed).collect();
    let mut params = Vec::new();
    for (i, name) in ["mu", "phi", "sigma2"].iter().enumerate() {
        let ranks: Vec<f64> = ok.iter().filter_map(|r| r.params[i].rank).map(|r| r as f64).collect();
        let h = RankHistogram::new(&ranks, bins, support)?;
        params.push(ParamHistogram {
            name: name.to_string(),
            chi_squared: h.chi_squared(),
            counts: h.counts,
        });
    }
    Ok(SbcDemo {
        support,
        iterations,
        failed: records.len() - ok.len(),
        params,
    })
}

fn to_js<T: Serialize>(v: svcal::Result<T>) -> Result<String, JsError> {
    let v = v.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = simulatePath)]
pub fn simulate_path_js(mu: f64, phi: f64, sigma2: f64, len: usize, seed: u32) -> Result<String, JsError> {
    to_js(simulate_path(mu, phi, sigma2, len, seed.into()))
}

#[wasm_bindgen(js_name = priorPredictive)]
pub fn prior_predictive_js(n: usize, seed: u32) -> Result<String, JsError> {
    to_js(prior_predictive(n, seed.into()))
}

#[wasm_bindgen(js_name = sbcDemo)]
pub fn sbc_demo_js(
    sampler: &str,
    parameterization: &str,
    iterations: usize,
    series_len: usize,
    draws: usize,
    bins: usize,
    seed: u32,
) -> Result<String, JsError> {
    to_js(sbc_demo(sampler, parameterization, iterations, series_len, draws, bins, seed.into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_has_requested_length() {
        let p = simulate_path(-1.0, 0.9, 0.05, 40, 3).unwrap();
        assert_eq!((p.h.len(), p.y.len()), (40, 40));
        assert!(simulate_path(0.0, 1.2, 0.05, 40, 3).is_err());
    }

    #[test]
    fn prior_predictive_constructions_agree() {
        let p = prior_predictive(2000, 5).unwrap();
        assert_eq!(p.centered.len(), 2000);
        assert!(p.ks_p_value > 0.001);
    }

    #[test]
    fn small_sbc_counts_every_iteration() {
        let d = sbc_demo("ksc", "centered", 4, 30, 50, 5, 2).unwrap();
        assert_eq!(d.params.len(), 3);
        for p in &d.params {
            assert_eq!(p.counts.iter().sum::<u64>() as usize, 4 - d.failed);
        }
        assert!(sbc_demo("nuts", "centered", 1, 10, 10, 5, 1).is_err());
    }
}
