mod common;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use svcal::hmc::{leapfrog, run_chain, sample, HmcConfig, HmcState, Target};
use svcal::ksc::{run_ksc_chain, transform_returns, KscConfig, MixtureTable, MuUpdate, DEFAULT_OFFSET};
use svcal::model::{phi_from_raw, simulate, to_unconstrained, SvPosterior};
use svcal::{Parameterization, PosteriorDraws, PriorSpec, SeedStreams, StaticParams, StreamRole};

use common::*;

/// Zero-mean Gaussian with the given precision matrix.
struct Gaussian {
    precision: DMatrix<f64>,
}

impl Target for Gaussian {
    fn dim(&self) -> usize {
        self.precision.nrows()
    }

    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let v = nalgebra::DVector::from_column_slice(x);
        let g = -(&self.precision * &v);
        grad.copy_from_slice(g.as_slice());
        0.5 * v.dot(&g)
    }
}

fn draws_of(target: &Gaussian, config: &HmcConfig, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = SeedStreams::new(seed).stream(0, StreamRole::Sampler);
    let mut out = Vec::new();
    sample(target, config, vec![0.5; target.dim()], &mut rng, |x| {
        out.push(x.to_vec());
        Ok(())
    })
    .unwrap();
    out
}

fn gaussian_config() -> HmcConfig {
    HmcConfig {
        n_warmup: 1000,
        n_draws: 20_000,
        n_leapfrog: 8,
        ..HmcConfig::default()
    }
}

#[test]
fn hmc_recovers_standard_normal() {
    let target = Gaussian {
        precision: DMatrix::identity(1, 1),
    };
    let draws: Vec<f64> = draws_of(&target, &gaussian_config(), 1).into_iter().map(|d| d[0]).collect();
    let sq: Vec<f64> = draws.iter().map(|x| x * x).collect();
    let zm = mean(&draws).abs() / batch_mcse(&draws, 50);
    let zv = (mean(&sq) - 1.0).abs() / batch_mcse(&sq, 50);
    assert!(zm < 3.0 && zv < 3.0, "mean z {zm}, second moment z {zv}");
}

#[test]
fn hmc_recovers_correlated_covariance() {
    let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.8, 0.8, 1.0]);
    let target = Gaussian {
        precision: cov.clone().try_inverse().unwrap(),
    };
    let draws = draws_of(&target, &gaussian_config(), 2);
    for (i, j) in [(0, 0), (0, 1), (1, 1)] {
        let prod: Vec<f64> = draws.iter().map(|d| d[i] * d[j]).collect();
        let z = (mean(&prod) - cov[(i, j)]).abs() / batch_mcse(&prod, 50);
        assert!(z < 3.0, "covariance ({i},{j}): {} vs {}, z = {z}", mean(&prod), cov[(i, j)]);
    }
}

#[test]
fn leapfrog_preserves_volume() {
    let p = StaticParams::new(-0.5, 0.9, 0.05).unwrap();
    let mut rng = SeedStreams::new(3).stream(0, StreamRole::Simulate);
    let (h, y) = simulate(&p, 2, &mut rng).unwrap();
    let target = SvPosterior::new(&y, PriorSpec::default(), Parameterization::Centered);
    let x0 = to_unconstrained(&p, &h.values, Parameterization::Centered).to_vec();
    let d = x0.len();
    let z0: Vec<f64> = x0.iter().copied().chain((0..d).map(|i| 0.3 - 0.1 * i as f64)).collect();
    let mass = vec![1.0; d];
    let map = |z: &[f64]| -> Vec<f64> {
        let s = HmcState::new(&target, z[..d].to_vec(), z[d..].to_vec());
        let (e, _) = leapfrog(&target, &s, 0.02, 10, &mass);
        e.position.into_iter().chain(e.momentum).collect()
    };
    let step = 1e-6;
    let jac = DMatrix::from_fn(2 * d, 2 * d, |i, j| {
        let (mut a, mut b) = (z0.clone(), z0.clone());
        a[j] += step;
        b[j] -= step;
        (map(&a)[i] - map(&b)[i]) / (2.0 * step)
    });
    let det = jac.determinant();
    assert!((det - 1.0).abs() < 1e-6, "det = {det}");
}

#[test]
fn run_chain_is_reproducible() {
    let p = StaticParams::new(-1.0, 0.95, 0.03).unwrap();
    let (_, y) = simulate(&p, 40, &mut SeedStreams::new(4).stream(0, StreamRole::Simulate)).unwrap();
    let config = HmcConfig {
        n_warmup: 100,
        n_draws: 50,
        n_leapfrog: 16,
        ..HmcConfig::default()
    };
    let run = || {
        let mut rng = SeedStreams::new(4).stream(0, StreamRole::Sampler);
        run_chain(&y, &PriorSpec::default(), Parameterization::NonCentered, &config, &mut rng, &mut ()).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.draws, b.draws);
    assert_eq!(a.divergence_count, b.divergence_count);
}

struct Moments {
    mean: [f64; 3],
    mcse: [f64; 3],
}

fn moments(columns: [Vec<f64>; 3]) -> Moments {
    Moments {
        mean: [mean(&columns[0]), mean(&columns[1]), mean(&columns[2])],
        mcse: [batch_mcse(&columns[0], 50), batch_mcse(&columns[1], 50), batch_mcse(&columns[2], 50)],
    }
}

fn gibbs_moments(y: &svcal::ReturnSeries, par: Parameterization, seed: u64) -> Moments {
    let config = KscConfig {
        n_burnin: 2000,
        n_draws: 100_000,
        mu_update: MuUpdate::Conjugate,
        ..KscConfig::default()
    };
    let mut rng = SeedStreams::new(seed).stream(0, StreamRole::Sampler);
    let d: PosteriorDraws =
        run_ksc_chain(y, &PriorSpec::default(), par, &config, &MixtureTable::ksc(), &mut rng, &mut ()).unwrap();
    moments([d.column("mu").unwrap(), d.column("phi").unwrap(), d.column("sigma2").unwrap()])
}

fn agree(a: &Moments, b: &Moments, what: &str) {
    for (i, name) in ["mu", "phi", "sigma2"].iter().enumerate() {
        let se = (a.mcse[i].powi(2) + b.mcse[i].powi(2)).sqrt();
        let z = (a.mean[i] - b.mean[i]).abs() / se;
        assert!(z < 3.0, "{what}: {name} means {} vs {} (z = {z:.2})", a.mean[i], b.mean[i]);
    }
}

fn series() -> svcal::ReturnSeries {
    let p = StaticParams::new(-1.0, 0.9, 0.1).unwrap();
    simulate(&p, 50, &mut SeedStreams::new(5).stream(0, StreamRole::Simulate)).unwrap().1
}

#[test]
fn gibbs_matches_hmc_on_the_mixture_posterior() {
    let y = series();
    let ystar = transform_returns(&y, DEFAULT_OFFSET).unwrap().ystar;
    let target = SvPosterior::offset_mixture(ystar, MixtureTable::ksc(), PriorSpec::default(), Parameterization::NonCentered);
    let config = HmcConfig {
        n_warmup: 2000,
        n_draws: 20_000,
        ..HmcConfig::default()
    };
    let mut rng = SeedStreams::new(6).stream(0, StreamRole::Sampler);
    let init: Vec<f64> = (0..target.dim()).map(|i| if i == 0 { -1.0 } else { { let z: f64 = StandardNormal.sample(&mut rng); 0.1 * z } }).collect();
    let mut cols = [Vec::new(), Vec::new(), Vec::new()];
    sample(&target, &config, init, &mut rng, |x| {
        cols[0].push(x[0]);
        cols[1].push(phi_from_raw(x[1]));
        cols[2].push(x[2].exp());
        Ok(())
    })
    .unwrap();
    let hmc = moments(cols);
    let gibbs = gibbs_moments(&y, Parameterization::Centered, 7);
    agree(&gibbs, &hmc, "centered Gibbs vs HMC");
}

#[test]
fn gibbs_parameterizations_agree() {
    let y = series();
    let c = gibbs_moments(&y, Parameterization::Centered, 8);
    let nc = gibbs_moments(&y, Parameterization::NonCentered, 9);
    agree(&c, &nc, "centered vs non-centered Gibbs");
}
