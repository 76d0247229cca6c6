use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use svcal::diagnostics::{
    autocorrelation, chi_squared, chi_squared_p_value, classify_shape, ess, kolmogorov_sf, ks_two_sample,
    rank_ecdf_distance, RankHistogram, RankShape, Summary6,
};
use svcal::{SeedStreams, StreamRole};

fn ar1(phi: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = SeedStreams::new(seed).stream(0, StreamRole::Auxiliary);
    let sd = (1.0 - phi * phi).sqrt();
    let mut x: f64 = StandardNormal.sample(&mut rng);
    (0..n)
        .map(|_| {
            let e: f64 = StandardNormal.sample(&mut rng);
            x = phi * x + sd * e;
            x
        })
        .collect()
}

#[test]
fn ess_of_ar1_matches_closed_form() {
    let n = 100_000;
    for (phi, seed) in [(0.0, 1), (0.5, 2), (0.9, 3)] {
        let expected = n as f64 * (1.0 - phi) / (1.0 + phi);
        let got = ess(&[ar1(phi, n, seed)]).unwrap().n_eff;
        assert!((got / expected - 1.0).abs() < 0.1, "phi {phi}: ess {got} vs {expected}");
    }
}

#[test]
fn multi_chain_ess_adds_up() {
    let chains: Vec<Vec<f64>> = (0..4).map(|c| ar1(0.5, 25_000, 10 + c)).collect();
    let got = ess(&chains).unwrap();
    let expected = 100_000.0 / 3.0;
    assert_eq!(got.m, 4);
    assert!((got.n_eff / expected - 1.0).abs() < 0.1, "{} vs {expected}", got.n_eff);
}

#[test]
fn ess_flags_chains_that_disagree() {
    let mut a = ar1(0.5, 5000, 20);
    let b = ar1(0.5, 5000, 21);
    a.iter_mut().for_each(|x| *x += 5.0);
    let split = ess(&[a, b]).unwrap().n_eff;
    assert!(split < 100.0, "chains centred 5 sd apart gave ess {split}");
}

#[test]
fn autocorrelation_of_ar1() {
    let rho = autocorrelation(&ar1(0.8, 200_000, 4), 3).unwrap();
    assert!((rho[0] - 1.0).abs() < 1e-12);
    for (lag, r) in rho.iter().enumerate().skip(1) {
        assert!((r - 0.8f64.powi(lag as i32)).abs() < 0.01, "lag {lag}: {r}");
    }
}

#[test]
fn ks_detects_shift_and_accepts_same_law() {
    let mut rng = SeedStreams::new(5).stream(0, StreamRole::Auxiliary);
    let n = Normal::new(0.0, 1.0).unwrap();
    let a: Vec<f64> = (0..3000).map(|_| n.sample(&mut rng)).collect();
    let b: Vec<f64> = (0..3000).map(|_| n.sample(&mut rng)).collect();
    let c: Vec<f64> = (0..3000).map(|_| n.sample(&mut rng) + 0.2).collect();
    assert!(ks_two_sample(&a, &b).unwrap().p_value > 0.01);
    assert!(ks_two_sample(&a, &c).unwrap().p_value < 1e-4);
    let same = ks_two_sample(&a, &a).unwrap();
    assert_eq!(same.statistic, 0.0);
    assert!((same.p_value - 1.0).abs() < 1e-12);
}

#[test]
fn kolmogorov_tail_values() {
    // Critical values of the Kolmogorov distribution.
    assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-4);
    assert!((kolmogorov_sf(1.6276) - 0.01).abs() < 1e-4);
}

#[test]
fn chi_square_p_value_under_uniform_ranks() {
    // Uniform ranks: the p-value is itself roughly uniform, so its mean over
    // repetitions sits near one half.
    let mut rng = SeedStreams::new(6).stream(0, StreamRole::Auxiliary);
    let reps = 400;
    let mut ps = Vec::with_capacity(reps);
    for _ in 0..reps {
        let ranks: Vec<f64> = (0..500).map(|_| rng.random_range(0..=99) as f64).collect();
        ps.push(chi_squared_p_value(chi_squared(&ranks, 20, 99).unwrap(), 20));
    }
    let m = ps.iter().sum::<f64>() / reps as f64;
    assert!((m - 0.5).abs() < 3.0 * (1.0 / 12.0 / reps as f64).sqrt(), "mean p-value {m}");
}

#[test]
fn uniform_ranks_stay_inside_the_ecdf_band() {
    let mut rng = SeedStreams::new(7).stream(0, StreamRole::Auxiliary);
    let k = 2000;
    let ranks: Vec<f64> = (0..k).map(|_| rng.random_range(0..=199) as f64).collect();
    assert!(rank_ecdf_distance(&ranks, 199) < 1.628 / (k as f64).sqrt());
}

#[test]
fn histogram_shapes() {
    let u_shape = [45, 20, 8, 9, 10, 9, 8, 11, 20, 45];
    let hump = [2, 6, 12, 20, 30, 30, 20, 12, 6, 2];
    let left = [40, 30, 25, 20, 15, 10, 8, 6, 4, 2];
    let flat = [10, 11, 9, 10, 10, 11, 9, 10, 10, 10];
    assert_eq!(classify_shape(&u_shape), RankShape::UnderDispersed);
    assert_eq!(classify_shape(&hump), RankShape::OverDispersed);
    assert_eq!(classify_shape(&flat), RankShape::Uniform);
    // Truth is usually below the posterior draws.
    assert_eq!(classify_shape(&left), RankShape::Overestimates);
    let right: Vec<u64> = left.iter().rev().copied().collect();
    assert_eq!(classify_shape(&right), RankShape::Underestimates);
}

#[test]
fn histogram_bins_cover_support() {
    let support = 99;
    let ranks: Vec<f64> = (0..=support).map(|r| r as f64).collect();
    let h = RankHistogram::new(&ranks, 10, support).unwrap();
    assert_eq!(h.counts, vec![10; 10]);
    assert_eq!(h.chi_squared(), 0.0);
    assert!(RankHistogram::new(&[100.0], 10, support).is_err());
}

#[test]
fn six_number_summary() {
    let s = Summary6::new(&[4.0, 1.0, 3.0, 2.0, 5.0]).unwrap();
    assert_eq!((s.min, s.q25, s.median, s.mean, s.q75, s.max), (1.0, 2.0, 3.0, 3.0, 4.0, 5.0));
}
