//! Effective sample size, rank histograms, chi-square uniformity statistics and
//! the summary tables built from SBC records.

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::sbc::SbcRecord;

/// Default number of histogram bins.
pub const DEFAULT_BINS: usize = 20;

/// Autocorrelations `rho_0..=rho_max_lag` from the 1/N-normalized autocovariance.
pub fn autocorrelation(chain: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let acov = autocovariance(chain)?;
    let max_lag = max_lag.min(chain.len() - 1);
    Ok(acov[..=max_lag].iter().map(|c| c / acov[0]).collect())
}

fn autocovariance(chain: &[f64]) -> Result<Vec<f64>> {
    let n = chain.len();
    if n < 2 {
        return Err(Error::Data(format!("autocorrelation needs at least 2 draws, got {n}")));
    }
    if chain.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("chain contains non-finite draws".into()));
    }
    let mean = chain.iter().sum::<f64>() / n as f64;
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = chain
        .iter()
        .map(|v| Complex::new(v - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    let acov: Vec<f64> = buf[..n].iter().map(|c| c.re / (size as f64 * n as f64)).collect();
    let scale = chain.iter().map(|v| v.abs()).fold(0.0, f64::max).max(mean.abs());
    if acov[0] <= (scale * 1e-12).powi(2) {
        return Err(Error::Data("chain has zero variance".into()));
    }
    Ok(acov)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EssEstimate {
    pub n_eff: f64,
    /// Draws per chain.
    pub n: usize,
    /// Number of chains.
    pub m: usize,
    /// Combined autocorrelations `rho_0..=rho_L`.
    pub rho: Vec<f64>,
    /// Last lag entering the sum.
    pub lag: usize,
}

/// Effective sample size with Geyer's initial positive sequence truncation.
///
/// Lags enter in pairs `rho_{2k} + rho_{2k+1}` while the pair sum is positive.
/// With several chains the autocorrelations are combined through the
/// between/within variance decomposition. The autocorrelation time is floored
/// at `1 / log10(NM)`.
pub fn ess(chains: &[Vec<f64>]) -> Result<EssEstimate> {
    let m = chains.len();
    if m == 0 {
        return Err(Error::Data("no chains".into()));
    }
    let n = chains[0].len();
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::Data("chains differ in length".into()));
    }
    if n < 4 {
        return Err(Error::Data(format!("ess needs at least 4 draws per chain, got {n}")));
    }
    let acovs = chains.iter().map(|c| autocovariance(c)).collect::<Result<Vec<_>>>()?;
    let rho: Vec<f64> = if m == 1 {
        acovs[0].iter().map(|c| c / acovs[0][0]).collect()
    } else {
        let nf = n as f64;
        let means: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / nf).collect();
        let grand = means.iter().sum::<f64>() / m as f64;
        let between = nf * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (m as f64 - 1.0);
        // Per-chain variances with the n-1 divisor.
        let vars: Vec<f64> = acovs.iter().map(|a| a[0] * nf / (nf - 1.0)).collect();
        let within = vars.iter().sum::<f64>() / m as f64;
        let var_plus = (nf - 1.0) / nf * within + between / nf;
        (0..n)
            .map(|t| {
                let mean_acov = acovs.iter().map(|a| a[t]).sum::<f64>() / m as f64;
                1.0 - (within - mean_acov * nf / (nf - 1.0)) / var_plus
            })
            .collect()
    };
    let mut sum = 0.0;
    let mut lag = 0;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = rho[2 * k] + rho[2 * k + 1];
        if pair <= 0.0 {
            break;
        }
        sum += pair;
        lag = 2 * k + 1;
        k += 1;
    }
    let total = (n * m) as f64;
    let tau = (-1.0 + 2.0 * sum).max(1.0 / total.log10());
    Ok(EssEstimate {
        n_eff: total / tau,
        n,
        m,
        rho: rho[..=lag.max(1).min(n - 1)].to_vec(),
        lag,
    })
}

/// Equal-width histogram of ranks over the support `0..=support`.
///
/// Bin edges are real: rank `r` falls in bin `floor(r J / (support + 1))`, so
/// real-valued weighted ranks share the edges of integer ranks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankHistogram {
    pub bins: usize,
    pub support: usize,
    pub counts: Vec<u64>,
}

impl RankHistogram {
    pub fn new(ranks: &[f64], bins: usize, support: usize) -> Result<Self> {
        if bins < 2 {
            return Err(Error::Config(format!("need at least 2 bins, got {bins}")));
        }
        let width = (support + 1) as f64 / bins as f64;
        let mut counts = vec![0u64; bins];
        for &r in ranks {
            if !(r >= 0.0 && r <= support as f64) {
                return Err(Error::Data(format!("rank {r} outside 0..={support}")));
            }
            let j = ((r / width) as usize).min(bins - 1);
            counts[j] += 1;
        }
        Ok(Self { bins, support, counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn expected(&self) -> f64 {
        self.total() as f64 / self.bins as f64
    }

    /// Upper edge of bin `j` (exclusive).
    pub fn edge(&self, j: usize) -> f64 {
        (self.support + 1) as f64 * j as f64 / self.bins as f64
    }

    /// `sum_j (b_j - e)^2 / e`.
    pub fn chi_squared(&self) -> f64 {
        let e = self.expected();
        if e == 0.0 {
            return 0.0;
        }
        self.counts.iter().map(|&b| (b as f64 - e).powi(2) / e).sum()
    }

    pub fn shape(&self) -> RankShape {
        classify_shape(&self.counts)
    }
}

/// Chi-square uniformity statistic of `ranks` binned into `bins` bins.
pub fn chi_squared(ranks: &[f64], bins: usize, support: usize) -> Result<f64> {
    Ok(RankHistogram::new(ranks, bins, support)?.chi_squared())
}

/// Upper-tail probability of a chi-square statistic with `bins - 1` degrees of freedom.
pub fn chi_squared_p_value(stat: f64, bins: usize) -> f64 {
    let dist = ChiSquared::new((bins - 1) as f64).expect("positive degrees of freedom");
    dist.sf(stat)
}

pub fn chi_squared_quantile(p: f64, df: usize) -> f64 {
    ChiSquared::new(df as f64).expect("positive degrees of freedom").inverse_cdf(p)
}

/// Shape of a rank histogram, read from which regions are inflated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankShape {
    Uniform,
    /// Both ends inflated.
    UnderDispersed,
    /// The middle inflated.
    OverDispersed,
    /// High ranks inflated: the truth tends to sit above the posterior.
    Underestimates,
    /// Low ranks inflated.
    Overestimates,
}

impl RankShape {
    pub fn describe(&self) -> &'static str {
        match self {
            RankShape::Uniform => "uniform",
            RankShape::UnderDispersed => "under-dispersed",
            RankShape::OverDispersed => "over-dispersed",
            RankShape::Underestimates => "posterior underestimates prior on average",
            RankShape::Overestimates => "posterior overestimates prior on average",
        }
    }
}

/// A region (first quarter, middle half, last quarter of the bins) is
/// inflated when its mean count exceeds `e + 3 sqrt(e (1 - 1/J) / n_region)`.
/// A heuristic label, not a test.
pub fn classify_shape(counts: &[u64]) -> RankShape {
    let j = counts.len();
    if j < 4 {
        return RankShape::Uniform;
    }
    let total: u64 = counts.iter().sum();
    let e = total as f64 / j as f64;
    let q = j / 4;
    let inflated = |region: &[u64]| {
        let n = region.len() as f64;
        let mean = region.iter().sum::<u64>() as f64 / n;
        mean > e + 3.0 * (e * (1.0 - 1.0 / j as f64) / n).sqrt()
    };
    let left = inflated(&counts[..q]);
    let right = inflated(&counts[j - q..]);
    let middle = inflated(&counts[q..j - q]);
    match (left, middle, right) {
        (true, _, true) => RankShape::UnderDispersed,
        (true, _, false) => RankShape::Overestimates,
        (false, _, true) => RankShape::Underestimates,
        (false, true, false) => RankShape::OverDispersed,
        (false, false, false) => RankShape::Uniform,
    }
}

/// Min, quartiles (linear interpolation), median, mean and max.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary6 {
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub mean: f64,
    pub q75: f64,
    pub max: f64,
}

impl Summary6 {
    pub fn new(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Data("cannot summarize an empty sample".into()));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite("sample contains NaN".into()));
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Ok(Self {
            min: v[0],
            q25: quantile_sorted(&v, 0.25),
            median: quantile_sorted(&v, 0.5),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            q75: quantile_sorted(&v, 0.75),
            max: v[v.len() - 1],
        })
    }
}

/// Linearly interpolated quantile of sorted data (the common "type 7" rule).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Data("KS test needs two non-empty samples".into()));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_sf((ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d),
    })
}

/// `P(K > lambda)` for the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Largest gap between the empirical CDF of integer ranks and the discrete
/// uniform CDF on `0..=support`.
pub fn rank_ecdf_distance(ranks: &[f64], support: usize) -> f64 {
    let mut counts = vec![0u64; support + 1];
    for &r in ranks {
        counts[(r as usize).min(support)] += 1;
    }
    let n = ranks.len() as f64;
    let mut cum = 0u64;
    let mut d = 0.0f64;
    for (k, c) in counts.iter().enumerate() {
        cum += c;
        d = d.max((cum as f64 / n - (k + 1) as f64 / (support + 1) as f64).abs());
    }
    d
}

/// Per-parameter part of a [`UniformityReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamReport {
    pub name: String,
    pub histogram: RankHistogram,
    pub chi_squared: f64,
    pub p_value: f64,
    pub shape: RankShape,
    pub weighted_histogram: Option<RankHistogram>,
    pub weighted_chi_squared: Option<f64>,
    pub ess: Option<Summary6>,
}

/// Chi-square statistics of every latent state's ranks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateReport {
    pub chi_squared: Vec<f64>,
    pub summary: Summary6,
    pub weighted_chi_squared: Option<Vec<f64>>,
    pub weighted_summary: Option<Summary6>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformityReport {
    pub bins: usize,
    pub support: usize,
    pub n_records: usize,
    pub n_failed: usize,
    /// `chi^2_{J-1}` 0.99 quantile, for reading the statistics.
    pub critical_99: f64,
    pub params: Vec<ParamReport>,
    pub states: Option<StateReport>,
}

/// Histograms, chi-square statistics, shape labels and ESS summaries over the
/// non-failed records.
pub fn uniformity_report(records: &[SbcRecord], bins: usize) -> Result<UniformityReport> {
    let ok: Vec<&SbcRecord> = records.iter().filter(|r| !r.failed).collect();
    let n_failed = records.len() - ok.len();
    let Some(first) = ok.first() else {
        return Err(Error::Data("no completed SBC records to report".into()));
    };
    let support = first.support;
    if ok.iter().any(|r| r.support != support) {
        return Err(Error::Data("records disagree on the rank support".into()));
    }
    let mut params = Vec::new();
    for (i, p) in first.params.iter().enumerate() {
        let column = |f: &dyn Fn(&crate::sbc::ParamRank) -> Option<f64>| -> Result<Option<Vec<f64>>> {
            let mut out = Vec::with_capacity(ok.len());
            for r in &ok {
                let pr = r.params.get(i).filter(|q| q.name == p.name).ok_or_else(|| {
                    Error::Data(format!("iteration {} lacks parameter {}", r.iteration, p.name))
                })?;
                match f(pr) {
                    Some(v) => out.push(v),
                    None => return Ok(None),
                }
            }
            Ok(Some(out))
        };
        let ranks = column(&|q| q.rank.map(|r| r as f64))?
            .ok_or_else(|| Error::Data(format!("missing ranks for {}", p.name)))?;
        let histogram = RankHistogram::new(&ranks, bins, support)?;
        let chi2 = histogram.chi_squared();
        let weighted_histogram = match column(&|q| q.weighted_rank)? {
            Some(w) => Some(RankHistogram::new(&w, bins, support)?),
            None => None,
        };
        let ess = match column(&|q| q.ess)? {
            Some(v) => Some(Summary6::new(&v)?),
            None => None,
        };
        params.push(ParamReport {
            name: p.name.clone(),
            p_value: chi_squared_p_value(chi2, bins),
            shape: histogram.shape(),
            chi_squared: chi2,
            weighted_chi_squared: weighted_histogram.as_ref().map(|h| h.chi_squared()),
            weighted_histogram,
            histogram,
            ess,
        });
    }
    let states = state_report(&ok, bins, support)?;
    Ok(UniformityReport {
        bins,
        support,
        n_records: ok.len(),
        n_failed,
        critical_99: chi_squared_quantile(0.99, bins - 1),
        params,
        states,
    })
}

fn state_report(ok: &[&SbcRecord], bins: usize, support: usize) -> Result<Option<StateReport>> {
    let Some(len) = ok[0].state_ranks.as_ref().map(|s| s.ranks.len()) else {
        return Ok(None);
    };
    if ok.iter().any(|r| r.state_ranks.as_ref().map(|s| s.ranks.len()) != Some(len)) {
        return Ok(None);
    }
    let mut chi = Vec::with_capacity(len);
    let mut wchi = Vec::with_capacity(len);
    let weighted = ok.iter().all(|r| r.state_ranks.as_ref().is_some_and(|s| s.weighted.is_some()));
    for t in 0..len {
        let ranks: Vec<f64> = ok.iter().map(|r| r.state_ranks.as_ref().unwrap().ranks[t] as f64).collect();
        chi.push(chi_squared(&ranks, bins, support)?);
        if weighted {
            let w: Vec<f64> = ok
                .iter()
                .map(|r| r.state_ranks.as_ref().unwrap().weighted.as_ref().unwrap()[t])
                .collect();
            wchi.push(chi_squared(&w, bins, support)?);
        }
    }
    Ok(Some(StateReport {
        summary: Summary6::new(&chi)?,
        chi_squared: chi,
        weighted_summary: if weighted { Some(Summary6::new(&wchi)?) } else { None },
        weighted_chi_squared: weighted.then_some(wchi),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_chi_squared() {
        let h = RankHistogram::new(&[0.0, 0.0, 1.0, 3.0], 2, 3).unwrap();
        assert_eq!(h.counts, vec![3, 1]);
        assert!((h.chi_squared() - 1.0).abs() < 1e-15);
        let flat = RankHistogram::new(&[0.0, 1.0, 2.0, 3.0], 2, 3).unwrap();
        assert_eq!(flat.chi_squared(), 0.0);
    }

    #[test]
    fn expected_count() {
        let ranks: Vec<f64> = (0..5000).map(|i| (i % 1000) as f64).collect();
        let h = RankHistogram::new(&ranks, 20, 999).unwrap();
        assert_eq!(h.expected(), 250.0);
        assert!(h.counts.iter().all(|&c| c == 250));
    }

    #[test]
    fn rank_outside_support() {
        assert!(RankHistogram::new(&[4.0], 2, 3).is_err());
        assert!(RankHistogram::new(&[-0.5], 2, 3).is_err());
        assert!(RankHistogram::new(&[1.0], 1, 3).is_err());
    }

    #[test]
    fn weighted_ranks_share_edges() {
        let h = RankHistogram::new(&[1.99, 2.0, 3.0], 2, 3).unwrap();
        assert_eq!(h.counts, vec![1, 2]);
    }

    #[test]
    fn quantiles_type_seven() {
        let s = Summary6::new(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((s.min, s.max, s.mean), (1.0, 4.0, 2.5));
        assert!((s.q25 - 1.75).abs() < 1e-15);
        assert!((s.median - 2.5).abs() < 1e-15);
        assert!((s.q75 - 3.25).abs() < 1e-15);
    }

    #[test]
    fn constant_chain_rejected() {
        assert!(autocorrelation(&[2.0; 10], 3).is_err());
        assert!(ess(&[vec![1.0; 10]]).is_err());
    }

    #[test]
    fn antithetic_chain_is_super_efficient() {
        let chain: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 } * (1.0 + (i as f64 * 0.37).sin() * 0.1)).collect();
        let e = ess(&[chain]).unwrap();
        assert!(e.n_eff > 1000.0);
    }

    #[test]
    fn kolmogorov_tail() {
        assert!((kolmogorov_sf(1.628) - 0.01).abs() < 5e-4);
        assert!((kolmogorov_sf(1.358) - 0.05).abs() < 5e-4);
    }

    #[test]
    fn shapes() {
        let mut u = vec![100u64; 20];
        assert_eq!(classify_shape(&u), RankShape::Uniform);
        u[0] = 300;
        u[19] = 300;
        assert_eq!(classify_shape(&u), RankShape::UnderDispersed);
        u[0] = 100;
        assert_eq!(classify_shape(&u), RankShape::Underestimates);
    }
}
