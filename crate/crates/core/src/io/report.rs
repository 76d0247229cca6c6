use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ranks::RanksData;
use super::svg::{ascii_histogram, histogram_svg};
use super::{atomic_write, write_json};
use crate::diagnostics::{ess, uniformity_report, Summary6, UniformityReport};
use crate::draws::PosteriorDraws;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub report: UniformityReport,
    /// Text report with ASCII histograms, as written to `report.txt`.
    pub text: String,
    pub files: Vec<PathBuf>,
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect::<String>()
        .trim_end_matches('_')
        .to_string()
}

fn csv_bytes(rows: Vec<Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `report.json`, `chi2.csv`, `ess.csv`, `state_chi2.csv` (when state
/// ranks exist), one `hist_<param>.svg` per parameter and `report.txt`.
pub fn write_report(data: &RanksData, bins: usize, out_dir: &Path) -> Result<ReportFiles> {
    let report = uniformity_report(&data.records, bins)?;
    let mut files = Vec::new();
    let mut put = |name: String, bytes: &[u8]| -> Result<()> {
        let p = out_dir.join(name);
        atomic_write(&p, bytes)?;
        files.push(p);
        Ok(())
    };

    let mut chi = vec![["parameter", "chi2", "p_value", "shape", "weighted_chi2"].map(String::from).to_vec()];
    let mut ess_rows = vec![["parameter", "min", "q25", "median", "mean", "q75", "max"].map(String::from).to_vec()];
    for p in &report.params {
        chi.push(vec![
            p.name.clone(),
            p.chi_squared.to_string(),
            p.p_value.to_string(),
            p.shape.describe().to_string(),
            opt(p.weighted_chi_squared),
        ]);
        if let Some(e) = &p.ess {
            ess_rows.push(vec![
                p.name.clone(),
                e.min.to_string(),
                e.q25.to_string(),
                e.median.to_string(),
                e.mean.to_string(),
                e.q75.to_string(),
                e.max.to_string(),
            ]);
        }
        let title = format!("{} ranks (chi2 = {:.1})", p.name, p.chi_squared);
        put(format!("hist_{}.svg", file_stem(&p.name)), histogram_svg(&p.histogram, &title, p.weighted_histogram.as_ref()).as_bytes())?;
    }
    put("chi2.csv".into(), &csv_bytes(chi)?)?;
    put("ess.csv".into(), &csv_bytes(ess_rows)?)?;
    if let Some(s) = &report.states {
        let mut rows = vec![vec!["state".to_string(), "chi2".to_string(), "weighted_chi2".to_string()]];
        for (t, c) in s.chi_squared.iter().enumerate() {
            let w = s.weighted_chi_squared.as_ref().map(|w| w[t]);
            rows.push(vec![(t + 1).to_string(), c.to_string(), opt(w)]);
        }
        put("state_chi2.csv".into(), &csv_bytes(rows)?)?;
    }

    let text = render_text(data, &report);
    put("report.txt".into(), text.as_bytes())?;
    #[derive(Serialize)]
    struct Json<'a> {
        partial: bool,
        warnings: &'a [String],
        #[serde(flatten)]
        report: &'a UniformityReport,
    }
    let json_path = out_dir.join("report.json");
    write_json(&json_path, &Json { partial: data.partial, warnings: &data.warnings, report: &report })?;
    files.push(json_path);
    Ok(ReportFiles { report, text, files })
}

fn render_text(data: &RanksData, report: &UniformityReport) -> String {
    let mut t = String::new();
    if data.partial {
        let _ = writeln!(t, "WARNING: PARTIAL RESULTS");
        for w in &data.warnings {
            let _ = writeln!(t, "WARNING: {w}");
        }
        let _ = writeln!(t);
    }
    if let Some(m) = &data.meta {
        let _ = writeln!(
            t,
            "sampler {} / {}, T = {}, seed {}",
            m.config.sampler.as_str(),
            m.config.parameterization.as_str(),
            m.config.series_len,
            m.config.base_seed
        );
    }
    let _ = writeln!(
        t,
        "{} iterations ({} failed), ranks on 0..={}, {} bins, chi2 0.99 critical value {:.2}\n",
        report.n_records + report.n_failed,
        report.n_failed,
        report.support,
        report.bins,
        report.critical_99
    );
    for p in &report.params {
        let _ = write!(t, "{}: chi2 = {:.2} (p = {:.4}), shape: {}", p.name, p.chi_squared, p.p_value, p.shape.describe());
        if let Some(w) = p.weighted_chi_squared {
            let _ = write!(t, ", weighted chi2 = {w:.2}");
        }
        let _ = writeln!(t);
        if let Some(e) = &p.ess {
            let _ = writeln!(
                t,
                "  ESS min {:.0} q25 {:.0} median {:.0} mean {:.0} q75 {:.0} max {:.0}",
                e.min, e.q25, e.median, e.mean, e.q75, e.max
            );
        }
        t.push_str(&ascii_histogram(&p.histogram, 40));
        let _ = writeln!(t);
    }
    if let Some(s) = &report.states {
        let m = &s.summary;
        let _ = writeln!(
            t,
            "state chi2 over {} states: min {:.1} q25 {:.1} median {:.1} mean {:.1} q75 {:.1} max {:.1}",
            s.chi_squared.len(),
            m.min,
            m.q25,
            m.median,
            m.mean,
            m.q75,
            m.max
        );
        if let Some(w) = &s.weighted_summary {
            let _ = writeln!(t, "weighted state chi2: median {:.1} mean {:.1} max {:.1}", w.median, w.mean, w.max);
        }
    }
    t
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub summary: Summary6,
    pub ess: Option<f64>,
}

/// Posterior summary of a `fit` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub sampler: String,
    pub parameterization: String,
    pub n_obs: usize,
    pub chains: usize,
    pub draws_per_chain: usize,
    pub accept_rate: Vec<f64>,
    pub divergences: Vec<usize>,
    pub params: Vec<ParamSummary>,
}

pub fn fit_summary(chains: &[PosteriorDraws], sampler: &str, parameterization: &str, n_obs: usize) -> Result<FitSummary> {
    let first = chains.first().ok_or_else(|| Error::Data("no chains".into()))?;
    let params = first
        .param_names
        .iter()
        .map(|name| {
            let cols: Vec<Vec<f64>> = chains.iter().map(|c| c.column(name).unwrap_or_default()).collect();
            let pooled: Vec<f64> = cols.iter().flatten().copied().collect();
            Ok(ParamSummary {
                name: name.clone(),
                summary: Summary6::new(&pooled)?,
                ess: ess(&cols).ok().map(|e| e.n_eff),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FitSummary {
        sampler: sampler.to_string(),
        parameterization: parameterization.to_string(),
        n_obs,
        chains: chains.len(),
        draws_per_chain: first.len(),
        accept_rate: chains.iter().map(|c| c.accept_rate).collect(),
        divergences: chains.iter().map(|c| c.divergence_count).collect(),
        params,
    })
}
