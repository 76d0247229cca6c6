use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use svcal::diagnostics::{ks_two_sample, DEFAULT_BINS};
use svcal::hmc::{run_chain, HmcConfig};
use svcal::io::{
    atomic_write, effective_parallelism, fit_summary, overlay_svg, read_ranks, read_returns_csv, run_sbc_to_dir,
    write_draws_csv, write_json, write_report, RunConfig, RunOptions,
};
use svcal::ksc::{run_ksc_chain, KscConfig, MixtureTable};
use svcal::model::{prior_predictive_h2, simulate};
use svcal::sbc::SamplerKind;
use svcal::{Parameterization, PriorSpec, SeedStreams, StaticParams, StateSelection, StreamRole};

#[derive(Parser)]
#[command(name = "svcal", version, about = "Simulation-based calibration for stochastic volatility samplers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a return series and its log-variance path.
    Simulate(SimulateArgs),
    /// Fit a returns file with one of the samplers.
    Fit(FitArgs),
    /// Run or report an SBC experiment.
    #[command(subcommand)]
    Sbc(SbcCommand),
    /// Prior predictive draws of the second state under both parameterizations.
    Priorpred(PriorpredArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, allow_hyphen_values = true)]
    mu: f64,
    #[arg(long, allow_hyphen_values = true)]
    phi: f64,
    #[arg(long, allow_hyphen_values = true)]
    sigma2: f64,
    /// Series length.
    #[arg(long = "T", short = 'T')]
    len: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output CSV with columns t, y, h.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, default_value = "hmc")]
    sampler: SamplerKind,
    #[arg(long, default_value = "noncentered")]
    param: Parameterization,
    /// CSV with `date` and `price` or `return` columns.
    #[arg(long)]
    data: PathBuf,
    /// Retained draws per chain (default 999 for hmc, 9999 for ksc).
    #[arg(long)]
    draws: Option<usize>,
    /// Warmup (hmc) or burn-in (ksc) iterations (default 1000 / 10000).
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long, default_value_t = 1)]
    chains: usize,
    /// Leapfrog steps per HMC iteration.
    #[arg(long)]
    leapfrog: Option<usize>,
    /// Keep every state path in the draws file.
    #[arg(long)]
    store_states: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "fit-out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum SbcCommand {
    /// Run (or resume) an experiment from a JSON config.
    Run(SbcRunArgs),
    /// Histograms, chi-square and ESS tables from a ranks file.
    Report(SbcReportArgs),
}

#[derive(Args)]
struct SbcRunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config's parallelism.
    #[arg(long)]
    parallelism: Option<usize>,
    /// Continue from the checkpoint in the output directory.
    #[arg(long)]
    resume: bool,
    /// Stop after this many iterations (resume later with --resume).
    #[arg(long)]
    stop_after: Option<usize>,
    #[arg(long)]
    store_states: bool,
}

#[derive(Args)]
struct SbcReportArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    /// Defaults to the directory of the ranks file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PriorpredArgs {
    #[arg(long, default_value_t = 5000)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "priorpred-out")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Sbc(SbcCommand::Run(a)) => cmd_sbc_run(a),
        Command::Sbc(SbcCommand::Report(a)) => cmd_sbc_report(a),
        Command::Priorpred(a) => cmd_priorpred(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = e.chain().any(|c| c.downcast_ref::<svcal::Error>().is_some_and(|s| s.is_usage()));
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let params = StaticParams::new(a.mu, a.phi, a.sigma2)?;
    let mut rng = SeedStreams::new(a.seed).stream(0, StreamRole::Simulate);
    let (h, y) = simulate(&params, a.len, &mut rng)?;
    let mut text = String::from("t,y,h\n");
    for (t, (yv, hv)) in y.values().iter().zip(&h.values).enumerate() {
        text.push_str(&format!("{},{yv},{hv}\n", t + 1));
    }
    atomic_write(&a.out, text.as_bytes())?;
    println!("wrote {} observations to {}", a.len, a.out.display());
    Ok(())
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    if a.chains == 0 {
        return Err(svcal::Error::Config("--chains must be at least 1".into()).into());
    }
    let data = read_returns_csv(&a.data)?;
    let y = &data.returns;
    let prior = PriorSpec::default();
    let states = if a.store_states { StateSelection::All } else { StateSelection::None };
    let streams = SeedStreams::new(a.seed);
    let mut chains = Vec::with_capacity(a.chains);
    for c in 0..a.chains {
        let mut rng = streams.stream(c as u64, StreamRole::Sampler);
        let mut draws = match a.sampler {
            SamplerKind::Hmc => {
                let d = HmcConfig::default();
                let cfg = HmcConfig {
                    n_draws: a.draws.unwrap_or(d.n_draws),
                    n_warmup: a.burnin.unwrap_or(d.n_warmup),
                    n_leapfrog: a.leapfrog.unwrap_or(d.n_leapfrog),
                    record_states: states.clone(),
                    ..d
                };
                run_chain(y, &prior, a.param, &cfg, &mut rng, &mut ())?
            }
            SamplerKind::Ksc => {
                let d = KscConfig::default();
                let cfg = KscConfig {
                    n_draws: a.draws.unwrap_or(d.n_draws),
                    n_burnin: a.burnin.unwrap_or(d.n_burnin),
                    record_states: states.clone(),
                    ..d
                };
                run_ksc_chain(y, &prior, a.param, &cfg, &MixtureTable::ksc(), &mut rng, &mut ())?
            }
        };
        draws.seed = a.seed;
        chains.push(draws);
    }
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_draws_csv(&a.out.join("draws.csv"), &chains)?;
    let summary = fit_summary(&chains, a.sampler.as_str(), a.param.as_str(), y.len())?;
    write_json(&a.out.join("summary.json"), &summary)?;
    println!("{:<8} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>8}", "param", "min", "q25", "median", "mean", "q75", "max", "ess");
    for p in &summary.params {
        let s = &p.summary;
        println!(
            "{:<8} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>8}",
            p.name,
            s.min,
            s.q25,
            s.median,
            s.mean,
            s.q75,
            s.max,
            p.ess.map(|e| format!("{e:.0}")).unwrap_or_else(|| "-".into())
        );
    }
    Ok(())
}

fn cmd_sbc_run(a: SbcRunArgs) -> Result<()> {
    let cfg = RunConfig::from_path(&a.config)?;
    let opts = RunOptions {
        out_dir: a.out.unwrap_or(cfg.out_dir),
        parallelism: effective_parallelism(a.parallelism.unwrap_or(cfg.parallelism)),
        resume: a.resume,
        store_states: a.store_states || cfg.store_states,
        stop_after: a.stop_after,
    };
    let outcome = run_sbc_to_dir(&cfg.sbc, &opts)?;
    println!(
        "{} of {} iterations complete ({} failed in this invocation) in {}",
        outcome.completed,
        cfg.sbc.iterations,
        outcome.failed,
        opts.out_dir.display()
    );
    if !outcome.finished {
        println!("run stopped early; continue with --resume");
    }
    Ok(())
}

fn cmd_sbc_report(a: SbcReportArgs) -> Result<()> {
    let data = read_ranks(&a.input)?;
    let out = a.out.unwrap_or_else(|| a.input.parent().map(Path::to_path_buf).unwrap_or_default());
    let files = write_report(&data, a.bins, &out)?;
    print!("{}", files.text);
    Ok(())
}

fn cmd_priorpred(a: PriorpredArgs) -> Result<()> {
    if a.n == 0 {
        return Err(svcal::Error::Config("--n must be at least 1".into()).into());
    }
    let prior = PriorSpec::default();
    let streams = SeedStreams::new(a.seed);
    let centered = prior_predictive_h2(&prior, Parameterization::Centered, a.n, &mut streams.stream(0, StreamRole::Prior));
    let noncentered =
        prior_predictive_h2(&prior, Parameterization::NonCentered, a.n, &mut streams.stream(1, StreamRole::Prior));
    let mut text = String::from("centered,noncentered\n");
    for (c, n) in centered.iter().zip(&noncentered) {
        text.push_str(&format!("{c},{n}\n"));
    }
    std::fs::create_dir_all(&a.out)?;
    atomic_write(&a.out.join("h2.csv"), text.as_bytes())?;
    let ks = ks_two_sample(&centered, &noncentered)?;
    if a.n > 1 {
        let svg = overlay_svg(&centered, &noncentered, ["centered", "non-centered"], 50, "prior predictive h2");
        atomic_write(&a.out.join("h2_overlay.svg"), svg.as_bytes())?;
    }
    println!("{} draws per parameterization, KS D = {:.4}, p = {:.4}", a.n, ks.statistic, ks.p_value);
    Ok(())
}
