//! Files in and out: run configuration, return series, draws, rank files with
//! checkpoints, reports and figures.
//!
//! Every file is written to a temporary sibling and renamed into place, so a
//! crash never leaves a half-written output behind. Rank files are the
//! exception: they are appended row by row, and the checkpoint records how
//! many bytes are complete.

mod config;
mod draws_csv;
mod ranks;
mod report;
mod returns;
mod svg;

use std::fs;
use std::path::Path;

pub use config::RunConfig;
pub use draws_csv::{read_draws_csv, write_draws_csv};
pub use ranks::{
    read_ranks, run_sbc_to_dir, Checkpoint, RanksData, RunMeta, RunOptions, RunOutcome, CHECKPOINT_FILE,
    RANKS_FILE, RUN_META_FILE, STATE_RANKS_FILE,
};
pub use report::{fit_summary, write_report, FitSummary, ParamSummary, ReportFiles};
pub use returns::{parse_returns_csv, read_returns_csv, ReturnsData};
pub use svg::{ascii_histogram, histogram_svg, overlay_svg};

use crate::error::Result;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "SVCAL_THREADS";

/// `requested`, capped by `SVCAL_THREADS` when that is set to a positive integer.
pub fn effective_parallelism(requested: usize) -> usize {
    let requested = requested.max(1);
    match std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        Some(cap) if cap > 0 => requested.min(cap),
        _ => requested,
    }
}

/// Writes `bytes` to a temporary file next to `path`, then renames it over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}
