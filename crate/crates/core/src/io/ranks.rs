use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_json, write_draws_csv, write_json};
use crate::draws::state_name;
use crate::error::{Error, Result};
use crate::sbc::{run_sbc, Experiment, ParamRank, SbcConfig, SbcRecord, StateRanks, SvExperiment};

pub const RANKS_FILE: &str = "ranks.csv";
pub const STATE_RANKS_FILE: &str = "state_ranks.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const RUN_META_FILE: &str = "run_meta.json";
const DRAWS_DIR: &str = "draws";

const RANK_COLUMNS: [&str; 12] = [
    "iteration",
    "parameter",
    "truth",
    "rank",
    "weighted_rank",
    "ess",
    "seed",
    "support",
    "failed",
    "accept_rate",
    "divergences",
    "error",
];

/// Iterations `0..completed` are fully written; the byte counts are the
/// lengths of the rank files at that point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub completed: u64,
    pub ranks_bytes: u64,
    pub state_ranks_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub config: SbcConfig,
    pub support: usize,
    pub param_names: Vec<String>,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub parallelism: usize,
    /// Continue from the checkpoint in `out_dir` instead of starting over.
    pub resume: bool,
    pub store_states: bool,
    /// Stop after this many iterations in this invocation.
    pub stop_after: Option<usize>,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            out_dir: out_dir.into(),
            parallelism: 1,
            resume: false,
            store_states: false,
            stop_after: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutcome {
    pub completed: u64,
    pub failed: usize,
    pub finished: bool,
}

fn now() -> String {
    #[cfg(not(target_arch = "wasm32"))]
    {
        chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
    }
    #[cfg(target_arch = "wasm32")]
    {
        String::new()
    }
}

fn ranks_header() -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RANK_COLUMNS)?;
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn state_header(len: usize) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut h = vec!["iteration".to_string(), "measure".to_string()];
    h.extend((1..=len).map(state_name));
    w.write_record(&h)?;
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn record_rows(r: &SbcRecord) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in &r.params {
        w.write_record([
            r.iteration.to_string(),
            p.name.clone(),
            p.truth.to_string(),
            opt(p.rank),
            opt(p.weighted_rank),
            opt(p.ess),
            r.seed.to_string(),
            r.support.to_string(),
            u8::from(r.failed).to_string(),
            r.accept_rate.to_string(),
            r.divergences.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn state_rows(r: &SbcRecord) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if let Some(s) = &r.state_ranks {
        let mut row = vec![r.iteration.to_string(), "rank".to_string()];
        row.extend(s.ranks.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
        if let Some(wr) = &s.weighted {
            let mut row = vec![r.iteration.to_string(), "weighted_rank".to_string()];
            row.extend(wr.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Writes each iteration's full draws next to the rank files.
struct StoringExperiment<'a> {
    inner: &'a SvExperiment,
    dir: PathBuf,
}

impl Experiment for StoringExperiment<'_> {
    fn support(&self) -> usize {
        self.inner.support()
    }

    fn param_names(&self) -> Vec<String> {
        self.inner.param_names()
    }

    fn run_iteration(&self, k: u64) -> SbcRecord {
        let (mut record, draws) = self.inner.run_iteration_with_draws(k, true);
        if let Some(d) = draws {
            let path = self.dir.join(format!("iter_{k:06}.csv"));
            if let Err(e) = write_draws_csv(&path, &[d]) {
                record.error = Some(format!("could not store draws: {e}"));
            }
        }
        record
    }
}

/// Runs the SBC experiment of `config`, streaming rows to `ranks.csv` (and
/// `state_ranks.csv`) in `opts.out_dir`. The files depend only on the config,
/// never on the thread count or on how often the run was interrupted.
pub fn run_sbc_to_dir(config: &SbcConfig, opts: &RunOptions) -> Result<RunOutcome> {
    let experiment = SvExperiment::new(config.clone())?;
    let dir = &opts.out_dir;
    fs::create_dir_all(dir)?;
    let ranks_path = dir.join(RANKS_FILE);
    let states_path = dir.join(STATE_RANKS_FILE);
    let ckpt_path = dir.join(CHECKPOINT_FILE);
    let meta_path = dir.join(RUN_META_FILE);

    let resuming = opts.resume && ckpt_path.exists();
    let (mut ckpt, mut meta) = if resuming {
        let meta: RunMeta = read_json(&meta_path)?;
        if meta.config != *config {
            return Err(Error::Config(format!(
                "configuration differs from the run being resumed in {}",
                dir.display()
            )));
        }
        let ckpt: Checkpoint = read_json(&ckpt_path)?;
        truncate(&ranks_path, ckpt.ranks_bytes)?;
        if config.all_states {
            truncate(&states_path, ckpt.state_ranks_bytes)?;
        }
        (ckpt, meta)
    } else {
        let header = ranks_header()?;
        fs::write(&ranks_path, &header)?;
        let state_bytes = if config.all_states {
            let h = state_header(config.series_len)?;
            fs::write(&states_path, &h)?;
            h.len() as u64
        } else {
            if states_path.exists() {
                fs::remove_file(&states_path)?;
            }
            0
        };
        let meta = RunMeta {
            config: config.clone(),
            support: config.support(),
            param_names: config.tracked_names(),
            started_at: now(),
            finished_at: None,
            complete: false,
        };
        write_json(&meta_path, &meta)?;
        let ckpt = Checkpoint {
            completed: 0,
            ranks_bytes: header.len() as u64,
            state_ranks_bytes: state_bytes,
        };
        write_json(&ckpt_path, &ckpt)?;
        (ckpt, meta)
    };

    let total = config.iterations as u64;
    let start = ckpt.completed.min(total);
    let end = match opts.stop_after {
        Some(n) => (start + n as u64).min(total),
        None => total,
    };
    let mut ranks_file = OpenOptions::new().append(true).open(&ranks_path)?;
    let mut states_file: Option<File> =
        if config.all_states { Some(OpenOptions::new().append(true).open(&states_path)?) } else { None };
    let mut failed = 0usize;
    let storing;
    let exp: &dyn Experiment = if opts.store_states {
        storing = StoringExperiment {
            inner: &experiment,
            dir: dir.join(DRAWS_DIR),
        };
        &storing
    } else {
        &experiment
    };
    run_sbc(exp, start..end, super::effective_parallelism(opts.parallelism), |record| {
        failed += usize::from(record.failed);
        let rows = record_rows(&record)?;
        ranks_file.write_all(&rows)?;
        ranks_file.flush()?;
        ckpt.ranks_bytes += rows.len() as u64;
        if let Some(f) = states_file.as_mut() {
            let rows = state_rows(&record)?;
            f.write_all(&rows)?;
            f.flush()?;
            ckpt.state_ranks_bytes += rows.len() as u64;
        }
        ckpt.completed = record.iteration + 1;
        write_json(&ckpt_path, &ckpt)
    })?;

    let finished = ckpt.completed >= total;
    if finished && !meta.complete {
        meta.complete = true;
        meta.finished_at = Some(now());
        write_json(&meta_path, &meta)?;
    }
    Ok(RunOutcome {
        completed: ckpt.completed,
        failed,
        finished,
    })
}

fn truncate(path: &Path, len: u64) -> Result<()> {
    let f = OpenOptions::new().write(true).open(path)?;
    if f.metadata()?.len() < len {
        return Err(Error::Data(format!("{} is shorter than its checkpoint", path.display())));
    }
    f.set_len(len)?;
    Ok(())
}

/// Records parsed back from a rank file.
#[derive(Debug, Clone, PartialEq)]
pub struct RanksData {
    pub records: Vec<SbcRecord>,
    pub meta: Option<RunMeta>,
    /// The run did not finish or the file ends mid-row.
    pub partial: bool,
    pub warnings: Vec<String>,
}

/// Reads `ranks.csv` plus `state_ranks.csv` and `run_meta.json` from the same
/// directory when present. A truncated final row is dropped with a warning.
pub fn read_ranks(path: &Path) -> Result<RanksData> {
    let text = fs::read_to_string(path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut warnings = Vec::new();
    let mut partial = false;
    let complete_text = match text.rfind('\n') {
        Some(i) if i + 1 < text.len() => {
            partial = true;
            warnings.push("ranks file ends with an incomplete row; it was ignored".to_string());
            &text[..=i]
        }
        _ => text.as_str(),
    };
    let mut reader = csv::Reader::from_reader(complete_text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != RANK_COLUMNS {
        return Err(Error::Data(format!("{} is not a ranks file (unexpected header)", path.display())));
    }
    let mut records: Vec<SbcRecord> = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::Data(format!("row {}: {e}", i + 2)))?;
        let line = i + 2;
        let num = |c: usize| -> Result<f64> {
            row[c].parse::<f64>().map_err(|_| Error::Data(format!("row {line}: bad number {:?}", &row[c])))
        };
        let int = |c: usize| -> Result<u64> {
            row[c].parse::<u64>().map_err(|_| Error::Data(format!("row {line}: bad integer {:?}", &row[c])))
        };
        let opt_num = |c: usize| -> Result<Option<f64>> { if row[c].is_empty() { Ok(None) } else { num(c).map(Some) } };
        let iteration = int(0)?;
        let param = ParamRank {
            name: row[1].to_string(),
            truth: num(2)?,
            rank: if row[3].is_empty() { None } else { Some(int(3)? as usize) },
            weighted_rank: opt_num(4)?,
            ess: opt_num(5)?,
        };
        match records.last_mut() {
            Some(r) if r.iteration == iteration => r.params.push(param),
            _ => records.push(SbcRecord {
                iteration,
                seed: int(6)?,
                support: int(7)? as usize,
                failed: &row[8] == "1",
                error: if row[11].is_empty() { None } else { Some(row[11].to_string()) },
                params: vec![param],
                state_ranks: None,
                accept_rate: num(9)?,
                divergences: int(10)? as usize,
            }),
        }
    }
    let dir = path.parent().unwrap_or(Path::new("."));
    let states_path = dir.join(STATE_RANKS_FILE);
    if states_path.exists() {
        attach_state_ranks(&states_path, &mut records, &mut warnings)?;
    }
    let meta_path = dir.join(RUN_META_FILE);
    let meta: Option<RunMeta> = if meta_path.exists() { Some(read_json(&meta_path)?) } else { None };
    if let Some(m) = &meta {
        if !m.complete || records.len() < m.config.iterations {
            partial = true;
            warnings.push(format!(
                "run incomplete: {} of {} iterations present",
                records.len(),
                m.config.iterations
            ));
        }
    }
    Ok(RanksData {
        records,
        meta,
        partial,
        warnings,
    })
}

fn attach_state_ranks(path: &Path, records: &mut [SbcRecord], warnings: &mut Vec<String>) -> Result<()> {
    let text = fs::read_to_string(path)?;
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    let mut reader = csv::Reader::from_reader(complete.as_bytes());
    let mut by_iter = std::collections::HashMap::new();
    for (i, r) in records.iter().enumerate() {
        by_iter.insert(r.iteration, i);
    }
    for row in reader.records() {
        let row = row?;
        let iteration: u64 = row[0].parse().map_err(|_| Error::Data("state ranks: bad iteration".into()))?;
        let Some(&idx) = by_iter.get(&iteration) else {
            continue;
        };
        let values = row
            .iter()
            .skip(2)
            .map(|f| f.parse::<f64>().map_err(|_| Error::Data(format!("state ranks: bad number {f:?}"))))
            .collect::<Result<Vec<f64>>>()?;
        let entry = records[idx].state_ranks.get_or_insert(StateRanks {
            ranks: Vec::new(),
            weighted: None,
        });
        match &row[1] {
            "rank" => entry.ranks = values.iter().map(|v| *v as u32).collect(),
            "weighted_rank" => entry.weighted = Some(values),
            other => return Err(Error::Data(format!("state ranks: unknown measure {other:?}"))),
        }
    }
    let missing = records.iter().filter(|r| !r.failed && r.state_ranks.is_none()).count();
    if missing > 0 {
        warnings.push(format!("{missing} records have no state ranks"));
    }
    Ok(())
}
