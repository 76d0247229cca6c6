use std::path::Path;

use super::atomic_write;
use crate::draws::PosteriorDraws;
use crate::error::{Error, Result};

/// One row per draw: `chain, draw`, the parameter columns, and `log_weight`
/// when the chains carry importance weights.
pub fn write_draws_csv(path: &Path, chains: &[PosteriorDraws]) -> Result<()> {
    let Some(first) = chains.first() else {
        return Err(Error::Data("no chains to write".into()));
    };
    if chains.iter().any(|c| c.param_names != first.param_names) {
        return Err(Error::Data("chains disagree on parameter names".into()));
    }
    let weighted = chains.iter().all(|c| c.log_weights.is_some());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["chain".to_string(), "draw".to_string()];
    header.extend(first.param_names.iter().cloned());
    if weighted {
        header.push("log_weight".into());
    }
    w.write_record(&header)?;
    for (c, chain) in chains.iter().enumerate() {
        for (b, row) in chain.draws.iter().enumerate() {
            let mut rec = vec![(c + 1).to_string(), (b + 1).to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            if weighted {
                rec.push(chain.log_weights.as_ref().unwrap()[b].to_string());
            }
            w.write_record(&rec)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    atomic_write(path, &bytes)
}

/// Reads a file written by [`write_draws_csv`] back into one draw set per chain.
pub fn read_draws_csv(path: &Path) -> Result<Vec<PosteriorDraws>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.len() < 3 || header[0] != "chain" || header[1] != "draw" {
        return Err(Error::Data("draws file must start with `chain,draw`".into()));
    }
    let weighted = header.last().map(String::as_str) == Some("log_weight");
    let end = if weighted { header.len() - 1 } else { header.len() };
    let names = header[2..end].to_vec();
    let mut chains: Vec<PosteriorDraws> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let nums = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| Error::Data(format!("not a number: {f:?}"))))
            .collect::<Result<Vec<f64>>>()?;
        let c = nums[0] as usize;
        if c == 0 || c > chains.len() + 1 {
            return Err(Error::Data(format!("unexpected chain index {c}")));
        }
        if c == chains.len() + 1 {
            let mut d = PosteriorDraws::new(&[]);
            d.param_names = names.clone();
            d.log_weights = weighted.then(Vec::new);
            chains.push(d);
        }
        let chain = &mut chains[c - 1];
        chain.draws.push(nums[2..end].to_vec());
        if let Some(lw) = chain.log_weights.as_mut() {
            lw.push(nums[end]);
        }
    }
    Ok(chains)
}
