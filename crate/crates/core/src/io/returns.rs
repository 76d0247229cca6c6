use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::model::ReturnSeries;

/// A parsed returns file: demeaned log returns and the dates they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsData {
    /// Date of each return (for prices, the later of the two days).
    pub dates: Vec<NaiveDate>,
    pub returns: ReturnSeries,
    pub from_prices: bool,
    /// Mean removed from the raw returns.
    pub mean: f64,
}

pub fn read_returns_csv(path: &Path) -> Result<ReturnsData> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    parse_returns_csv(&text)
}

/// CSV with a `date` column (ISO-8601) and either a `price` or a `return`
/// column. Prices become log returns. Returns are demeaned either way.
pub fn parse_returns_csv(text: &str) -> Result<ReturnsData> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::Data(e.to_string()))?.clone();
    let find = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let date_col = find("date").ok_or_else(|| Error::Data("missing `date` column".into()))?;
    let (value_col, from_prices) = match (find("price"), find("return")) {
        (Some(_), Some(_)) => return Err(Error::Data("give either a `price` or a `return` column, not both".into())),
        (Some(c), None) => (c, true),
        (None, Some(c)) => (c, false),
        (None, None) => return Err(Error::Data("missing `price` or `return` column".into())),
    };
    let mut dates = Vec::new();
    let mut values = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Data(format!("line {line}: {e}")))?;
        let field = |c: usize| row.get(c).ok_or_else(|| Error::Data(format!("line {line}: missing field")));
        let date = NaiveDate::parse_from_str(field(date_col)?, "%Y-%m-%d")
            .map_err(|e| Error::Data(format!("line {line}: bad date {:?}: {e}", field(date_col).unwrap_or(""))))?;
        let raw = field(value_col)?;
        let value: f64 = raw
            .parse()
            .map_err(|_| Error::Data(format!("line {line}: not a number: {raw:?}")))?;
        if !value.is_finite() || (from_prices && value <= 0.0) {
            return Err(Error::Data(format!("line {line}: invalid value {value}")));
        }
        if let Some(prev) = dates.last() {
            if date <= *prev {
                return Err(Error::Data(format!("line {line}: dates must be strictly increasing ({date} after {prev})")));
            }
        }
        dates.push(date);
        values.push(value);
    }
    let (dates, raw) = if from_prices {
        if values.len() < 2 {
            return Err(Error::Data("need at least 2 prices".into()));
        }
        let r = values.windows(2).map(|w| (w[1] / w[0]).ln()).collect::<Vec<_>>();
        (dates[1..].to_vec(), r)
    } else {
        if values.is_empty() {
            return Err(Error::Data("need at least 1 return".into()));
        }
        (dates, values)
    };
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    let returns = ReturnSeries::new(raw.iter().map(|r| r - mean).collect())?;
    Ok(ReturnsData {
        dates,
        returns,
        from_prices,
        mean,
    })
}
