use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{CorpusError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceBar {
    pub date: NaiveDate,
    pub close: f64,
}

#[derive(Deserialize)]
struct RawBar {
    date: String,
    close: String,
}

/// Reads a `date,close` CSV for one symbol, sorted ascending by date.
pub fn load_prices(path: &Path, symbol: &str) -> Result<Vec<PriceBar>> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_prices(&text, path, symbol)
}

pub fn parse_prices(text: &str, path: &Path, symbol: &str) -> Result<Vec<PriceBar>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| parse_err(path, 1, e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["date", "close"] {
        return Err(parse_err(path, 1, format!("{symbol}: expected header `date,close`")));
    }
    let mut bars = Vec::new();
    for (i, row) in reader.deserialize::<RawBar>().enumerate() {
        let line = i + 2;
        let raw = row.map_err(|e| parse_err(path, line, e.to_string()))?;
        let date = NaiveDate::parse_from_str(&raw.date, "%Y-%m-%d")
            .map_err(|e| parse_err(path, line, format!("bad date `{}`: {e}", raw.date)))?;
        let close: f64 = raw
            .close
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad close `{}`", raw.close)))?;
        if !(close > 0.0) || !close.is_finite() {
            return Err(CorpusError::NonPositiveClose { date, close });
        }
        bars.push(PriceBar { date, close });
    }
    bars.sort_by_key(|b| b.date);
    if let Some(w) = bars.windows(2).find(|w| w[0].date == w[1].date) {
        return Err(CorpusError::DuplicateDate(w[0].date));
    }
    Ok(bars)
}

fn parse_err(path: &Path, line: usize, msg: String) -> CorpusError {
    CorpusError::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    }
}
