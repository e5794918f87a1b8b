use std::path::Path;

use chrono::{DateTime, Days, FixedOffset, NaiveDate, NaiveTime};
use serde::Deserialize;

use super::{tokenize, CorpusError, Result};

/// Which text field of a news record feeds the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextField {
    #[default]
    Headline,
    Abstract,
}

/// One dated, symbol-tagged news record after cleaning.
#[derive(Debug, Clone, PartialEq)]
pub struct NewsItem {
    pub date: NaiveDate,
    pub timestamp: Option<DateTime<FixedOffset>>,
    pub symbol: String,
    pub headline: String,
    pub abstract_text: Option<String>,
    /// Cleaned tokens of the selected text field; never empty.
    pub tokens: Vec<String>,
}

impl NewsItem {
    /// Day this item counts towards: its date, or the following day when the
    /// timestamp falls at or after the market close (in the timestamp's own
    /// offset).
    pub fn trading_day(&self, market_close: NaiveTime) -> NaiveDate {
        match self.timestamp {
            Some(ts) if ts.time() >= market_close => self.date + Days::new(1),
            _ => self.date,
        }
    }

    /// Sort key within a day: timestamp if present, else start of day.
    pub(crate) fn order_key(&self) -> Option<DateTime<FixedOffset>> {
        self.timestamp
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoadedNews {
    pub items: Vec<NewsItem>,
    /// Records whose selected text was empty after cleaning.
    pub dropped_empty: usize,
}

#[derive(Deserialize)]
struct RawNews {
    date: String,
    symbol: String,
    headline: String,
    #[serde(default)]
    timestamp: Option<String>,
    #[serde(default, rename = "abstract")]
    abstract_text: Option<String>,
}

/// Reads a JSON Lines news file. Blank lines are skipped; unknown keys are
/// ignored.
pub fn load_news(path: &Path, field: TextField) -> Result<LoadedNews> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_news(&text, path, field)
}

pub fn parse_news(text: &str, path: &Path, field: TextField) -> Result<LoadedNews> {
    let mut out = LoadedNews::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| CorpusError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let raw: RawNews = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        let date = NaiveDate::parse_from_str(&raw.date, "%Y-%m-%d")
            .map_err(|e| err(format!("bad date `{}`: {e}", raw.date)))?;
        let timestamp = raw
            .timestamp
            .as_deref()
            .map(DateTime::parse_from_rfc3339)
            .transpose()
            .map_err(|e| err(format!("bad timestamp: {e}")))?;
        let source = match field {
            TextField::Headline => Some(raw.headline.as_str()),
            TextField::Abstract => raw.abstract_text.as_deref(),
        };
        let tokens = source.map(tokenize).unwrap_or_default();
        if tokens.is_empty() {
            out.dropped_empty += 1;
            continue;
        }
        out.items.push(NewsItem {
            date,
            timestamp,
            symbol: raw.symbol,
            headline: raw.headline,
            abstract_text: raw.abstract_text,
            tokens,
        });
    }
    Ok(out)
}
