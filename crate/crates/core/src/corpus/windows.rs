use std::collections::BTreeMap;

use chrono::{Days, NaiveDate, NaiveTime};
use serde::{Deserialize, Serialize};

use super::{Charset, CorpusError, Direction, Label, NewsItem, Result, Vocab};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedTitle {
    pub token_ids: Vec<u32>,
    /// Character ids of each token, parallel to `token_ids`.
    pub char_ids: Vec<Vec<u32>>,
}

impl EncodedTitle {
    pub fn encode(tokens: &[String], vocab: &Vocab, charset: &Charset, max_tokens: usize) -> Self {
        let tokens = &tokens[..tokens.len().min(max_tokens)];
        Self {
            token_ids: tokens.iter().map(|t| vocab.id(t)).collect(),
            char_ids: tokens.iter().map(|t| charset.encode(t)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }
}

/// Titles of one calendar day in a window. An empty slot marks a day
/// without news.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DaySlot {
    pub date: NaiveDate,
    pub titles: Vec<EncodedTitle>,
}

/// One training example: the delay window ending at the anchor day `t` and
/// the direction of the close on the target day `t+1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSample {
    pub target_date: NaiveDate,
    pub anchor_date: NaiveDate,
    pub symbol: String,
    pub days: Vec<DaySlot>,
    pub label: Direction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub technical: Option<Vec<f64>>,
}

impl WindowSample {
    /// Latest date holding at least one title.
    pub fn max_news_date(&self) -> Option<NaiveDate> {
        self.days.iter().filter(|d| !d.titles.is_empty()).map(|d| d.date).max()
    }

    pub fn title_count(&self) -> usize {
        self.days.iter().map(|d| d.titles.len()).sum()
    }

    /// Checks slot count, non-empty titles and id ranges.
    pub fn validate(&self, window: usize, vocab_size: usize, charset_size: usize) -> Result<()> {
        let bad = |msg: String| {
            Err(CorpusError::Invalid(format!(
                "sample {} {}: {msg}",
                self.symbol, self.target_date
            )))
        };
        if self.days.len() != window {
            return bad(format!("expected {window} day slots, got {}", self.days.len()));
        }
        for day in &self.days {
            for title in &day.titles {
                if title.is_empty() || title.char_ids.len() != title.token_ids.len() {
                    return bad("malformed title".into());
                }
                if title.token_ids.iter().any(|&t| t as usize >= vocab_size) {
                    return bad(format!("token id out of range for vocabulary of {vocab_size}"));
                }
                if title
                    .char_ids
                    .iter()
                    .any(|cs| cs.is_empty() || cs.iter().any(|&c| c as usize >= charset_size))
                {
                    return bad(format!("char id out of range for charset of {charset_size}"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowConfig {
    /// Number of calendar days per window.
    pub window: usize,
    pub max_titles_per_day: usize,
    pub max_tokens_per_title: usize,
    pub market_close: NaiveTime,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            window: 7,
            max_titles_per_day: 40,
            max_tokens_per_title: 30,
            market_close: NaiveTime::from_hms_opt(16, 0, 0).expect("valid time"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WindowSet {
    pub samples: Vec<WindowSample>,
    /// Labeled days whose window held no news at all.
    pub skipped_no_news: usize,
}

/// One sample per labeled target day whose window contains any news.
///
/// Window slots cover the `window` calendar days ending at the anchor day.
/// Within a day, titles are ordered by timestamp (untimed first, then input
/// order) and the earliest `max_titles_per_day` are kept.
pub fn build_windows(
    news: &[NewsItem],
    labels: &BTreeMap<NaiveDate, Label>,
    vocab: &Vocab,
    charset: &Charset,
    symbol: &str,
    cfg: &WindowConfig,
) -> Result<WindowSet> {
    if cfg.window == 0 {
        return Err(CorpusError::Invalid("window must be at least one day".into()));
    }
    let mut by_day: BTreeMap<NaiveDate, Vec<&NewsItem>> = BTreeMap::new();
    for item in news {
        by_day.entry(item.trading_day(cfg.market_close)).or_default().push(item);
    }
    let encoded: BTreeMap<NaiveDate, Vec<EncodedTitle>> = by_day
        .into_iter()
        .map(|(day, mut items)| {
            items.sort_by_key(|i| i.order_key());
            let titles = items
                .into_iter()
                .take(cfg.max_titles_per_day)
                .map(|i| EncodedTitle::encode(&i.tokens, vocab, charset, cfg.max_tokens_per_title))
                .collect();
            (day, titles)
        })
        .collect();

    let mut out = WindowSet::default();
    for (&target, label) in labels {
        let first = label.anchor - Days::new(cfg.window as u64 - 1);
        let days: Vec<DaySlot> = first
            .iter_days()
            .take(cfg.window)
            .map(|date| DaySlot {
                date,
                titles: encoded.get(&date).cloned().unwrap_or_default(),
            })
            .collect();
        if days.iter().all(|d| d.titles.is_empty()) {
            out.skipped_no_news += 1;
            continue;
        }
        out.samples.push(WindowSample {
            target_date: target,
            anchor_date: label.anchor,
            symbol: symbol.to_string(),
            days,
            label: label.direction,
            technical: None,
        });
    }
    Ok(out)
}
