//! Data ingestion and preparation: headlines and closing prices in,
//! labeled delay-window samples out, plus skip-gram embedding pre-training.

mod labels;
mod news;
mod prices;
mod skipgram;
mod split;
pub mod synthetic;
mod text;
mod vocab;
mod windows;

pub use labels::{make_labels, Direction, Label};
pub use news::{load_news, parse_news, LoadedNews, NewsItem, TextField};
pub use prices::{load_prices, parse_prices, PriceBar};
pub use skipgram::{train_skipgram, SkipGramConfig};
pub use split::{split_by_date, Splits};
pub use text::tokenize;
pub use vocab::{build_vocab, Charset, Vocab, PAD_TOKEN, UNK_TOKEN};
pub use windows::{build_windows, DaySlot, EncodedTitle, WindowConfig, WindowSample, WindowSet};

use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("duplicate price date {0}")]
    DuplicateDate(NaiveDate),
    #[error("non-positive close {close} on {date}")]
    NonPositiveClose { date: NaiveDate, close: f64 },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("need at least {needed} price bars, got {got}")]
    InsufficientBars { needed: usize, got: usize },
    #[error("dev split start {dev} must precede test split start {test}")]
    InvertedSplit { dev: NaiveDate, test: NaiveDate },
    #[error("invalid label {0:?}: expected [1,0] or [0,1]")]
    InvalidLabel(Vec<f64>),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;
