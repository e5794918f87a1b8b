use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveTime};
use serde::{Deserialize, Serialize};

use super::CliError;
use crate::model::{DayAttentionOver, Hyper, Variant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SkipGramSettings {
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for SkipGramSettings {
    fn default() -> Self {
        Self {
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradCheckSettings {
    pub h: f64,
    pub tol: f64,
}

impl Default for GradCheckSettings {
    fn default() -> Self {
        Self { h: 1e-5, tol: 1e-4 }
    }
}

/// Everything a run needs. Loaded from JSON; command-line flags override
/// individual fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// News file (JSON Lines).
    pub news: Option<PathBuf>,
    /// Price file (CSV with `date,close`).
    pub prices: Option<PathBuf>,
    /// `INDEX` uses all news; any other symbol filters news to that symbol.
    pub symbol: String,
    /// Directory holding prepared datasets and the vocabulary.
    pub data: Option<PathBuf>,
    /// Output directory for every command.
    pub out: PathBuf,
    /// Checkpoint to read (eval, predict). Defaults to `<out>/model.atls`.
    pub checkpoint: Option<PathBuf>,
    /// Pre-trained word vectors. Defaults to `<data>/embeddings.json` when present.
    pub embeddings: Option<PathBuf>,
    pub variant: Variant,
    pub variants: Vec<Variant>,
    pub hyper: Hyper,
    /// Overrides `hyper.day_attention_over` when set.
    pub day_attention_over: Option<DayAttentionOver>,
    pub dev_start: Option<NaiveDate>,
    pub test_start: Option<NaiveDate>,
    pub seed: u64,
    pub batch_size: usize,
    /// Global gradient-norm clip; `null` disables clipping.
    pub clip_norm: Option<f64>,
    pub average_window: usize,
    pub min_count: usize,
    pub max_titles_per_day: usize,
    pub max_tokens_per_title: usize,
    #[serde(with = "hhmm")]
    pub market_close: NaiveTime,
    pub firm_names: Vec<String>,
    pub skipgram: SkipGramSettings,
    pub gradcheck: GradCheckSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            news: None,
            prices: None,
            symbol: "INDEX".into(),
            data: None,
            out: PathBuf::from("out"),
            checkpoint: None,
            embeddings: None,
            variant: Variant::AtLstm,
            variants: Vec::new(),
            hyper: Hyper::default(),
            day_attention_over: None,
            dev_start: None,
            test_start: None,
            seed: 0,
            batch_size: 32,
            clip_norm: Some(5.0),
            average_window: 50,
            min_count: 2,
            max_titles_per_day: 40,
            max_tokens_per_title: 30,
            market_close: NaiveTime::from_hms_opt(16, 0, 0).expect("valid time"),
            firm_names: Vec::new(),
            skipgram: SkipGramSettings::default(),
            gradcheck: GradCheckSettings::default(),
        }
    }
}

mod hhmm {
    use chrono::NaiveTime;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &NaiveTime, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&t.format("%H:%M").to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveTime, D::Error> {
        let s = String::deserialize(d)?;
        NaiveTime::parse_from_str(&s, "%H:%M")
            .or_else(|_| NaiveTime::parse_from_str(&s, "%H:%M:%S"))
            .map_err(serde::de::Error::custom)
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data.clone().unwrap_or_else(|| self.out.clone())
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out.join("model.atls"))
    }

    /// Model hyperparameters with the top-level overrides applied.
    pub fn effective_hyper(&self) -> Hyper {
        let mut h = self.hyper.clone();
        if let Some(d) = self.day_attention_over {
            h.day_attention_over = d;
        }
        h
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.effective_hyper()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.batch_size == 0 {
            return Err(CliError::Config("batch_size must be positive".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c.is_finite() && c > 0.0) {
                return Err(CliError::Config(format!("clip_norm must be positive, got {c}")));
            }
        }
        if self.average_window == 0 {
            return Err(CliError::Config("average_window must be positive".into()));
        }
        if self.min_count == 0 || self.max_titles_per_day == 0 || self.max_tokens_per_title == 0 {
            return Err(CliError::Config(
                "min_count and per-day/title caps must be positive".into(),
            ));
        }
        if !(self.gradcheck.h > 0.0 && self.gradcheck.tol > 0.0) {
            return Err(CliError::Config("gradcheck h and tol must be positive".into()));
        }
        Ok(())
    }
}
