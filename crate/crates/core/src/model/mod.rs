//! The hierarchical attention network: titles are encoded word by word,
//! aggregated per day, then encoded across the delay window before a
//! two-way softmax head. Ablation variants rewire individual stages.

mod network;
mod technical;

pub use network::{
    build_variant, AtLstmModel, AttentionTrace, DayTrace, Forward, Network, NewsAggregator, Prediction, TitleEncoder,
};
pub use technical::{technical_indicators, IndicatorScaler, INDICATOR_COUNT, INDICATOR_NAMES};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::TensorError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("unknown variant `{0}` (expected one of AtLstm, BagAtLstm, WebAtLstm, CnnLstm, TechAtLstm, AbAtLstm)")]
    UnknownVariant(String),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),
    #[error("width mismatch at {junction}: produces {produced}, consumes {consumed}")]
    WidthChain {
        junction: &'static str,
        produced: usize,
        consumed: usize,
    },
    #[error("title has no tokens")]
    EmptyTitle,
    #[error("window holds {got} days, model expects {expected}")]
    WindowLength { expected: usize, got: usize },
    #[error("{0}")]
    MalformedSample(String),
    #[error("variant TechAtLstm needs technical indicators on every sample (sample {0} has none)")]
    MissingTechnical(String),
    #[error("technical indicators need at least {needed} closes, got {got}")]
    InsufficientHistory { needed: usize, got: usize },
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

/// Which stream the day-level attention pools.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum DayAttentionOver {
    /// The day vectors fed to the day-level Bi-LSTM; output width `2u`.
    #[default]
    D,
    /// The day-level Bi-LSTM outputs; output width `2v`.
    H,
}

impl FromStr for DayAttentionOver {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "D" | "d" => Ok(Self::D),
            "H" | "h" => Ok(Self::H),
            other => Err(format!("day_attention_over must be D or H, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyper {
    /// Word embedding width `m`.
    pub word_dim: usize,
    pub char_dim: usize,
    pub filter_widths: Vec<usize>,
    pub maps_per_filter: usize,
    /// News-level hidden size `u`.
    pub u: usize,
    /// Day-level hidden size `v`.
    pub v: usize,
    pub d_a: usize,
    pub r: usize,
    /// Delay window length `N` in calendar days.
    pub window: usize,
    pub lr: f64,
    pub epochs: usize,
    /// Output maps per filter width of the CnnLstm news aggregator.
    pub cnn_lstm_maps: usize,
    pub init_std: f64,
    pub day_attention_over: DayAttentionOver,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            word_dim: 100,
            char_dim: 15,
            filter_widths: vec![1, 3, 5],
            maps_per_filter: 32,
            u: 300,
            v: 300,
            d_a: 600,
            r: 10,
            window: 7,
            lr: 0.04,
            epochs: 200,
            cnn_lstm_maps: 128,
            init_std: 0.1,
            day_attention_over: DayAttentionOver::D,
        }
    }
}

impl Hyper {
    /// Width `n` of the character composition.
    pub fn char_out(&self) -> usize {
        self.filter_widths.len() * self.maps_per_filter
    }

    /// Width of the window representation `V`.
    pub fn window_out(&self) -> usize {
        match self.day_attention_over {
            DayAttentionOver::D => 2 * self.u,
            DayAttentionOver::H => 2 * self.v,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("word_dim", self.word_dim),
            ("char_dim", self.char_dim),
            ("maps_per_filter", self.maps_per_filter),
            ("u", self.u),
            ("v", self.v),
            ("d_a", self.d_a),
            ("r", self.r),
            ("window", self.window),
            ("cnn_lstm_maps", self.cnn_lstm_maps),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, s)| *s == 0) {
            return Err(ModelError::InvalidHyper(format!("{name} must be positive")));
        }
        if self.filter_widths.is_empty() || self.filter_widths.contains(&0) {
            return Err(ModelError::InvalidHyper(
                "filter_widths must be nonempty and positive".into(),
            ));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(ModelError::InvalidHyper(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        if !(self.init_std.is_finite() && self.init_std > 0.0) {
            return Err(ModelError::InvalidHyper(format!(
                "init_std must be positive, got {}",
                self.init_std
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    AtLstm,
    BagAtLstm,
    WebAtLstm,
    CnnLstm,
    TechAtLstm,
    AbAtLstm,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::AtLstm,
        Variant::BagAtLstm,
        Variant::WebAtLstm,
        Variant::CnnLstm,
        Variant::TechAtLstm,
        Variant::AbAtLstm,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Self::AtLstm => "AtLstm",
            Self::BagAtLstm => "BagAtLstm",
            Self::WebAtLstm => "WebAtLstm",
            Self::CnnLstm => "CnnLstm",
            Self::TechAtLstm => "TechAtLstm",
            Self::AbAtLstm => "AbAtLstm",
        }
    }

    /// Display name used in comparison tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Self::AtLstm => "At-LSTM",
            Self::BagAtLstm => "Bag-At-LSTM",
            Self::WebAtLstm => "WEB-At-LSTM",
            Self::CnnLstm => "CNN-LSTM",
            Self::TechAtLstm => "Tech-At-LSTM",
            Self::AbAtLstm => "Ab-At-LSTM",
        }
    }

    pub fn uses_char_cnn(self) -> bool {
        !matches!(self, Self::WebAtLstm)
    }

    pub fn uses_technical(self) -> bool {
        matches!(self, Self::TechAtLstm)
    }

    /// Abstracts replace headlines as the title text.
    pub fn uses_abstracts(self) -> bool {
        matches!(self, Self::AbAtLstm)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Variant {
    type Err = ModelError;

    /// Accepts the tag or display name, ignoring case, `-` and `_`.
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| *c != '-' && *c != '_')
            .flat_map(char::to_lowercase)
            .collect();
        Variant::ALL
            .into_iter()
            .find(|v| v.tag().to_lowercase() == key)
            .ok_or_else(|| ModelError::UnknownVariant(s.to_string()))
    }
}
