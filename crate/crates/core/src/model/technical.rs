use serde::{Deserialize, Serialize};

use super::{ModelError, Result};

pub const INDICATOR_COUNT: usize = 7;

pub const INDICATOR_NAMES: [&str; INDICATOR_COUNT] = [
    "stochastic_k",
    "stochastic_d",
    "momentum_10",
    "roc_10",
    "williams_r_14",
    "ad_oscillator",
    "disparity_5",
];

const RANGE: usize = 14;
const LAG: usize = 10;

/// Highest and lowest close of the `RANGE` closes ending at `end` (inclusive).
fn range_at(closes: &[f64], end: usize) -> (f64, f64) {
    closes[end + 1 - RANGE..=end]
        .iter()
        .fold((f64::NEG_INFINITY, f64::INFINITY), |(hi, lo), &c| {
            (hi.max(c), lo.min(c))
        })
}

fn stochastic_k(closes: &[f64], end: usize) -> f64 {
    let (hi, lo) = range_at(closes, end);
    if hi == lo {
        50.0
    } else {
        100.0 * (closes[end] - lo) / (hi - lo)
    }
}

/// Seven oscillators computed from the closes ending at day `t`, unscaled.
///
/// Only closes are available, so period highs and lows are the extreme
/// closes of the trailing 14 days. Order follows [`INDICATOR_NAMES`]:
///
/// - `%K = 100·(C_t − L14)/(H14 − L14)`, 50 on a flat range
/// - `%D`: mean of `%K` over the last three days (fewer if history is short)
/// - `Momentum = C_t − C_{t−10}`
/// - `ROC = C_t / C_{t−10}`
/// - `%R = −100·(H14 − C_t)/(H14 − L14)`, −50 on a flat range
/// - `A/D = (H14 − C_{t−1})/(H14 − L14)`, 0.5 on a flat range
/// - `Disparity = C_t / mean(C_{t−4..=t})`
pub fn technical_indicators(closes: &[f64]) -> Result<[f64; INDICATOR_COUNT]> {
    if closes.len() < RANGE {
        return Err(ModelError::InsufficientHistory {
            needed: RANGE,
            got: closes.len(),
        });
    }
    let t = closes.len() - 1;
    let c = closes[t];
    let (hi, lo) = range_at(closes, t);
    let span = hi - lo;

    let k = stochastic_k(closes, t);
    let d_days = (closes.len() - RANGE + 1).min(3);
    let d = (0..d_days).map(|back| stochastic_k(closes, t - back)).sum::<f64>() / d_days as f64;
    let momentum = c - closes[t - LAG];
    let roc = c / closes[t - LAG];
    let (williams, ad) = if span == 0.0 {
        (-50.0, 0.5)
    } else {
        (-100.0 * (hi - c) / span, (hi - closes[t - 1]) / span)
    };
    let ma5 = closes[t - 4..=t].iter().sum::<f64>() / 5.0;
    let disparity = c / ma5;
    Ok([k, d, momentum, roc, williams, ad, disparity])
}

/// Per-indicator z-score standardisation fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorScaler {
    pub mean: [f64; INDICATOR_COUNT],
    pub std: [f64; INDICATOR_COUNT],
}

impl IndicatorScaler {
    /// Population mean and standard deviation; a zero deviation scales by 1.
    pub fn fit(rows: &[[f64; INDICATOR_COUNT]]) -> Option<Self> {
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        let mut mean = [0.0; INDICATOR_COUNT];
        let mut std = [0.0; INDICATOR_COUNT];
        for j in 0..INDICATOR_COUNT {
            mean[j] = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
            std[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        Some(Self { mean, std })
    }

    pub fn transform(&self, row: &[f64; INDICATOR_COUNT]) -> [f64; INDICATOR_COUNT] {
        std::array::from_fn(|j| (row[j] - self.mean[j]) / self.std[j])
    }
}
