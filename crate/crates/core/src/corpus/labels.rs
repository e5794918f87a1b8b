use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{CorpusError, PriceBar, Result};

/// Direction of the next close. Serialised as the one-hot pair
/// `[1,0]` (up) or `[0,1]` (down).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "[u8; 2]", try_from = "[u8; 2]")]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn one_hot(self) -> [f64; 2] {
        match self {
            Self::Up => [1.0, 0.0],
            Self::Down => [0.0, 1.0],
        }
    }

    pub fn from_one_hot(v: &[f64]) -> Result<Self> {
        match v {
            [a, b] if *a == 1.0 && *b == 0.0 => Ok(Self::Up),
            [a, b] if *a == 0.0 && *b == 1.0 => Ok(Self::Down),
            _ => Err(CorpusError::InvalidLabel(v.to_vec())),
        }
    }

    /// Class index: 0 for up, 1 for down.
    pub fn index(self) -> usize {
        match self {
            Self::Up => 0,
            Self::Down => 1,
        }
    }
}

impl From<Direction> for [u8; 2] {
    fn from(d: Direction) -> Self {
        match d {
            Direction::Up => [1, 0],
            Direction::Down => [0, 1],
        }
    }
}

impl TryFrom<[u8; 2]> for Direction {
    type Error = String;

    fn try_from(v: [u8; 2]) -> Result<Self, String> {
        match v {
            [1, 0] => Ok(Self::Up),
            [0, 1] => Ok(Self::Down),
            other => Err(format!("label {other:?} is not one-hot")),
        }
    }
}

/// Label for target trading day `t+1`, anchored at the previous trading day `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub anchor: NaiveDate,
    pub direction: Direction,
}

/// Labels each bar after the first by comparing its close with the previous
/// bar: strictly higher is up, anything else is down. Keyed by target date.
pub fn make_labels(bars: &[PriceBar]) -> Result<BTreeMap<NaiveDate, Label>> {
    if bars.len() < 2 {
        return Err(CorpusError::InsufficientBars {
            needed: 2,
            got: bars.len(),
        });
    }
    Ok(bars
        .windows(2)
        .map(|w| {
            let direction = if w[1].close > w[0].close {
                Direction::Up
            } else {
                Direction::Down
            };
            (
                w[1].date,
                Label {
                    anchor: w[0].date,
                    direction,
                },
            )
        })
        .collect())
}
