//! Generated corpora with known structure, for smoke tests and demos.

use chrono::{Days, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{build_vocab, Charset, DaySlot, Direction, EncodedTitle, Vocab, WindowSample};

pub const UP_KEYWORD: &str = "surge";
pub const DOWN_KEYWORD: &str = "plunge";

const FILLER: [&str; 40] = [
    "market",
    "shares",
    "investors",
    "trading",
    "bank",
    "oil",
    "report",
    "quarter",
    "earnings",
    "fund",
    "index",
    "bond",
    "rates",
    "dollar",
    "euro",
    "tech",
    "retail",
    "profit",
    "sales",
    "deal",
    "merger",
    "chief",
    "analyst",
    "outlook",
    "growth",
    "exports",
    "data",
    "policy",
    "stocks",
    "futures",
    "price",
    "energy",
    "gold",
    "firm",
    "group",
    "week",
    "session",
    "says",
    "update",
    "talks",
];

#[derive(Debug, Clone, PartialEq)]
pub struct KeywordConfig {
    pub samples: usize,
    pub window: usize,
    pub max_titles_per_day: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    /// Probability that a window day carries news at all.
    pub news_day_rate: f64,
    pub seed: u64,
}

impl Default for KeywordConfig {
    fn default() -> Self {
        Self {
            samples: 400,
            window: 7,
            max_titles_per_day: 3,
            min_tokens: 3,
            max_tokens: 6,
            news_day_rate: 0.6,
            seed: 0,
        }
    }
}

/// Token-level windows before encoding: `days[d][t]` is a title.
#[derive(Debug, Clone, PartialEq)]
pub struct RawWindow {
    pub days: Vec<Vec<Vec<String>>>,
    pub label: Direction,
}

/// Windows whose label is fixed by a single keyword: exactly one title in
/// each window contains `surge` (up) or `plunge` (down); every other token
/// is neutral filler. Labels alternate so classes are balanced.
pub fn keyword_windows(cfg: &KeywordConfig) -> Vec<RawWindow> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let filler = |rng: &mut ChaCha8Rng| -> Vec<String> {
        let n = rng.gen_range(cfg.min_tokens..=cfg.max_tokens);
        (0..n)
            .map(|_| FILLER.choose(rng).expect("nonempty").to_string())
            .collect()
    };
    (0..cfg.samples)
        .map(|i| {
            let label = if i % 2 == 0 { Direction::Up } else { Direction::Down };
            let mut days: Vec<Vec<Vec<String>>> = (0..cfg.window)
                .map(|_| {
                    if rng.gen_bool(cfg.news_day_rate) {
                        let k = rng.gen_range(1..=cfg.max_titles_per_day);
                        (0..k).map(|_| filler(&mut rng)).collect()
                    } else {
                        Vec::new()
                    }
                })
                .collect();
            let day = rng.gen_range(0..cfg.window);
            if days[day].is_empty() {
                days[day].push(filler(&mut rng));
            }
            let title = rng.gen_range(0..days[day].len());
            let pos = rng.gen_range(0..=days[day][title].len());
            let key = if label == Direction::Up {
                UP_KEYWORD
            } else {
                DOWN_KEYWORD
            };
            days[day][title].insert(pos, key.to_string());
            RawWindow { days, label }
        })
        .collect()
}

/// Builds a vocabulary (min count 1) and charset covering `windows`.
pub fn vocab_for(windows: &[RawWindow]) -> (Vocab, Charset) {
    let titles: Vec<&[String]> = windows
        .iter()
        .flat_map(|w| w.days.iter().flatten().map(Vec::as_slice))
        .collect();
    let vocab = build_vocab(titles.iter().copied(), 1, &[]).expect("generated corpus is nonempty");
    let charset = Charset::build(titles.iter().copied());
    (vocab, charset)
}

/// Encodes windows into dated samples, one calendar day apart.
pub fn encode_windows(windows: &[RawWindow], vocab: &Vocab, charset: &Charset, start: NaiveDate) -> Vec<WindowSample> {
    windows
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let first = start + Days::new(i as u64);
            let n = w.days.len() as u64;
            WindowSample {
                target_date: first + Days::new(n),
                anchor_date: first + Days::new(n - 1),
                symbol: "SYNTH".into(),
                days: w
                    .days
                    .iter()
                    .enumerate()
                    .map(|(d, titles)| DaySlot {
                        date: first + Days::new(d as u64),
                        titles: titles
                            .iter()
                            .map(|t| EncodedTitle::encode(t, vocab, charset, usize::MAX))
                            .collect(),
                    })
                    .collect(),
                label: w.label,
                technical: None,
            }
        })
        .collect()
}

/// Two disjoint topic vocabularies; each document samples only its topic.
/// Returns `(documents, topic of each document)`.
pub fn two_topic_documents(docs_per_topic: usize, words_per_doc: usize, seed: u64) -> (Vec<Vec<String>>, Vec<usize>) {
    const TOPICS: [[&str; 10]; 2] = [
        [
            "oil", "crude", "barrel", "opec", "refinery", "pipeline", "drilling", "brent", "gasoline", "output",
        ],
        [
            "chip",
            "software",
            "cloud",
            "silicon",
            "device",
            "startup",
            "server",
            "app",
            "processor",
            "digital",
        ],
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut docs = Vec::with_capacity(2 * docs_per_topic);
    let mut topics = Vec::with_capacity(2 * docs_per_topic);
    for i in 0..2 * docs_per_topic {
        let topic = i % 2;
        docs.push(
            (0..words_per_doc)
                .map(|_| TOPICS[topic].choose(&mut rng).expect("nonempty").to_string())
                .collect(),
        );
        topics.push(topic);
    }
    (docs, topics)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exactly_one_keyword_per_window() {
        let w = keyword_windows(&KeywordConfig {
            samples: 50,
            ..Default::default()
        });
        for win in &w {
            let tokens: Vec<&String> = win.days.iter().flatten().flatten().collect();
            let up = tokens.iter().filter(|t| **t == UP_KEYWORD).count();
            let down = tokens.iter().filter(|t| **t == DOWN_KEYWORD).count();
            assert_eq!(up + down, 1);
            assert_eq!(up == 1, win.label == Direction::Up);
            assert_eq!(win.days.len(), 7);
        }
    }

    #[test]
    fn encoding_is_valid() {
        let w = keyword_windows(&KeywordConfig {
            samples: 20,
            ..Default::default()
        });
        let (v, c) = vocab_for(&w);
        assert!(v.contains(UP_KEYWORD) && v.contains(DOWN_KEYWORD));
        let s = encode_windows(&w, &v, &c, NaiveDate::from_ymd_opt(2014, 1, 1).unwrap());
        for x in &s {
            x.validate(7, v.len(), c.len()).unwrap();
            assert!(x.max_news_date().unwrap() < x.target_date);
        }
    }

    #[test]
    fn deterministic() {
        let cfg = KeywordConfig {
            samples: 10,
            seed: 5,
            ..Default::default()
        };
        assert_eq!(keyword_windows(&cfg), keyword_windows(&cfg));
        assert_eq!(two_topic_documents(3, 5, 1), two_topic_documents(3, 5, 1));
    }
}
