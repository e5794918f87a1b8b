use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CliError, RunConfig};
use crate::atomic::write_atomic;
use crate::corpus::{
    build_vocab, build_windows, load_news, load_prices, make_labels, split_by_date, train_skipgram, Charset, DaySlot,
    Direction, EncodedTitle, NewsItem, PriceBar, SkipGramConfig, Splits, TextField, Vocab, WindowConfig, WindowSample,
};
use crate::model::{
    build_variant, technical_indicators, AtLstmModel, AttentionTrace, Hyper, IndicatorScaler, Variant, INDICATOR_COUNT,
};
use crate::tensor::{grad_check, GradCheckOptions, GradCheckReport, Tensor};
use crate::training::{
    evaluate, fit, load_checkpoint, save_checkpoint, AdadeltaConfig, AdadeltaState, Evaluation, TrainConfig,
    TrainReport,
};

const ABSTRACT_DIR: &str = "abstract";
const SPLITS: [&str; 3] = ["train", "dev", "test"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

impl SplitCounts {
    fn of(s: &Splits) -> Self {
        Self {
            train: s.train.len(),
            dev: s.dev.len(),
            test: s.test.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabelBalance {
    pub up: usize,
    pub down: usize,
}

impl LabelBalance {
    fn of(samples: &[WindowSample]) -> Self {
        let up = samples.iter().filter(|s| s.label == Direction::Up).count();
        Self {
            up,
            down: samples.len() - up,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepStats {
    pub symbol: String,
    pub news_items: usize,
    pub dropped_empty: usize,
    pub price_bars: usize,
    pub labeled_days: usize,
    /// Labeled days whose window held no news.
    pub skipped_no_news: usize,
    pub dev_start: NaiveDate,
    pub test_start: NaiveDate,
    pub samples: SplitCounts,
    pub label_balance: BTreeMap<String, LabelBalance>,
    pub vocab_size: usize,
    pub charset_size: usize,
    pub vocab_hash: String,
    /// Samples without enough price history for technical indicators.
    pub technical_missing: usize,
    pub technical_scaler: Option<IndicatorScaler>,
    /// Sample counts of the abstract-text dataset, when the news has abstracts.
    pub abstract_samples: Option<SplitCounts>,
}

fn data_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn require_file(what: &str, path: Option<&PathBuf>) -> Result<PathBuf, CliError> {
    let p = path.ok_or_else(|| CliError::Config(format!("no {what} file given")))?;
    if !p.is_file() {
        return Err(CliError::Config(format!("{what} file {} does not exist", p.display())));
    }
    Ok(p.clone())
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("serialisable");
    s.push('\n');
    s.into_bytes()
}

fn to_jsonl<T: Serialize>(rows: &[T]) -> Vec<u8> {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r).expect("serialisable"));
        out.push('\n');
    }
    out.into_bytes()
}

/// Writes every `(path, bytes)` pair, each atomically.
fn write_all(files: Vec<(PathBuf, Vec<u8>)>) -> Result<(), CliError> {
    for (path, bytes) in files {
        write_atomic(&path, &bytes).map_err(|e| data_err(&path, e))?;
    }
    Ok(())
}

pub fn load_samples(path: &Path) -> Result<Vec<WindowSample>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| data_err(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), i + 1))))
        .collect()
}

/// Split boundaries at the 80% and 90% points of the distinct target dates.
fn default_boundaries(samples: &[WindowSample]) -> Result<(NaiveDate, NaiveDate), CliError> {
    let mut dates: Vec<NaiveDate> = samples.iter().map(|s| s.target_date).collect();
    dates.sort();
    dates.dedup();
    let n = dates.len();
    if n < 3 {
        return Err(CliError::Config(format!(
            "only {n} distinct target dates; set dev_start and test_start explicitly"
        )));
    }
    let dev = (n * 8 / 10).clamp(1, n - 2);
    let test = (n * 9 / 10).clamp(dev + 1, n - 1);
    Ok((dates[dev], dates[test]))
}

fn raw_indicators(sample: &WindowSample, bars: &[PriceBar]) -> Option<[f64; INDICATOR_COUNT]> {
    let end = bars.partition_point(|b| b.date <= sample.anchor_date);
    let closes: Vec<f64> = bars[..end].iter().map(|b| b.close).collect();
    technical_indicators(&closes).ok()
}

/// Attaches z-scored indicators (scaler fitted on training samples) to every
/// sample with enough history. Returns the scaler and the missing count.
fn attach_technical(
    samples: &mut [WindowSample],
    bars: &[PriceBar],
    dev_start: NaiveDate,
    scaler: Option<IndicatorScaler>,
) -> (Option<IndicatorScaler>, usize) {
    let raw: Vec<Option<[f64; INDICATOR_COUNT]>> = samples.iter().map(|s| raw_indicators(s, bars)).collect();
    let scaler = scaler.or_else(|| {
        let rows: Vec<[f64; INDICATOR_COUNT]> = samples
            .iter()
            .zip(&raw)
            .filter(|(s, _)| s.target_date < dev_start)
            .filter_map(|(_, r)| *r)
            .collect();
        IndicatorScaler::fit(&rows)
    });
    let mut missing = 0;
    for (s, r) in samples.iter_mut().zip(raw) {
        s.technical = match (r, &scaler) {
            (Some(r), Some(sc)) => Some(sc.transform(&r).to_vec()),
            _ => {
                missing += 1;
                None
            }
        };
    }
    (scaler, missing)
}

fn split_files(dir: &Path, splits: &Splits) -> Vec<(PathBuf, Vec<u8>)> {
    vec![
        (dir.join("train.jsonl"), to_jsonl(&splits.train)),
        (dir.join("dev.jsonl"), to_jsonl(&splits.dev)),
        (dir.join("test.jsonl"), to_jsonl(&splits.test)),
    ]
}

fn select_symbol(items: Vec<NewsItem>, symbol: &str) -> Vec<NewsItem> {
    if symbol == "INDEX" {
        items
    } else {
        items.into_iter().filter(|i| i.symbol == symbol).collect()
    }
}

/// Builds the vocabulary, character set, windowed splits and a stats file
/// in the output directory. Nothing is written unless every step succeeds.
pub fn cmd_prep(cfg: &RunConfig) -> Result<PrepStats, CliError> {
    cfg.validate()?;
    let news_path = require_file("news", cfg.news.as_ref())?;
    let prices_path = require_file("prices", cfg.prices.as_ref())?;
    let hyper = cfg.effective_hyper();

    let headlines = load_news(&news_path, TextField::Headline)?;
    let abstracts = load_news(&news_path, TextField::Abstract)?;
    let news = select_symbol(headlines.items, &cfg.symbol);
    let abstract_news = select_symbol(abstracts.items, &cfg.symbol);
    if news.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no usable headlines for symbol {}",
            news_path.display(),
            cfg.symbol
        )));
    }
    let bars = load_prices(&prices_path, &cfg.symbol)?;
    let labels = make_labels(&bars)?;

    let texts = || news.iter().chain(&abstract_news).map(|i| i.tokens.as_slice());
    let vocab = build_vocab(texts(), cfg.min_count, &cfg.firm_names)?;
    let charset = Charset::build(texts());
    let hash = vocab.fingerprint(&charset);

    let wcfg = WindowConfig {
        window: hyper.window,
        max_titles_per_day: cfg.max_titles_per_day,
        max_tokens_per_title: cfg.max_tokens_per_title,
        market_close: cfg.market_close,
    };
    let mut windows = build_windows(&news, &labels, &vocab, &charset, &cfg.symbol, &wcfg)?;
    if windows.samples.is_empty() {
        return Err(CliError::Data("no labeled day has news inside its window".into()));
    }
    let (dev_start, test_start) = match (cfg.dev_start, cfg.test_start) {
        (Some(d), Some(t)) => (d, t),
        (None, None) => default_boundaries(&windows.samples)?,
        _ => return Err(CliError::Config("set both dev_start and test_start, or neither".into())),
    };
    let (scaler, technical_missing) = attach_technical(&mut windows.samples, &bars, dev_start, None);
    let splits = split_by_date(windows.samples, dev_start, test_start)?;

    let out = &cfg.out;
    let mut files = vec![
        (out.join("vocab.txt"), vocab.to_text().into_bytes()),
        (out.join("charset.txt"), charset.to_text().into_bytes()),
    ];
    files.extend(split_files(out, &splits));

    let abstract_samples = if abstract_news.is_empty() {
        None
    } else {
        let mut aw = build_windows(&abstract_news, &labels, &vocab, &charset, &cfg.symbol, &wcfg)?;
        attach_technical(&mut aw.samples, &bars, dev_start, scaler.clone());
        let asplits = split_by_date(aw.samples, dev_start, test_start)?;
        files.extend(split_files(&out.join(ABSTRACT_DIR), &asplits));
        Some(SplitCounts::of(&asplits))
    };

    let label_balance = [("train", &splits.train), ("dev", &splits.dev), ("test", &splits.test)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), LabelBalance::of(v)))
        .collect();
    let stats = PrepStats {
        symbol: cfg.symbol.clone(),
        news_items: news.len(),
        dropped_empty: headlines.dropped_empty,
        price_bars: bars.len(),
        labeled_days: labels.len(),
        skipped_no_news: windows.skipped_no_news,
        dev_start,
        test_start,
        samples: SplitCounts::of(&splits),
        label_balance,
        vocab_size: vocab.len(),
        charset_size: charset.len(),
        vocab_hash: hash,
        technical_missing,
        technical_scaler: scaler,
        abstract_samples,
    };
    files.push((out.join("prep_stats.json"), to_json(&stats)));
    write_all(files)?;
    Ok(stats)
}

/// Prepared splits plus the vocabulary they were encoded with.
struct Dataset {
    vocab: Vocab,
    charset: Charset,
    hash: String,
    train: Vec<WindowSample>,
    dev: Vec<WindowSample>,
    test: Vec<WindowSample>,
}

impl Dataset {
    fn load(cfg: &RunConfig, variant: Variant) -> Result<Self, CliError> {
        let dir = cfg.data_dir();
        let vocab_path = dir.join("vocab.txt");
        if !vocab_path.is_file() {
            return Err(CliError::Config(format!(
                "no prepared dataset in {} (run `prep` first)",
                dir.display()
            )));
        }
        let vocab = Vocab::load(&vocab_path)?;
        let charset = Charset::load(&dir.join("charset.txt"))?;
        let hash = vocab.fingerprint(&charset);
        let split_dir = if variant.uses_abstracts() {
            let d = dir.join(ABSTRACT_DIR);
            if !d.join("train.jsonl").is_file() {
                return Err(CliError::Data(format!(
                    "{} needs abstracts, but {} has no abstract dataset",
                    variant.display_name(),
                    dir.display()
                )));
            }
            d
        } else {
            dir
        };
        let [train, dev, test] = SPLITS.map(|s| load_samples(&split_dir.join(format!("{s}.jsonl"))));
        let mut ds = Self {
            vocab,
            charset,
            hash,
            train: train?,
            dev: dev?,
            test: test?,
        };
        if variant.uses_technical() {
            for split in [&mut ds.train, &mut ds.dev, &mut ds.test] {
                split.retain(|s| s.technical.is_some());
            }
            if ds.train.is_empty() {
                return Err(CliError::Data(format!(
                    "{} needs technical indicators, but no training sample has the 14 trading days of \
                     price history they require",
                    variant.display_name()
                )));
            }
        }
        Ok(ds)
    }

    fn split(&self, name: &str) -> Result<&[WindowSample], CliError> {
        match name {
            "train" => Ok(&self.train),
            "dev" => Ok(&self.dev),
            "test" => Ok(&self.test),
            other => Err(CliError::Config(format!(
                "unknown split `{other}` (train, dev or test)"
            ))),
        }
    }

    fn counts(&self) -> SplitCounts {
        SplitCounts {
            train: self.train.len(),
            dev: self.dev.len(),
            test: self.test.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingFile {
    pub vocab_hash: String,
    pub rows: usize,
    pub dim: usize,
    /// Row-major `rows × dim` values.
    pub data: Vec<f64>,
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingFile, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| data_err(path, e))?;
    let e: EmbeddingFile = serde_json::from_str(&text).map_err(|e| data_err(path, e))?;
    if e.data.len() != e.rows * e.dim {
        return Err(data_err(
            path,
            format!("{} values for a {} x {} table", e.data.len(), e.rows, e.dim),
        ));
    }
    Ok(e)
}

/// Distinct days of the training split, each title once, as id sequences.
fn training_sentences(train: &[WindowSample]) -> Vec<Vec<u32>> {
    let mut days: BTreeMap<NaiveDate, &DaySlot> = BTreeMap::new();
    for s in train {
        for d in &s.days {
            days.entry(d.date).or_insert(d);
        }
    }
    days.values()
        .flat_map(|d| d.titles.iter().map(|t| t.token_ids.clone()))
        .collect()
}

/// Skip-gram vectors for the prepared vocabulary, trained on each distinct
/// training-period title once. Writes `embeddings.json`.
pub fn cmd_pretrain_embeddings(cfg: &RunConfig) -> Result<EmbeddingFile, CliError> {
    cfg.validate()?;
    let hyper = cfg.effective_hyper();
    let ds = Dataset::load(cfg, Variant::AtLstm)?;
    let sentences = training_sentences(&ds.train);
    let sg = SkipGramConfig {
        dim: hyper.word_dim,
        window: cfg.skipgram.window,
        negatives: cfg.skipgram.negatives,
        epochs: cfg.skipgram.epochs,
        learning_rate: cfg.skipgram.learning_rate,
        init_std: hyper.init_std,
        seed: cfg.seed,
    };
    let table = train_skipgram(&sentences, ds.vocab.len(), &sg)?;
    let file = EmbeddingFile {
        vocab_hash: ds.hash,
        rows: ds.vocab.len(),
        dim: hyper.word_dim,
        data: table.into_data(),
    };
    write_all(vec![(cfg.out.join("embeddings.json"), to_json(&file))])?;
    Ok(file)
}

fn embeddings_path(cfg: &RunConfig) -> Result<Option<PathBuf>, CliError> {
    if let Some(p) = &cfg.embeddings {
        return require_file("embeddings", Some(p)).map(Some);
    }
    Ok(
        [cfg.out.join("embeddings.json"), cfg.data_dir().join("embeddings.json")]
            .into_iter()
            .find(|p| p.is_file()),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutput {
    pub variant: Variant,
    pub model: String,
    pub hyper: Hyper,
    pub seed: u64,
    pub batch_size: usize,
    pub clip_norm: Option<f64>,
    pub vocab_hash: String,
    pub samples: SplitCounts,
    pub param_count: usize,
    pub pretrained_embeddings: bool,
    pub report: TrainReport,
}

fn train_config(cfg: &RunConfig, hyper: &Hyper) -> TrainConfig {
    TrainConfig {
        epochs: hyper.epochs,
        batch_size: cfg.batch_size,
        clip_norm: cfg.clip_norm,
        seed: cfg.seed,
        average_window: cfg.average_window,
        track_train_accuracy: true,
        optimizer: AdadeltaConfig {
            lr: hyper.lr,
            ..AdadeltaConfig::default()
        },
    }
}

fn train_variant(
    cfg: &RunConfig,
    variant: Variant,
    ds: &Dataset,
) -> Result<(AtLstmModel, AdadeltaState, TrainOutput), CliError> {
    let hyper = cfg.effective_hyper();
    let mut model = build_variant(variant, &hyper, ds.vocab.len(), ds.charset.len(), cfg.seed)?;
    let emb = embeddings_path(cfg)?;
    if let Some(path) = &emb {
        let e = read_embeddings(path)?;
        if e.vocab_hash != ds.hash {
            return Err(data_err(
                path,
                format!(
                    "embeddings were trained for vocabulary {}, dataset has {}",
                    e.vocab_hash, ds.hash
                ),
            ));
        }
        if e.dim != hyper.word_dim {
            return Err(CliError::Config(format!(
                "{}: embedding width {} differs from word_dim {}",
                path.display(),
                e.dim,
                hyper.word_dim
            )));
        }
        model.load_embeddings(&Tensor::new(vec![e.rows, e.dim], e.data)?)?;
    }
    let tcfg = train_config(cfg, &hyper);
    let mut state = AdadeltaState::new(&model.params, tcfg.optimizer);
    let report = fit(&mut model, &mut state, &ds.train, &ds.dev, &ds.test, &tcfg)?;
    let out = TrainOutput {
        variant,
        model: variant.display_name().to_string(),
        param_count: model.param_count(),
        hyper,
        seed: cfg.seed,
        batch_size: cfg.batch_size,
        clip_norm: cfg.clip_norm,
        vocab_hash: ds.hash.clone(),
        samples: ds.counts(),
        pretrained_embeddings: emb.is_some(),
        report,
    };
    Ok((model, state, out))
}

/// Trains `cfg.variant` and writes `model.atls` and `train_report.json`.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutput, CliError> {
    cfg.validate()?;
    let ds = Dataset::load(cfg, cfg.variant)?;
    let (model, state, out) = train_variant(cfg, cfg.variant, &ds)?;
    let ckpt = cfg.out.join("model.atls");
    save_checkpoint(&ckpt, &model, Some(&state), &ds.hash)?;
    write_all(vec![(cfg.out.join("train_report.json"), to_json(&out))])?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub variant: Variant,
    pub split: String,
    pub vocab_hash: String,
    pub evaluation: Evaluation,
}

#[derive(Serialize)]
struct AttentionRow<'a> {
    target_date: NaiveDate,
    label: &'static str,
    p_up: f64,
    p_down: f64,
    attention: &'a AttentionTrace,
}

fn direction_name(d: Direction) -> &'static str {
    match d {
        Direction::Up => "up",
        Direction::Down => "down",
    }
}

fn load_model(cfg: &RunConfig) -> Result<(AtLstmModel, String), CliError> {
    let path = cfg.checkpoint_path();
    if !path.is_file() {
        return Err(CliError::Config(format!(
            "checkpoint {} does not exist",
            path.display()
        )));
    }
    let ck = load_checkpoint(&path)?;
    Ok((ck.model, ck.vocab_hash))
}

fn check_hash(model_hash: &str, ds: &Dataset) -> Result<(), CliError> {
    if model_hash != ds.hash {
        return Err(CliError::Data(format!(
            "checkpoint vocabulary {model_hash} does not match dataset vocabulary {}",
            ds.hash
        )));
    }
    Ok(())
}

/// Accuracy and confusion counts on one split; writes `eval_<split>.json`
/// and, with `attention`, `attention_<split>.jsonl`.
pub fn cmd_eval(cfg: &RunConfig, split: &str, attention: bool) -> Result<EvalOutput, CliError> {
    cfg.validate()?;
    let (model, model_hash) = load_model(cfg)?;
    let ds = Dataset::load(cfg, model.variant())?;
    check_hash(&model_hash, &ds)?;
    let samples = ds.split(split)?;
    if samples.is_empty() {
        return Err(CliError::Data(format!("{split} split is empty")));
    }
    let evaluation = evaluate(&model.net, &model.params, samples)?;
    let out = EvalOutput {
        variant: model.variant(),
        split: split.to_string(),
        vocab_hash: ds.hash.clone(),
        evaluation,
    };
    let mut files = vec![(cfg.out.join(format!("eval_{split}.json")), to_json(&out))];
    if attention {
        let mut text = String::new();
        for s in samples {
            let (p, trace) = model.predict_traced(s)?;
            let row = AttentionRow {
                target_date: s.target_date,
                label: direction_name(s.label),
                p_up: p.p_up,
                p_down: p.p_down,
                attention: &trace,
            };
            text.push_str(&serde_json::to_string(&row).expect("serialisable"));
            text.push('\n');
        }
        files.push((cfg.out.join(format!("attention_{split}.jsonl")), text.into_bytes()));
    }
    write_all(files)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub symbol: String,
    pub target_date: NaiveDate,
    pub p_up: f64,
    pub p_down: f64,
    pub direction: String,
}

/// Scores `input` (or the prepared test split) and writes
/// `predictions.jsonl`.
pub fn cmd_predict(cfg: &RunConfig, input: Option<&Path>) -> Result<Vec<PredictionRow>, CliError> {
    cfg.validate()?;
    let (model, model_hash) = load_model(cfg)?;
    let samples = match input {
        Some(p) => {
            require_file("input", Some(&p.to_path_buf()))?;
            load_samples(p)?
        }
        None => {
            let ds = Dataset::load(cfg, model.variant())?;
            check_hash(&model_hash, &ds)?;
            ds.test
        }
    };
    let rows = samples
        .iter()
        .map(|s| {
            let p = model.predict(s)?;
            Ok(PredictionRow {
                symbol: s.symbol.clone(),
                target_date: s.target_date,
                p_up: p.p_up,
                p_down: p.p_down,
                direction: direction_name(p.direction).to_string(),
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    write_all(vec![(cfg.out.join("predictions.jsonl"), to_jsonl(&rows))])?;
    Ok(rows)
}

/// Miniature model for gradient checking: every parameter group of the full
/// network, at widths small enough to probe each coordinate.
fn gradcheck_hyper() -> Hyper {
    Hyper {
        word_dim: 6,
        char_dim: 3,
        filter_widths: vec![1, 3, 5],
        maps_per_filter: 2,
        u: 4,
        v: 4,
        d_a: 6,
        r: 2,
        window: 3,
        init_std: 1.0,
        ..Hyper::default()
    }
}

const GRADCHECK_VOCAB: usize = 20;
const GRADCHECK_CHARSET: usize = 10;

/// One window of three days with two five-token titles on the first and
/// last day; the middle day is empty so the no-news vector is exercised.
fn gradcheck_sample(rng: &mut ChaCha8Rng) -> WindowSample {
    let base = NaiveDate::from_ymd_opt(2014, 1, 1).expect("valid date");
    let title = |rng: &mut ChaCha8Rng| {
        let token_ids: Vec<u32> = (0..5).map(|_| rng.gen_range(2..GRADCHECK_VOCAB as u32)).collect();
        let char_ids = token_ids
            .iter()
            .map(|_| {
                let n = rng.gen_range(2..=6);
                (0..n).map(|_| rng.gen_range(2..GRADCHECK_CHARSET as u32)).collect()
            })
            .collect();
        EncodedTitle { token_ids, char_ids }
    };
    let days = (0..3u64)
        .map(|d| DaySlot {
            date: base + chrono::Days::new(d),
            titles: if d == 1 {
                Vec::new()
            } else {
                vec![title(rng), title(rng)]
            },
        })
        .collect();
    WindowSample {
        target_date: base + chrono::Days::new(3),
        anchor_date: base + chrono::Days::new(2),
        symbol: "INDEX".into(),
        days,
        label: Direction::Up,
        technical: None,
    }
}

/// Finite-difference check of the miniature model's loss on its window.
/// `corrupt` perturbs one analytic output-layer gradient.
pub fn gradcheck_report(h: f64, tol: f64, seed: u64, corrupt: bool) -> Result<GradCheckReport, CliError> {
    let mut model = build_variant(
        Variant::AtLstm,
        &gradcheck_hyper(),
        GRADCHECK_VOCAB,
        GRADCHECK_CHARSET,
        seed,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let sample = gradcheck_sample(&mut rng);
    let corrupt = if corrupt {
        let id = model
            .params
            .id("output.w")
            .ok_or_else(|| CliError::Numeric("miniature model has no output layer".into()))?;
        Some((id, 0, 1e-2))
    } else {
        None
    };
    let opts = GradCheckOptions {
        h,
        tol,
        corrupt,
        ..GradCheckOptions::default()
    };
    let net = model.net.clone();
    let report = grad_check(&mut model.params, &opts, |tape| net.loss(tape, &sample))?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckRun {
    pub hyper: Hyper,
    pub vocab_size: usize,
    pub charset_size: usize,
    pub report: GradCheckReport,
}

/// Runs the miniature gradient check and writes `gradcheck.json`. A failed
/// check is a numeric error, after the report has been written.
pub fn cmd_gradcheck(cfg: &RunConfig, corrupt: bool) -> Result<GradCheckRun, CliError> {
    cfg.validate()?;
    let report = gradcheck_report(cfg.gradcheck.h, cfg.gradcheck.tol, cfg.seed, corrupt)?;
    let run = GradCheckRun {
        hyper: gradcheck_hyper(),
        vocab_size: GRADCHECK_VOCAB,
        charset_size: GRADCHECK_CHARSET,
        report,
    };
    write_all(vec![(cfg.out.join("gradcheck.json"), to_json(&run))])?;
    if !run.report.passed {
        let worst = run
            .report
            .groups
            .iter()
            .filter(|g| g.failures > 0)
            .map(|g| format!("{} ({:.3e})", g.name, g.max_rel_error))
            .collect::<Vec<_>>()
            .join(", ");
        return Err(CliError::Numeric(format!(
            "gradient check failed (tolerance {:.1e}): {worst}",
            run.report.tol
        )));
    }
    Ok(run)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    #[serde(rename = "Model")]
    pub model: String,
    #[serde(rename = "Average Accuracy")]
    pub average_accuracy: Option<f64>,
    #[serde(rename = "Max Accuracy")]
    pub max_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub seed: u64,
    pub epochs: usize,
    pub accuracy_split: Option<String>,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    /// Fixed-width text rendering, accuracies in percent.
    pub fn to_text(&self) -> String {
        let pct = |x: Option<f64>| x.map(|v| format!("{:.2}", 100.0 * v)).unwrap_or_else(|| "n/a".into());
        let width = self.rows.iter().map(|r| r.model.len()).max().unwrap_or(0).max(5);
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<width$}  {:>16}  {:>12}",
            "Model", "Average Accuracy", "Max Accuracy"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<width$}  {:>16}  {:>12}",
                r.model,
                pct(r.average_accuracy),
                pct(r.max_accuracy)
            );
        }
        s
    }
}

/// Trains each of `cfg.variants` with the same seed and writes
/// `ablation.json` and `ablation.txt`.
pub fn cmd_ablate(cfg: &RunConfig) -> Result<AblationTable, CliError> {
    cfg.validate()?;
    if cfg.variants.is_empty() {
        return Err(CliError::Config("no variants requested for ablation".into()));
    }
    let mut cache: BTreeMap<(bool, bool), Dataset> = BTreeMap::new();
    let mut rows = Vec::with_capacity(cfg.variants.len());
    let mut split = None;
    for &v in &cfg.variants {
        let key = (v.uses_abstracts(), v.uses_technical());
        let data = match cache.entry(key) {
            Entry::Occupied(e) => e.into_mut(),
            Entry::Vacant(e) => e.insert(Dataset::load(cfg, v)?),
        };
        let (_, _, out) = train_variant(cfg, v, data)?;
        split = split.or(out.report.accuracy_split.clone());
        rows.push(AblationRow {
            model: v.display_name().to_string(),
            average_accuracy: out.report.average_accuracy,
            max_accuracy: out.report.max_accuracy,
        });
    }
    let table = AblationTable {
        seed: cfg.seed,
        epochs: cfg.effective_hyper().epochs,
        accuracy_split: split,
        rows,
    };
    write_all(vec![
        (cfg.out.join("ablation.json"), to_json(&table)),
        (cfg.out.join("ablation.txt"), table.to_text().into_bytes()),
    ])?;
    Ok(table)
}
