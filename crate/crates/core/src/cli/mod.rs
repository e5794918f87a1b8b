//! Command-line pipeline: `prep`, `pretrain-embeddings`, `train`, `eval`,
//! `predict`, `gradcheck` and `ablate`.
//!
//! Every command reads a [`RunConfig`] (JSON file plus flag overrides),
//! validates it before touching any output, and writes its artifacts
//! atomically. Exit codes: 0 success, 2 configuration error, 3 data error,
//! 4 numeric failure.

mod commands;
mod config;

pub use commands::{
    cmd_ablate, cmd_eval, cmd_gradcheck, cmd_predict, cmd_prep, cmd_pretrain_embeddings, cmd_train, gradcheck_report,
    load_samples, read_embeddings, AblationRow, AblationTable, EmbeddingFile, EvalOutput, GradCheckRun, PredictionRow,
    PrepStats, SplitCounts, TrainOutput,
};
pub use config::{GradCheckSettings, RunConfig, SkipGramSettings};

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::corpus::CorpusError;
use crate::model::{ModelError, Variant};
use crate::tensor::TensorError;
use crate::training::TrainError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TensorError> for CliError {
    fn from(e: TensorError) -> Self {
        match e {
            TensorError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Tensor(t) => t.into(),
            ModelError::UnknownVariant(_) | ModelError::InvalidHyper(_) | ModelError::WidthChain { .. } => {
                CliError::Config(e.to_string())
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Model(m) => m.into(),
            TrainError::Tensor(t) => t.into(),
            TrainError::NonFiniteGradient { .. } => CliError::Numeric(e.to_string()),
            TrainError::Invalid(_) => CliError::Config(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "atlstm", version, about = "Stock movement prediction from news headlines")]
pub struct Cli {
    /// JSON run configuration; flags below override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random draw of the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Model variant: AtLstm, BagAtLstm, WebAtLstm, CnnLstm, TechAtLstm, AbAtLstm.
    #[arg(long, global = true)]
    pub variant: Option<Variant>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Prepared dataset directory (defaults to the output directory).
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the vocabulary and the train/dev/test window datasets.
    Prep(PrepArgs),
    /// Train skip-gram word vectors on the training-period news.
    PretrainEmbeddings,
    /// Train the selected variant and write a checkpoint and report.
    Train(TrainArgs),
    /// Accuracy and confusion counts of a checkpoint on one split.
    Eval(EvalArgs),
    /// Per-sample predictions of a checkpoint.
    Predict(PredictArgs),
    /// Finite-difference check of every gradient of a miniature model.
    Gradcheck(GradcheckArgs),
    /// Train several variants with one seed and tabulate their accuracy.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct PrepArgs {
    #[arg(long)]
    pub news: Option<PathBuf>,
    #[arg(long)]
    pub prices: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// `train`, `dev` or `test`.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Defaults to `<out>/model.atls`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Also write per-sample attention weights to `attention_<split>.jsonl`.
    #[arg(long)]
    pub attention: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Samples to score (JSON Lines); defaults to the prepared test split.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Defaults to `<out>/model.atls`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Maximum relative error; defaults to the config's `gradcheck.tol`.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, hide = true)]
    pub corrupt_gradient: bool,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Comma-separated variant list; defaults to the config's `variants`.
    #[arg(long, value_delimiter = ',')]
    pub variants: Option<Vec<Variant>>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

impl Cli {
    /// Loads the config file (if any) and applies the global overrides.
    pub fn run_config(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(v) = self.variant {
            cfg.variant = v;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if let Some(d) = &self.data {
            cfg.data = Some(d.clone());
        }
        Ok(cfg)
    }
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = cli.run_config()?;
    match &cli.command {
        Command::Prep(a) => {
            if let Some(n) = &a.news {
                cfg.news = Some(n.clone());
            }
            if let Some(p) = &a.prices {
                cfg.prices = Some(p.clone());
            }
            let stats = cmd_prep(&cfg)?;
            println!(
                "prepared {} train / {} dev / {} test samples ({} days skipped without news)",
                stats.samples.train, stats.samples.dev, stats.samples.test, stats.skipped_no_news
            );
        }
        Command::PretrainEmbeddings => {
            let e = cmd_pretrain_embeddings(&cfg)?;
            println!("trained {} x {} word vectors", e.rows, e.dim);
        }
        Command::Train(a) => {
            if let Some(e) = a.epochs {
                cfg.hyper.epochs = e;
            }
            let out = cmd_train(&cfg)?;
            println!(
                "{}: best epoch {}, average accuracy {}, max accuracy {}",
                out.variant.display_name(),
                out.report.best_epoch,
                fmt_opt(out.report.average_accuracy),
                fmt_opt(out.report.max_accuracy)
            );
        }
        Command::Eval(a) => {
            if let Some(c) = &a.checkpoint {
                cfg.checkpoint = Some(c.clone());
            }
            let e = cmd_eval(&cfg, &a.split, a.attention)?;
            println!(
                "{} accuracy {:.4} ({}/{})",
                e.split, e.evaluation.accuracy, e.evaluation.correct, e.evaluation.total
            );
        }
        Command::Predict(a) => {
            if let Some(c) = &a.checkpoint {
                cfg.checkpoint = Some(c.clone());
            }
            let rows = cmd_predict(&cfg, a.input.as_deref())?;
            println!("wrote {} predictions", rows.len());
        }
        Command::Gradcheck(a) => {
            if let Some(t) = a.tol {
                cfg.gradcheck.tol = t;
            }
            let r = cmd_gradcheck(&cfg, a.corrupt_gradient)?;
            println!(
                "gradcheck passed: {} coordinates, max relative error {:.3e}",
                r.report.coords_checked, r.report.max_rel_error
            );
        }
        Command::Ablate(a) => {
            if let Some(v) = &a.variants {
                cfg.variants = v.clone();
            }
            if let Some(e) = a.epochs {
                cfg.hyper.epochs = e;
            }
            let table = cmd_ablate(&cfg)?;
            print!("{}", table.to_text());
        }
    }
    Ok(())
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into())
}

/// Entry point for the binary: parses `std::env::args`, runs, and maps the
/// outcome to an exit code.
pub fn main_with_args() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
