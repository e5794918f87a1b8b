//! Loss, the Adadelta optimizer, the epoch loop with best-dev retention,
//! accuracy evaluation and checkpoint files.

mod checkpoint;
mod fit;
mod loss;
mod optim;

pub use checkpoint::{
    decode_checkpoint, decode_header, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, CheckpointError,
    Header, TensorEntry, TensorRole, MAGIC, VERSION,
};
pub use fit::{evaluate, fit, Confusion, EpochRecord, Evaluation, TrainConfig, TrainReport};
pub use loss::{cross_entropy, mean_cross_entropy};
pub use optim::{clip_global_norm, AdadeltaConfig, AdadeltaState};

use std::path::PathBuf;

use thiserror::Error;

use crate::model::ModelError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("label {0:?} is not one-hot")]
    InvalidLabel(Vec<f64>),
    #[error("{0} is empty")]
    EmptySamples(&'static str),
    #[error("non-finite gradient for `{param}`{}", .epoch.map(|e| format!(" in epoch {e}")).unwrap_or_default())]
    NonFiniteGradient { epoch: Option<usize>, param: String },
    #[error("{0}")]
    Invalid(String),
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = TrainError> = std::result::Result<T, E>;
