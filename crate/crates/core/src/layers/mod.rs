//! Neural building blocks: LSTM cell and bidirectional encoder, word and
//! character embeddings, multi-hop self-attention with its learned hop
//! reducer, and the two-way softmax head.
//!
//! Every layer owns [`ParamId`]s into a shared [`ParamStore`] and records
//! its forward computation on a [`Tape`].

mod attention;
mod embedding;
mod lstm;

pub use attention::{attention_over_attention, multi_hop_attention, multi_hop_attention_split, AttentionParams};
pub use embedding::{char_features, embed_word, CharCnnParams, EmbeddingTable};
pub use lstm::{bilstm_encode, lstm_run, lstm_step, LstmParams};

use rand::Rng;

use crate::tensor::{ParamId, ParamStore, Result, Tape, Tensor, Var};

/// Registers a Gaussian-initialised weight.
pub(crate) fn gaussian<R: Rng + ?Sized>(
    store: &mut ParamStore,
    name: String,
    shape: &[usize],
    std: f64,
    rng: &mut R,
) -> Result<ParamId> {
    store.add(name, Tensor::randn(shape, std, rng))
}

pub(crate) fn zeros(store: &mut ParamStore, name: String, shape: &[usize]) -> Result<ParamId> {
    store.add(name, Tensor::zeros(shape))
}

/// Fully connected layer followed by a softmax over the two classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenseParams {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub output: usize,
}

impl DenseParams {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        output: usize,
        std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            w: gaussian(store, format!("{prefix}.w"), &[output, input], std, rng)?,
            b: zeros(store, format!("{prefix}.b"), &[output])?,
            input,
            output,
        })
    }

    /// Affine map `W·v + b` without the softmax.
    pub fn affine(&self, tape: &mut Tape<'_>, v: Var) -> Result<Var> {
        let w = tape.param(self.w);
        let b = tape.param(self.b);
        let z = tape.matvec(w, v)?;
        tape.add(z, b)
    }
}

/// `softmax(W·v + b)`: a probability vector over {up, down}.
pub fn dense_softmax(tape: &mut Tape<'_>, p: &DenseParams, v: Var) -> Result<Var> {
    let z = p.affine(tape, v)?;
    tape.softmax_rows(z)
}
