use rand::Rng;

use super::{gaussian, zeros};
use crate::tensor::{ParamId, ParamStore, Result, Tape, Tensor, TensorError, Var};

/// Word embedding matrix `[vocab × dim]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbeddingTable {
    pub table: ParamId,
    pub vocab_size: usize,
    pub dim: usize,
}

impl EmbeddingTable {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        vocab_size: usize,
        dim: usize,
        std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            table: gaussian(store, name.to_string(), &[vocab_size, dim], std, rng)?,
            vocab_size,
            dim,
        })
    }

    pub fn set_trainable(&self, store: &mut ParamStore, trainable: bool) {
        store.get_mut(self.table).trainable = trainable;
    }

    /// Replaces the table with pre-trained vectors of identical shape.
    pub fn load(&self, store: &mut ParamStore, vectors: &Tensor) -> Result<()> {
        let current = store.value(self.table).shape().to_vec();
        if vectors.shape() != current.as_slice() {
            return Err(TensorError::Shape {
                op: "embedding_load",
                left: current,
                right: vectors.shape().to_vec(),
            });
        }
        store.get_mut(self.table).value = vectors.clone();
        Ok(())
    }

    pub fn lookup(&self, tape: &mut Tape<'_>, id: usize) -> Result<Var> {
        tape.gather_row(self.table, id)
    }
}

/// Character embeddings followed by convolution banks with max-pooling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharCnnParams {
    pub table: ParamId,
    /// `(width, filters [width × char_dim × maps], bias [maps])` per bank.
    pub banks: Vec<(usize, ParamId, ParamId)>,
    pub charset_size: usize,
    pub char_dim: usize,
    pub maps: usize,
    pub pad_id: u32,
}

impl CharCnnParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        charset_size: usize,
        char_dim: usize,
        widths: &[usize],
        maps: usize,
        pad_id: u32,
        std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let table = gaussian(store, format!("{prefix}.table"), &[charset_size, char_dim], std, rng)?;
        let banks = widths
            .iter()
            .map(|&w| {
                let f = gaussian(store, format!("{prefix}.w{w}"), &[w, char_dim, maps], std, rng)?;
                let b = zeros(store, format!("{prefix}.b{w}"), &[maps])?;
                Ok((w, f, b))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            table,
            banks,
            charset_size,
            char_dim,
            maps,
            pad_id,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.banks.len() * self.maps
    }

    fn widest(&self) -> usize {
        self.banks.iter().map(|b| b.0).max().unwrap_or(1)
    }
}

/// Character composition of one word: `[maps × banks]` features.
///
/// Words shorter than the widest filter are right-padded with the pad
/// character so every bank sees at least one window.
pub fn char_features(tape: &mut Tape<'_>, cnn: &CharCnnParams, char_ids: &[u32]) -> Result<Var> {
    if char_ids.is_empty() {
        return Err(TensorError::Invalid {
            op: "char_features",
            msg: "word has no characters".into(),
        });
    }
    let len = char_ids.len().max(cnn.widest());
    let rows = (0..len)
        .map(|i| {
            let id = char_ids.get(i).copied().unwrap_or(cnn.pad_id) as usize;
            tape.gather_row(cnn.table, id)
        })
        .collect::<Result<Vec<_>>>()?;
    let seq = tape.stack_rows(&rows)?;
    let pooled = cnn
        .banks
        .iter()
        .map(|&(_, f, b)| {
            let f = tape.param(f);
            let b = tape.param(b);
            let conv = tape.conv1d_valid(seq, f, b)?;
            let act = tape.tanh(conv)?;
            tape.max_pool_time(act)
        })
        .collect::<Result<Vec<_>>>()?;
    tape.concat(&pooled, 0)
}

/// `e = [w; c]`: word vector, then character composition when `cnn` is set.
pub fn embed_word(
    tape: &mut Tape<'_>,
    table: &EmbeddingTable,
    cnn: Option<&CharCnnParams>,
    vocab_id: u32,
    char_ids: &[u32],
) -> Result<Var> {
    let w = table.lookup(tape, vocab_id as usize)?;
    match cnn {
        Some(cnn) => {
            let c = char_features(tape, cnn, char_ids)?;
            tape.concat(&[w, c], 0)
        }
        None => Ok(w),
    }
}
