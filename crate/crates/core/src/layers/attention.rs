use rand::Rng;

use super::{gaussian, zeros};
use crate::tensor::{ParamId, ParamStore, Result, Tape, TensorError, Var};

/// Multi-hop self-attention plus its attention-over-attention reducer.
///
/// `w_a: [d_a × d_in]`, `w_hop: [r × d_a]`, `w_reduce: [r]`, `b_reduce: [d_out]`.
/// `d_out` is the width of the pooled rows; it equals `d_in` unless scores
/// and pooled values come from different encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionParams {
    pub w_a: ParamId,
    pub w_hop: ParamId,
    pub w_reduce: ParamId,
    pub b_reduce: ParamId,
    pub d_in: usize,
    pub d_out: usize,
    pub d_a: usize,
    pub hops: usize,
}

impl AttentionParams {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        d_in: usize,
        d_a: usize,
        hops: usize,
        std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        Self::with_output(store, prefix, d_in, d_in, d_a, hops, std, rng)
    }

    /// Scores `d_in`-wide keys but pools `d_out`-wide values.
    #[allow(clippy::too_many_arguments)]
    pub fn with_output<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        d_in: usize,
        d_out: usize,
        d_a: usize,
        hops: usize,
        std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            w_a: gaussian(store, format!("{prefix}.w_a"), &[d_a, d_in], std, rng)?,
            w_hop: gaussian(store, format!("{prefix}.w_hop"), &[hops, d_a], std, rng)?,
            w_reduce: gaussian(store, format!("{prefix}.w_reduce"), &[hops], std, rng)?,
            b_reduce: zeros(store, format!("{prefix}.b_reduce"), &[d_out])?,
            d_in,
            d_out,
            d_a,
            hops,
        })
    }
}

/// `A = softmax_rows(W_hop · tanh(W_a · Hᵀ))` over unmasked positions and
/// `M = A · H`. Returns `(M: [r × d_in], A: [r × len])`.
pub fn multi_hop_attention(tape: &mut Tape<'_>, p: &AttentionParams, h: Var, mask: &[bool]) -> Result<(Var, Var)> {
    multi_hop_attention_split(tape, p, h, h, mask)
}

/// Scores positions from `keys` but pools `values`. Both share the time
/// axis; with `keys == values` this is [`multi_hop_attention`].
pub fn multi_hop_attention_split(
    tape: &mut Tape<'_>,
    p: &AttentionParams,
    keys: Var,
    values: Var,
    mask: &[bool],
) -> Result<(Var, Var)> {
    let ks = tape.shape(keys).to_vec();
    let vs = tape.shape(values).to_vec();
    if ks.len() != 2 || vs.len() != 2 || ks[0] != vs[0] || ks[0] != mask.len() {
        return Err(TensorError::Shape {
            op: "multi_hop_attention",
            left: ks,
            right: vs,
        });
    }
    if !mask.iter().any(|&m| m) {
        return Err(TensorError::Invalid {
            op: "multi_hop_attention",
            msg: "every position is masked".into(),
        });
    }
    let w_a = tape.param(p.w_a);
    let w_hop = tape.param(p.w_hop);
    let kt = tape.transpose(keys)?;
    let hidden = tape.matmul(w_a, kt)?;
    let hidden = tape.tanh(hidden)?;
    let scores = tape.matmul(w_hop, hidden)?;
    let a = tape.masked_softmax_rows(scores, mask)?;
    let m = tape.matmul(a, values)?;
    Ok((m, a))
}

/// `tanh(W_reduce · M + b_reduce)`: a learned linear combination of the `r`
/// hop vectors, shifted and squashed into one `d`-vector.
pub fn attention_over_attention(tape: &mut Tape<'_>, p: &AttentionParams, m: Var) -> Result<Var> {
    let s = tape.shape(m).to_vec();
    if s.len() != 2 || s[0] != p.hops {
        return Err(TensorError::Shape {
            op: "attention_over_attention",
            left: s,
            right: vec![p.hops],
        });
    }
    let w = tape.param(p.w_reduce);
    let w_row = tape.reshape(w, &[1, p.hops])?;
    let combined = tape.matmul(w_row, m)?;
    let combined = tape.reshape(combined, &[s[1]])?;
    let b = tape.param(p.b_reduce);
    let shifted = tape.add(combined, b)?;
    tape.tanh(shifted)
}
