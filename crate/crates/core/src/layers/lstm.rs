use rand::Rng;

use super::{gaussian, zeros};
use crate::tensor::{ParamId, ParamStore, Result, Tape, Tensor, TensorError, Var};

/// Weights of one LSTM cell. Each gate matrix is `[hidden × (hidden + input)]`
/// and multiplies the concatenation `[h_prev; x_t]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmParams {
    pub w_f: ParamId,
    pub w_i: ParamId,
    pub w_c: ParamId,
    pub w_o: ParamId,
    pub b_f: ParamId,
    pub b_i: ParamId,
    pub b_c: ParamId,
    pub b_o: ParamId,
    pub hidden: usize,
    pub input: usize,
}

impl LstmParams {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let shape = [hidden, hidden + input];
        let mut w = |gate: &str, rng: &mut R| gaussian(store, format!("{prefix}.w_{gate}"), &shape, std, rng);
        let w_f = w("f", rng)?;
        let w_i = w("i", rng)?;
        let w_c = w("c", rng)?;
        let w_o = w("o", rng)?;
        Ok(Self {
            w_f,
            w_i,
            w_c,
            w_o,
            b_f: zeros(store, format!("{prefix}.b_f"), &[hidden])?,
            b_i: zeros(store, format!("{prefix}.b_i"), &[hidden])?,
            b_c: zeros(store, format!("{prefix}.b_c"), &[hidden])?,
            b_o: zeros(store, format!("{prefix}.b_o"), &[hidden])?,
            hidden,
            input,
        })
    }
}

/// One LSTM time step. Returns `(h_t, c_t)`.
pub fn lstm_step(tape: &mut Tape<'_>, p: &LstmParams, x: Var, h_prev: Var, c_prev: Var) -> Result<(Var, Var)> {
    if tape.shape(x) != [p.input] || tape.shape(h_prev) != [p.hidden] || tape.shape(c_prev) != [p.hidden] {
        return Err(TensorError::Shape {
            op: "lstm_step",
            left: vec![p.hidden, p.input],
            right: [tape.shape(h_prev), tape.shape(x)].concat(),
        });
    }
    let hx = tape.concat(&[h_prev, x], 0)?;
    let gate = |tape: &mut Tape<'_>, w: ParamId, b: ParamId| -> Result<Var> {
        let w = tape.param(w);
        let b = tape.param(b);
        let z = tape.matvec(w, hx)?;
        tape.add(z, b)
    };
    let f_pre = gate(tape, p.w_f, p.b_f)?;
    let i_pre = gate(tape, p.w_i, p.b_i)?;
    let c_pre = gate(tape, p.w_c, p.b_c)?;
    let o_pre = gate(tape, p.w_o, p.b_o)?;
    let f = tape.sigmoid(f_pre)?;
    let i = tape.sigmoid(i_pre)?;
    let candidate = tape.tanh(c_pre)?;
    let o = tape.sigmoid(o_pre)?;
    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, candidate)?;
    let c = tape.add(keep, write)?;
    let squashed = tape.tanh(c)?;
    let h = tape.mul(o, squashed)?;
    Ok((h, c))
}

/// Runs a unidirectional LSTM from zero initial state, returning every `h_t`.
pub fn lstm_run(tape: &mut Tape<'_>, p: &LstmParams, seq: &[Var]) -> Result<Vec<Var>> {
    let mut h = tape.constant(Tensor::zeros(&[p.hidden]))?;
    let mut c = h;
    let mut out = Vec::with_capacity(seq.len());
    for &x in seq {
        let (nh, nc) = lstm_step(tape, p, x, h, c)?;
        out.push(nh);
        h = nh;
        c = nc;
    }
    Ok(out)
}

/// Bidirectional encoding of `seq`: row `i` of the `[len × 2u]` result is
/// `[→h_i ; ←h_i]`, where the backward cell reads the sequence reversed.
pub fn bilstm_encode(tape: &mut Tape<'_>, fwd: &LstmParams, bwd: &LstmParams, seq: &[Var]) -> Result<Var> {
    if seq.is_empty() {
        return Err(TensorError::Invalid {
            op: "bilstm_encode",
            msg: "empty sequence".into(),
        });
    }
    let forward = lstm_run(tape, fwd, seq)?;
    let reversed: Vec<Var> = seq.iter().rev().copied().collect();
    let mut backward = lstm_run(tape, bwd, &reversed)?;
    backward.reverse();
    let rows = forward
        .into_iter()
        .zip(backward)
        .map(|(f, b)| tape.concat(&[f, b], 0))
        .collect::<Result<Vec<_>>>()?;
    tape.stack_rows(&rows)
}
