use std::str::FromStr;

use super::{GradStore, ParamId, ParamStore, Result, Tensor, TensorError};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseKind {
    Tanh,
    Sigmoid,
    Add,
    Mul,
    Sub,
}

impl ElementwiseKind {
    fn arity(self) -> usize {
        match self {
            Self::Tanh | Self::Sigmoid => 1,
            Self::Add | Self::Mul | Self::Sub => 2,
        }
    }
}

impl FromStr for ElementwiseKind {
    type Err = TensorError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Self::Tanh),
            "sigmoid" => Ok(Self::Sigmoid),
            "add" => Ok(Self::Add),
            "mul" => Ok(Self::Mul),
            "sub" => Ok(Self::Sub),
            other => Err(TensorError::UnknownKind(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Binary {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Constant,
    Param(ParamId),
    GatherRow { param: ParamId, row: usize },
    MatMul(Var, Var),
    MatVec(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Binary(Binary, Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Softmax(Var),
    Concat { inputs: Vec<Var>, axis: usize },
    Stack(Vec<Var>),
    Row(Var, usize),
    Conv1d { seq: Var, filters: Var, bias: Var },
    MaxPool { input: Var, argmax: Vec<usize> },
    Sum(Var),
    Mean(Var),
    CrossEntropy { pred: Var, target: [f64; 2] },
}

#[derive(Debug, Clone)]
enum Storage {
    Owned(Vec<f64>),
    Param(ParamId),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    shape: Vec<usize>,
    storage: Storage,
    requires_grad: bool,
}

/// Lower bound applied to probabilities inside [`Tape::cross_entropy`].
pub const PROB_FLOOR: f64 = 1e-12;

/// Records forward operations over tensors for one backward pass.
///
/// Parameters are read in place from the borrowed [`ParamStore`]; nodes are
/// appended in execution order, so the node list is always topologically
/// sorted.
pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    /// Node reading each parameter, created on first use.
    param_nodes: Vec<Option<Var>>,
    backward_done: bool,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_nodes: vec![None; params.len()],
            backward_done: false,
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        match &self.nodes[v.0].storage {
            Storage::Owned(data) => data,
            Storage::Param(id) => self.params.value(*id).data(),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn numel(&self, v: Var) -> usize {
        self.value(v).len()
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        Tensor::new(self.shape(v).to_vec(), self.value(v).to_vec())
            .expect("recorded nodes always have consistent shapes")
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, data: Vec<f64>, name: &'static str) -> Result<Var> {
        if data.iter().any(|x| !x.is_finite()) {
            return Err(TensorError::NonFinite { op: name });
        }
        let requires_grad = self.op_requires_grad(&op);
        self.nodes.push(Node {
            op,
            shape,
            storage: Storage::Owned(data),
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn op_requires_grad(&self, op: &Op) -> bool {
        let rg = |v: &Var| self.requires_grad(*v);
        match op {
            Op::Leaf => true,
            Op::Constant => false,
            Op::Param(id) | Op::GatherRow { param: id, .. } => self.params.get(*id).trainable,
            Op::MatMul(a, b) | Op::MatVec(a, b) | Op::Binary(_, a, b) => rg(a) || rg(b),
            Op::Transpose(a)
            | Op::Reshape(a)
            | Op::Scale(a, _)
            | Op::Tanh(a)
            | Op::Sigmoid(a)
            | Op::Softmax(a)
            | Op::Row(a, _)
            | Op::MaxPool { input: a, .. }
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::CrossEntropy { pred: a, .. } => rg(a),
            Op::Concat { inputs, .. } | Op::Stack(inputs) => inputs.iter().any(rg),
            Op::Conv1d { seq, filters, bias } => rg(seq) || rg(filters) || rg(bias),
        }
    }

    // ---- leaves ----

    /// A differentiable input whose gradient is retrievable after backward.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let shape = t.shape().to_vec();
        self.push(Op::Leaf, shape, t.into_data(), "leaf")
            .expect("leaf values are checked by the caller")
    }

    pub fn try_leaf(&mut self, t: Tensor) -> Result<Var> {
        let shape = t.shape().to_vec();
        self.push(Op::Leaf, shape, t.into_data(), "leaf")
    }

    pub fn constant(&mut self, t: Tensor) -> Result<Var> {
        let shape = t.shape().to_vec();
        self.push(Op::Constant, shape, t.into_data(), "constant")
    }

    /// Reads a parameter in place; its gradient flows to the store on backward.
    /// Repeated reads of the same parameter share one node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_nodes[id.index()] {
            return v;
        }
        let p = self.params.get(id);
        self.nodes.push(Node {
            op: Op::Param(id),
            shape: p.value.shape().to_vec(),
            storage: Storage::Param(id),
            requires_grad: p.trainable,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_nodes[id.index()] = Some(v);
        v
    }

    /// One row of a 2-D parameter (embedding lookup).
    pub fn gather_row(&mut self, id: ParamId, row: usize) -> Result<Var> {
        let t = self.params.value(id);
        if t.shape().len() != 2 || row >= t.shape()[0] {
            return Err(TensorError::Invalid {
                op: "gather_row",
                msg: format!("row {row} out of range for shape {:?}", t.shape()),
            });
        }
        let width = t.shape()[1];
        let data = t.data()[row * width..(row + 1) * width].to_vec();
        self.push(Op::GatherRow { param: id, row }, vec![width], data, "gather_row")
    }

    // ---- linear algebra ----

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::Shape {
                op: "matmul",
                left: sa,
                right: sb,
            });
        }
        let (p, q, s) = (sa[0], sa[1], sb[1]);
        let out = matmul_raw(self.value(a), self.value(b), p, q, s);
        self.push(Op::MatMul(a, b), vec![p, s], out, "matmul")
    }

    /// Matrix-vector product `w · x` for `w: [p×q]`, `x: [q]`.
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let (sw, sx) = (self.shape(w).to_vec(), self.shape(x).to_vec());
        if sw.len() != 2 || sx.len() != 1 || sw[1] != sx[0] {
            return Err(TensorError::Shape {
                op: "matvec",
                left: sw,
                right: sx,
            });
        }
        let (p, q) = (sw[0], sw[1]);
        let (wv, xv) = (self.value(w), self.value(x));
        let out = (0..p).map(|i| dot(&wv[i * q..(i + 1) * q], xv)).collect();
        self.push(Op::MatVec(w, x), vec![p], out, "matvec")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s.len() != 2 {
            return Err(TensorError::Invalid {
                op: "transpose",
                msg: format!("needs a matrix, got shape {s:?}"),
            });
        }
        let out = transpose_raw(self.value(a), s[0], s[1]);
        self.push(Op::Transpose(a), vec![s[1], s[0]], out, "transpose")
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let numel: usize = shape.iter().product();
        if numel != self.numel(a) || shape.contains(&0) {
            return Err(TensorError::Shape {
                op: "reshape",
                left: self.shape(a).to_vec(),
                right: shape.to_vec(),
            });
        }
        let out = self.value(a).to_vec();
        self.push(Op::Reshape(a), shape.to_vec(), out, "reshape")
    }

    // ---- elementwise ----

    pub fn elementwise(&mut self, kind: ElementwiseKind, args: &[Var]) -> Result<Var> {
        if args.len() != kind.arity() {
            return Err(TensorError::Invalid {
                op: "elementwise",
                msg: format!("{kind:?} takes {} argument(s), got {}", kind.arity(), args.len()),
            });
        }
        match kind {
            ElementwiseKind::Tanh => self.tanh(args[0]),
            ElementwiseKind::Sigmoid => self.sigmoid(args[0]),
            ElementwiseKind::Add => self.add(args[0], args[1]),
            ElementwiseKind::Mul => self.mul(args[0], args[1]),
            ElementwiseKind::Sub => self.sub(args[0], args[1]),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let (na, nb) = (self.numel(a), self.numel(b));
        let shape = if sa == sb || nb == 1 {
            sa.clone()
        } else if na == 1 {
            sb.clone()
        } else {
            let op = match kind {
                Binary::Add => "add",
                Binary::Sub => "sub",
                Binary::Mul => "mul",
            };
            return Err(TensorError::Shape {
                op,
                left: sa,
                right: sb,
            });
        };
        let f = match kind {
            Binary::Add => |x: f64, y: f64| x + y,
            Binary::Sub => |x: f64, y: f64| x - y,
            Binary::Mul => |x: f64, y: f64| x * y,
        };
        let (va, vb) = (self.value(a), self.value(b));
        let n = na.max(nb);
        let out = (0..n)
            .map(|i| f(va[if na == 1 { 0 } else { i }], vb[if nb == 1 { 0 } else { i }]))
            .collect();
        self.push(Op::Binary(kind, a, b), shape, out, "binary")
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let out = self.value(a).iter().map(|x| x * factor).collect();
        let shape = self.shape(a).to_vec();
        self.push(Op::Scale(a, factor), shape, out, "scale")
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).iter().map(|x| x.tanh()).collect();
        let shape = self.shape(a).to_vec();
        self.push(Op::Tanh(a), shape, out, "tanh")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).iter().map(|&x| sigmoid(x)).collect();
        let shape = self.shape(a).to_vec();
        self.push(Op::Sigmoid(a), shape, out, "sigmoid")
    }

    // ---- normalisation ----

    /// Row-wise softmax of a matrix (a 1-D input is treated as one row).
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        self.softmax_impl(x, None)
    }

    /// Row-wise softmax restricted to positions where `mask` is true.
    /// Masked positions get exactly zero weight.
    pub fn masked_softmax_rows(&mut self, x: Var, mask: &[bool]) -> Result<Var> {
        self.softmax_impl(x, Some(mask))
    }

    fn softmax_impl(&mut self, x: Var, mask: Option<&[bool]>) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let cols = *shape.last().unwrap_or(&0);
        if shape.len() > 2 || cols == 0 {
            return Err(TensorError::Invalid {
                op: "softmax_rows",
                msg: format!("needs a non-empty row dimension, got shape {shape:?}"),
            });
        }
        if let Some(m) = mask {
            if m.len() != cols {
                return Err(TensorError::Shape {
                    op: "softmax_rows",
                    left: shape,
                    right: vec![m.len()],
                });
            }
            if !m.iter().any(|&keep| keep) {
                return Err(TensorError::Invalid {
                    op: "softmax_rows",
                    msg: "every position is masked".into(),
                });
            }
        }
        let keep = |j: usize| mask.is_none_or(|m| m[j]);
        let mut out = self.value(x).to_vec();
        for row in out.chunks_mut(cols) {
            let max = (0..cols)
                .filter(|&j| keep(j))
                .map(|j| row[j])
                .fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for (j, v) in row.iter_mut().enumerate() {
                *v = if keep(j) { (*v - max).exp() } else { 0.0 };
                total += *v;
            }
            row.iter_mut().for_each(|v| *v /= total);
        }
        self.push(Op::Softmax(x), shape, out, "softmax_rows")
    }

    // ---- structure ----

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = match inputs.first() {
            Some(v) => self.shape(*v).to_vec(),
            None => {
                return Err(TensorError::Invalid {
                    op: "concat",
                    msg: "no inputs".into(),
                })
            }
        };
        if axis >= first.len() {
            return Err(TensorError::Invalid {
                op: "concat",
                msg: format!("axis {axis} out of range for shape {first:?}"),
            });
        }
        let mut shape = first.clone();
        shape[axis] = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible =
                s.len() == first.len() && s.iter().zip(&first).enumerate().all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(TensorError::Shape {
                    op: "concat",
                    left: first,
                    right: s.to_vec(),
                });
            }
            shape[axis] += s[axis];
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for &v in inputs {
                let chunk = self.shape(v)[axis] * inner;
                out.extend_from_slice(&self.value(v)[o * chunk..(o + 1) * chunk]);
            }
        }
        self.push(
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            shape,
            out,
            "concat",
        )
    }

    /// Stacks equally sized 1-D vectors into the rows of a matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        let width = match rows.first() {
            Some(v) => self.shape(*v).to_vec(),
            None => {
                return Err(TensorError::Invalid {
                    op: "stack_rows",
                    msg: "no rows".into(),
                })
            }
        };
        if width.len() != 1 {
            return Err(TensorError::Invalid {
                op: "stack_rows",
                msg: format!("rows must be vectors, got shape {width:?}"),
            });
        }
        let mut out = Vec::with_capacity(rows.len() * width[0]);
        for &r in rows {
            if self.shape(r) != width.as_slice() {
                return Err(TensorError::Shape {
                    op: "stack_rows",
                    left: width,
                    right: self.shape(r).to_vec(),
                });
            }
            out.extend_from_slice(self.value(r));
        }
        self.push(Op::Stack(rows.to_vec()), vec![rows.len(), width[0]], out, "stack_rows")
    }

    pub fn row(&mut self, x: Var, index: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 || index >= s[0] {
            return Err(TensorError::Invalid {
                op: "row",
                msg: format!("row {index} out of range for shape {s:?}"),
            });
        }
        let out = self.value(x)[index * s[1]..(index + 1) * s[1]].to_vec();
        self.push(Op::Row(x, index), vec![s[1]], out, "row")
    }

    // ---- convolution ----

    /// Valid 1-D cross-correlation over time plus a per-map bias.
    ///
    /// `seq: [k×d_in]`, `filters: [w×d_in×d_out]`, `bias: [d_out]`.
    pub fn conv1d_valid(&mut self, seq: Var, filters: Var, bias: Var) -> Result<Var> {
        let (ss, sf, sb) = (
            self.shape(seq).to_vec(),
            self.shape(filters).to_vec(),
            self.shape(bias).to_vec(),
        );
        if ss.len() != 2 || sf.len() != 3 || sf[1] != ss[1] || sb != [sf[2]] {
            return Err(TensorError::Shape {
                op: "conv1d_valid",
                left: ss,
                right: sf,
            });
        }
        let (k, din) = (ss[0], ss[1]);
        let (w, dout) = (sf[0], sf[2]);
        if k < w {
            return Err(TensorError::Invalid {
                op: "conv1d_valid",
                msg: format!("sequence length {k} shorter than filter width {w}"),
            });
        }
        let steps = k - w + 1;
        let (xs, fs, bs) = (self.value(seq), self.value(filters), self.value(bias));
        let mut out = Vec::with_capacity(steps * dout);
        for t in 0..steps {
            let mut acc = bs.to_vec();
            for j in 0..w {
                for i in 0..din {
                    let x = xs[(t + j) * din + i];
                    let f = &fs[(j * din + i) * dout..(j * din + i + 1) * dout];
                    acc.iter_mut().zip(f).for_each(|(a, fv)| *a += x * fv);
                }
            }
            out.extend(acc);
        }
        self.push(
            Op::Conv1d { seq, filters, bias },
            vec![steps, dout],
            out,
            "conv1d_valid",
        )
    }

    /// Per-channel maximum over the time axis of `x: [k×d]`.
    pub fn max_pool_time(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 {
            return Err(TensorError::Invalid {
                op: "max_pool_time",
                msg: format!("needs a [time×channels] matrix, got {s:?}"),
            });
        }
        let (k, d) = (s[0], s[1]);
        let xs = self.value(x);
        let mut argmax = vec![0usize; d];
        let mut out = xs[..d].to_vec();
        for t in 1..k {
            for c in 0..d {
                // strict comparison keeps the first occurrence on ties
                if xs[t * d + c] > out[c] {
                    out[c] = xs[t * d + c];
                    argmax[c] = t;
                }
            }
        }
        self.push(Op::MaxPool { input: x, argmax }, vec![d], out, "max_pool_time")
    }

    // ---- reductions and loss ----

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let total = self.value(x).iter().sum();
        self.push(Op::Sum(x), vec![1], vec![total], "sum")
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = self.numel(x) as f64;
        let total: f64 = self.value(x).iter().sum();
        self.push(Op::Mean(x), vec![1], vec![total / n], "mean")
    }

    /// Binary cross-entropy of a probability pair against a one-hot target:
    /// `-(y·ln p_up + (1-y)·ln p_down)`, with both probabilities floored at
    /// [`PROB_FLOOR`].
    pub fn cross_entropy(&mut self, pred: Var, target: [f64; 2]) -> Result<Var> {
        if self.shape(pred) != [2] {
            return Err(TensorError::Shape {
                op: "cross_entropy",
                left: self.shape(pred).to_vec(),
                right: vec![2],
            });
        }
        let p = self.value(pred);
        let loss = -(0..2).map(|j| target[j] * p[j].max(PROB_FLOOR).ln()).sum::<f64>();
        self.push(Op::CrossEntropy { pred, target }, vec![1], vec![loss], "cross_entropy")
    }

    // ---- backward ----

    /// Reverse pass from a scalar root. May run once per tape.
    pub fn backward(&mut self, root: Var) -> Result<Gradients> {
        if self.backward_done {
            return Err(TensorError::AlreadyBackpropagated);
        }
        if self.numel(root) != 1 {
            return Err(TensorError::NonScalarRoot(self.shape(root).to_vec()));
        }
        self.backward_done = true;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if self.nodes[i].requires_grad {
                self.propagate(i, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        let sinks = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n.op {
                Op::Param(id) => Some((i, Sink::Full(id))),
                Op::GatherRow { param, row } => Some((i, Sink::Row { param, row })),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads, sinks })
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out = self.value(Var(i));
        match &node.op {
            Op::Leaf | Op::Constant | Op::Param(_) | Op::GatherRow { .. } => {}
            Op::MatMul(a, b) => {
                let (p, q) = (self.shape(*a)[0], self.shape(*a)[1]);
                let s = self.shape(*b)[1];
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.requires_grad(*a) {
                    // dA = dC · Bᵀ
                    let bt = transpose_raw(bv, q, s);
                    self.accumulate(grads, *a, |da| matmul_into(da, g, &bt, p, s, q));
                }
                if self.requires_grad(*b) {
                    // dB = Aᵀ · dC
                    let at = transpose_raw(av, p, q);
                    self.accumulate(grads, *b, |db| matmul_into(db, &at, g, q, p, s));
                }
            }
            Op::MatVec(w, x) => {
                let (p, q) = (self.shape(*w)[0], self.shape(*w)[1]);
                if self.requires_grad(*w) {
                    let xv = self.value(*x);
                    self.accumulate(grads, *w, |dw| {
                        for r in 0..p {
                            if g[r] != 0.0 {
                                dw[r * q..(r + 1) * q]
                                    .iter_mut()
                                    .zip(xv)
                                    .for_each(|(d, xk)| *d += g[r] * xk);
                            }
                        }
                    });
                }
                if self.requires_grad(*x) {
                    let wv = self.value(*w);
                    self.accumulate(grads, *x, |dx| {
                        for r in 0..p {
                            if g[r] != 0.0 {
                                dx.iter_mut()
                                    .zip(&wv[r * q..(r + 1) * q])
                                    .for_each(|(d, wk)| *d += g[r] * wk);
                            }
                        }
                    });
                }
            }
            Op::Transpose(a) => {
                let s = self.shape(*a);
                let (r, c) = (s[0], s[1]);
                let gt = transpose_raw(g, c, r);
                self.accumulate(grads, *a, |da| add_into(da, &gt));
            }
            Op::Reshape(a) => self.accumulate(grads, *a, |da| add_into(da, g)),
            Op::Binary(kind, a, b) => {
                let (na, nb) = (self.numel(*a), self.numel(*b));
                let (va, vb) = (self.value(*a), self.value(*b));
                let pick = |v: &[f64], n: usize, j: usize| v[if n == 1 { 0 } else { j }];
                if self.requires_grad(*a) {
                    self.accumulate(grads, *a, |da| {
                        for (j, gj) in g.iter().enumerate() {
                            let local = match kind {
                                Binary::Add | Binary::Sub => 1.0,
                                Binary::Mul => pick(vb, nb, j),
                            };
                            da[if na == 1 { 0 } else { j }] += gj * local;
                        }
                    });
                }
                if self.requires_grad(*b) {
                    self.accumulate(grads, *b, |db| {
                        for (j, gj) in g.iter().enumerate() {
                            let local = match kind {
                                Binary::Add => 1.0,
                                Binary::Sub => -1.0,
                                Binary::Mul => pick(va, na, j),
                            };
                            db[if nb == 1 { 0 } else { j }] += gj * local;
                        }
                    });
                }
            }
            Op::Scale(a, c) => self.accumulate(grads, *a, |da| da.iter_mut().zip(g).for_each(|(d, gj)| *d += c * gj)),
            Op::Tanh(a) => self.accumulate(grads, *a, |da| {
                for ((d, gj), y) in da.iter_mut().zip(g).zip(out) {
                    *d += gj * (1.0 - y * y);
                }
            }),
            Op::Sigmoid(a) => self.accumulate(grads, *a, |da| {
                for ((d, gj), y) in da.iter_mut().zip(g).zip(out) {
                    *d += gj * y * (1.0 - y);
                }
            }),
            Op::Softmax(a) => {
                let cols = *node.shape.last().unwrap();
                self.accumulate(grads, *a, |da| {
                    for ((drow, grow), yrow) in da.chunks_mut(cols).zip(g.chunks(cols)).zip(out.chunks(cols)) {
                        let inner = dot(grow, yrow);
                        for j in 0..cols {
                            drow[j] += yrow[j] * (grow[j] - inner);
                        }
                    }
                });
            }
            Op::Concat { inputs, axis } => {
                let shape = &node.shape;
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let total = shape[*axis] * inner;
                let mut offset = 0;
                for &v in inputs {
                    let chunk = self.shape(v)[*axis] * inner;
                    if self.requires_grad(v) {
                        self.accumulate(grads, v, |dv| {
                            for o in 0..outer {
                                let src = &g[o * total + offset..o * total + offset + chunk];
                                add_into(&mut dv[o * chunk..(o + 1) * chunk], src);
                            }
                        });
                    }
                    offset += chunk;
                }
            }
            Op::Stack(rows) => {
                let width = node.shape[1];
                for (r, &v) in rows.iter().enumerate() {
                    if self.requires_grad(v) {
                        self.accumulate(grads, v, |dv| add_into(dv, &g[r * width..(r + 1) * width]));
                    }
                }
            }
            Op::Row(x, index) => {
                let width = node.shape[0];
                self.accumulate(grads, *x, |dx| add_into(&mut dx[index * width..(index + 1) * width], g));
            }
            Op::Conv1d { seq, filters, bias } => {
                let din = self.shape(*seq)[1];
                let (w, dout) = (self.shape(*filters)[0], self.shape(*filters)[2]);
                let steps = node.shape[0];
                if self.requires_grad(*seq) {
                    let fs = self.value(*filters);
                    self.accumulate(grads, *seq, |ds| {
                        for t in 0..steps {
                            let gt = &g[t * dout..(t + 1) * dout];
                            for j in 0..w {
                                for i in 0..din {
                                    let f = &fs[(j * din + i) * dout..(j * din + i + 1) * dout];
                                    ds[(t + j) * din + i] += dot(gt, f);
                                }
                            }
                        }
                    });
                }
                if self.requires_grad(*filters) {
                    let xs = self.value(*seq);
                    self.accumulate(grads, *filters, |df| {
                        for t in 0..steps {
                            let gt = &g[t * dout..(t + 1) * dout];
                            for j in 0..w {
                                for i in 0..din {
                                    let x = xs[(t + j) * din + i];
                                    df[(j * din + i) * dout..(j * din + i + 1) * dout]
                                        .iter_mut()
                                        .zip(gt)
                                        .for_each(|(d, gv)| *d += x * gv);
                                }
                            }
                        }
                    });
                }
                if self.requires_grad(*bias) {
                    self.accumulate(grads, *bias, |db| {
                        for gt in g.chunks(dout) {
                            add_into(db, gt);
                        }
                    });
                }
            }
            Op::MaxPool { input, argmax } => {
                let d = node.shape[0];
                self.accumulate(grads, *input, |dx| {
                    for (c, &t) in argmax.iter().enumerate() {
                        dx[t * d + c] += g[c];
                    }
                });
            }
            Op::Sum(x) => self.accumulate(grads, *x, |dx| dx.iter_mut().for_each(|d| *d += g[0])),
            Op::Mean(x) => {
                let n = self.numel(*x) as f64;
                self.accumulate(grads, *x, |dx| dx.iter_mut().for_each(|d| *d += g[0] / n));
            }
            Op::CrossEntropy { pred, target } => {
                let p = self.value(*pred);
                self.accumulate(grads, *pred, |dp| {
                    for j in 0..2 {
                        if p[j] > PROB_FLOOR {
                            dp[j] -= g[0] * target[j] / p[j];
                        }
                    }
                });
            }
        }
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.requires_grad(v) {
            return;
        }
        let n = self.numel(v);
        let slot = grads[v.0].get_or_insert_with(|| vec![0.0; n]);
        f(slot);
    }
}

#[derive(Debug, Clone, Copy)]
enum Sink {
    Full(ParamId),
    Row { param: ParamId, row: usize },
}

/// Result of one backward pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    sinks: Vec<(usize, Sink)>,
}

impl Gradients {
    /// Gradient of the root with respect to a recorded node, if it received one.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds every parameter gradient from this pass into `store`.
    pub fn accumulate_into(&self, store: &mut GradStore) {
        for &(node, sink) in &self.sinks {
            let Some(g) = &self.grads[node] else { continue };
            match sink {
                Sink::Full(id) => add_into(store.get_mut(id), g),
                Sink::Row { param, row } => {
                    let width = g.len();
                    add_into(&mut store.get_mut(param)[row * width..(row + 1) * width], g);
                }
            }
        }
    }

    pub fn to_grad_store(&self, params: &ParamStore) -> GradStore {
        let mut store = GradStore::zeros_like(params);
        self.accumulate_into(&mut store);
        store
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

fn transpose_raw(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = x[r * cols + c];
        }
    }
    out
}

/// `out += a · b` for `a: [p×q]`, `b: [q×s]`.
fn matmul_into(out: &mut [f64], a: &[f64], b: &[f64], p: usize, q: usize, s: usize) {
    if s >= 16 {
        for i in 0..p {
            let orow = &mut out[i * s..(i + 1) * s];
            for k in 0..q {
                let aik = a[i * q + k];
                if aik != 0.0 {
                    orow.iter_mut()
                        .zip(&b[k * s..(k + 1) * s])
                        .for_each(|(o, bv)| *o += aik * bv);
                }
            }
        }
    } else {
        // narrow output: contiguous dot products against the columns of b
        let bt = transpose_raw(b, q, s);
        for i in 0..p {
            let arow = &a[i * q..(i + 1) * q];
            for j in 0..s {
                out[i * s + j] += dot(arow, &bt[j * q..(j + 1) * q]);
            }
        }
    }
}

fn matmul_raw(a: &[f64], b: &[f64], p: usize, q: usize, s: usize) -> Vec<f64> {
    let mut out = vec![0.0; p * s];
    matmul_into(&mut out, a, b, p, q, s);
    out
}
