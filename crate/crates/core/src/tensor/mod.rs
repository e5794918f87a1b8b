//! Dense `f64` tensors and a recording tape for reverse-mode differentiation.
//!
//! A [`Tensor`] is a plain value: a shape and a row-major buffer. Trainable
//! tensors live in a [`ParamStore`]. A [`Tape`] borrows the store, records
//! every forward operation as a node and, on [`Tape::backward`], walks the
//! nodes in reverse to produce [`Gradients`].

mod gradcheck;
mod params;
mod tape;

pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport, GroupReport};
pub use params::{GradStore, Param, ParamId, ParamStore};
pub(crate) use tape::sigmoid;
pub use tape::{ElementwiseKind, Gradients, Tape, Var, PROB_FLOOR};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: dimension mismatch between {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: {msg}")]
    Invalid { op: &'static str, msg: String },
    #[error("{op}: non-finite value produced")]
    NonFinite { op: &'static str },
    #[error("unknown elementwise kind `{0}`")]
    UnknownKind(String),
    #[error("backward: root must be a scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("backward already ran on this tape")]
    AlreadyBackpropagated,
    #[error("duplicate parameter name `{0}`")]
    DuplicateParam(String),
    #[error("grad_check: non-finite loss while probing `{param}`[{index}]")]
    NonFiniteProbe { param: String, index: usize },
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;

/// Row-major dense tensor of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(TensorError::Invalid {
                op: "tensor",
                msg: format!("zero-sized dimension in shape {shape:?}"),
            });
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(TensorError::Invalid {
                op: "tensor",
                msg: format!("shape {shape:?} holds {numel} values but buffer has {}", data.len()),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; numel],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; numel],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    /// 1-D tensor. Panics on an empty buffer.
    pub fn vector(data: Vec<f64>) -> Self {
        assert!(!data.is_empty(), "vector() needs at least one value");
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Gaussian samples with mean 0 and the given standard deviation.
    pub fn randn<R: Rng + ?Sized>(shape: &[usize], std: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, std).expect("std must be finite and non-negative");
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..numel).map(|_| normal.sample(rng)).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Value at a 2-D index. Panics on out-of-range indices.
    pub fn at(&self, row: usize, col: usize) -> f64 {
        assert_eq!(self.shape.len(), 2, "at() needs a matrix");
        self.data[row * self.shape[1] + col]
    }
}
