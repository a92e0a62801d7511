//! Dense `f64` matrices, reverse-mode differentiation and the AdamW optimizer.
//!
//! Model code is written once against the [`Backend`] trait. Training runs it
//! on a [`Tape`], which records every operation so [`Tape::backward`] can
//! produce gradients; inference runs it on [`Eval`], which computes values
//! only and drops intermediates as soon as they go out of scope.

mod adam;
pub mod kernels;
mod tape;
mod tensor;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

pub use adam::{AdamW, OptimState};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{op}: index {index} out of range for length {len}")]
    IndexOutOfRange { op: &'static str, index: usize, len: usize },
    #[error("{op}: argument {value} outside the domain")]
    Domain { op: &'static str, value: f64 },
    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("backward requires a 1x1 loss, got {rows}x{cols}")]
    NotScalarLoss { rows: usize, cols: usize },
    #[error("invalid rate {0}; expected a value in [0, 1)")]
    InvalidRate(f64),
}

pub type Result<T> = std::result::Result<T, NumericsError>;

/// Differentiable operations the model is written against.
pub trait Backend {
    type Value;

    /// Introduces a tensor that receives no gradient.
    fn constant(&mut self, t: Tensor) -> Self::Value;
    fn value<'a>(&'a self, v: &'a Self::Value) -> &'a Tensor;

    fn matmul(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn add(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn sub(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn mul(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    /// Broadcast add of a `1 × cols` row.
    fn add_row(&mut self, x: &Self::Value, row: &Self::Value) -> Result<Self::Value>;
    /// Broadcast multiply by a `rows × 1` column.
    fn mul_col(&mut self, x: &Self::Value, col: &Self::Value) -> Result<Self::Value>;
    fn scale(&mut self, x: &Self::Value, c: f64) -> Self::Value;
    fn exp(&mut self, x: &Self::Value) -> Result<Self::Value>;
    fn log(&mut self, x: &Self::Value) -> Result<Self::Value>;
    fn relu(&mut self, x: &Self::Value) -> Self::Value;
    /// Per-row mean, `rows × 1`.
    fn mean_rows(&mut self, x: &Self::Value) -> Self::Value;
    /// Per-row sum, `rows × 1`.
    fn row_sums(&mut self, x: &Self::Value) -> Self::Value;
    /// Sum of all entries, `1 × 1`.
    fn sum(&mut self, x: &Self::Value) -> Self::Value;
    fn concat_cols(&mut self, parts: &[&Self::Value]) -> Result<Self::Value>;
    fn slice_cols(&mut self, x: &Self::Value, lo: usize, hi: usize) -> Result<Self::Value>;
    fn concat_rows(&mut self, parts: &[&Self::Value]) -> Result<Self::Value>;
    fn gather_rows(&mut self, x: &Self::Value, index: &[usize]) -> Result<Self::Value>;
    fn scatter_add_rows(&mut self, x: &Self::Value, index: &[usize], n_out: usize) -> Result<Self::Value>;
    fn reshape(&mut self, x: &Self::Value, rows: usize, cols: usize) -> Result<Self::Value>;
    fn softmax_rows(&mut self, x: &Self::Value) -> Self::Value;
    fn segment_softmax(&mut self, x: &Self::Value, segment: &[usize], n_segments: usize) -> Result<Self::Value>;

    fn shape(&self, v: &Self::Value) -> (usize, usize) {
        self.value(v).shape()
    }
}

/// Value-only backend used for inference and as the reference forward path.
#[derive(Debug, Default, Clone, Copy)]
pub struct Eval;

impl Backend for Eval {
    type Value = Tensor;

    fn constant(&mut self, t: Tensor) -> Tensor {
        t
    }
    fn value<'a>(&'a self, v: &'a Tensor) -> &'a Tensor {
        v
    }
    fn matmul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        kernels::matmul(a, b)
    }
    fn add(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        kernels::add(a, b)
    }
    fn sub(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        kernels::sub(a, b)
    }
    fn mul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        kernels::mul(a, b)
    }
    fn add_row(&mut self, x: &Tensor, row: &Tensor) -> Result<Tensor> {
        kernels::add_row(x, row)
    }
    fn mul_col(&mut self, x: &Tensor, col: &Tensor) -> Result<Tensor> {
        kernels::mul_col(x, col)
    }
    fn scale(&mut self, x: &Tensor, c: f64) -> Tensor {
        kernels::scale(x, c)
    }
    fn exp(&mut self, x: &Tensor) -> Result<Tensor> {
        kernels::exp(x)
    }
    fn log(&mut self, x: &Tensor) -> Result<Tensor> {
        kernels::log(x)
    }
    fn relu(&mut self, x: &Tensor) -> Tensor {
        kernels::relu(x)
    }
    fn mean_rows(&mut self, x: &Tensor) -> Tensor {
        kernels::mean_rows(x)
    }
    fn row_sums(&mut self, x: &Tensor) -> Tensor {
        kernels::row_sums(x)
    }
    fn sum(&mut self, x: &Tensor) -> Tensor {
        Tensor::filled(1, 1, x.sum())
    }
    fn concat_cols(&mut self, parts: &[&Tensor]) -> Result<Tensor> {
        kernels::concat_cols(parts)
    }
    fn slice_cols(&mut self, x: &Tensor, lo: usize, hi: usize) -> Result<Tensor> {
        kernels::slice_cols(x, lo, hi)
    }
    fn concat_rows(&mut self, parts: &[&Tensor]) -> Result<Tensor> {
        kernels::concat_rows(parts)
    }
    fn gather_rows(&mut self, x: &Tensor, index: &[usize]) -> Result<Tensor> {
        kernels::gather_rows(x, index)
    }
    fn scatter_add_rows(&mut self, x: &Tensor, index: &[usize], n_out: usize) -> Result<Tensor> {
        kernels::scatter_add_rows(x, index, n_out)
    }
    fn reshape(&mut self, x: &Tensor, rows: usize, cols: usize) -> Result<Tensor> {
        x.clone().reshaped(rows, cols)
    }
    fn softmax_rows(&mut self, x: &Tensor) -> Tensor {
        kernels::softmax_rows(x)
    }
    fn segment_softmax(&mut self, x: &Tensor, segment: &[usize], n: usize) -> Result<Tensor> {
        kernels::segment_softmax(x, segment, n)
    }
}

/// Inverted dropout: in training mode each entry is zeroed with probability
/// `rate` and survivors are scaled by `1 / (1 - rate)`. Identity otherwise.
pub fn dropout<B: Backend, R: Rng + ?Sized>(
    backend: &mut B,
    x: &B::Value,
    rate: f64,
    training: bool,
    rng: &mut R,
) -> Result<B::Value>
where
    B::Value: Clone,
{
    if !(0.0..1.0).contains(&rate) {
        return Err(NumericsError::InvalidRate(rate));
    }
    if !training || rate == 0.0 {
        return Ok(x.clone());
    }
    let (rows, cols) = backend.shape(x);
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..rows * cols)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let mask = backend.constant(Tensor::from_vec(rows, cols, mask)?);
    backend.mul(x, &mask)
}

/// Draws a matrix of i.i.d. standard normal noise.
pub fn standard_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let data = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::from_vec(rows, cols, data).expect("length matches shape")
}

/// `mu + noise ⊙ exp(½·logvar)` with the noise supplied by the caller.
pub fn reparameterize_with<B: Backend>(
    backend: &mut B,
    mu: &B::Value,
    logvar: &B::Value,
    noise: Tensor,
) -> Result<B::Value> {
    let half = backend.scale(logvar, 0.5);
    let std = backend.exp(&half)?;
    let noise = backend.constant(noise);
    let spread = backend.mul(&noise, &std)?;
    backend.add(mu, &spread)
}

/// Samples `mu + ε ⊙ exp(½·logvar)` with `ε ~ N(0, 1)` drawn from `rng`.
pub fn reparameterize<B: Backend, R: Rng + ?Sized>(
    backend: &mut B,
    mu: &B::Value,
    logvar: &B::Value,
    rng: &mut R,
) -> Result<B::Value> {
    let (rows, cols) = backend.shape(mu);
    let noise = standard_normal(rows, cols, rng);
    reparameterize_with(backend, mu, logvar, noise)
}
