use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::hetgraph::NodeType;
use crate::numerics::Tensor;

/// Layer widths and depth of the auto-encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub dim: usize,
    pub heads: usize,
    pub encoder_depth: usize,
    pub decoder_width: usize,
    /// Raw feature width per node type, indexed by [`NodeType::code`].
    pub feature_dims: [usize; 3],
}

impl ModelShape {
    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn check(&self) -> Result<(), ModelError> {
        if self.dim == 0 || self.heads == 0 || !self.dim.is_multiple_of(self.heads) {
            return Err(ModelError::InvalidShape(format!(
                "dim {} must be a positive multiple of heads {}",
                self.dim, self.heads
            )));
        }
        if self.encoder_depth == 0 || self.decoder_width == 0 {
            return Err(ModelError::InvalidShape(
                "depth and decoder width must be positive".into(),
            ));
        }
        if self.feature_dims.contains(&0) {
            return Err(ModelError::InvalidShape("feature dims must be positive".into()));
        }
        Ok(())
    }
}

/// Parameters of one encoder layer.
///
/// `linear_s`, `linear_d` and `linear_m` are `dim × dim` per node type; head
/// `k` owns output columns `k·dh .. (k+1)·dh`, which makes each column block
/// the per-head `dim → dh` projection. `w_att` and `w_msg` are `dh × dh` per
/// edge type.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayerParams<T = Tensor> {
    pub linear_s: [T; 3],
    pub linear_d: [T; 3],
    pub linear_m: [T; 3],
    pub w_att: [T; 4],
    pub w_msg: [T; 4],
    pub out_w: [T; 3],
    pub out_b: [T; 3],
    pub mean_w: [T; 3],
    pub mean_b: [T; 3],
    pub logvar_w: [T; 3],
    pub logvar_b: [T; 3],
}

/// Per-type two-layer decoder: affine → ReLU → affine.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams<T = Tensor> {
    pub hidden_w: [T; 3],
    pub hidden_b: [T; 3],
    pub out_w: [T; 3],
    pub out_b: [T; 3],
}

/// All learnable tensors. `T` is [`Tensor`] for stored parameters and a
/// backend handle while a forward pass is being recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T = Tensor> {
    pub shape: ModelShape,
    pub input_w: [T; 3],
    pub input_b: [T; 3],
    pub layers: Vec<EncoderLayerParams<T>>,
    pub decoder: DecoderParams<T>,
}

const TYPE_NAMES: [&str; 3] = ["customer", "merchant", "transaction"];
const EDGE_NAMES: [&str; 4] = ["r1", "r2", "r1_rev", "r2_rev"];

fn map3<'a, T, U>(group: &str, xs: &'a [T; 3], f: &mut impl FnMut(&str, &'a T) -> U) -> [U; 3] {
    let mut it = xs.iter().zip(TYPE_NAMES).map(|(x, n)| f(&format!("{group}.{n}"), x));
    [it.next().unwrap(), it.next().unwrap(), it.next().unwrap()]
}

fn map4<'a, T, U>(group: &str, xs: &'a [T; 4], f: &mut impl FnMut(&str, &'a T) -> U) -> [U; 4] {
    let mut it = xs.iter().zip(EDGE_NAMES).map(|(x, n)| f(&format!("{group}.{n}"), x));
    [
        it.next().unwrap(),
        it.next().unwrap(),
        it.next().unwrap(),
        it.next().unwrap(),
    ]
}

impl<T> EncoderLayerParams<T> {
    fn map_named<'a, U>(&'a self, prefix: &str, f: &mut impl FnMut(&str, &'a T) -> U) -> EncoderLayerParams<U> {
        EncoderLayerParams {
            linear_s: map3(&format!("{prefix}.linear_s"), &self.linear_s, f),
            linear_d: map3(&format!("{prefix}.linear_d"), &self.linear_d, f),
            linear_m: map3(&format!("{prefix}.linear_m"), &self.linear_m, f),
            w_att: map4(&format!("{prefix}.w_att"), &self.w_att, f),
            w_msg: map4(&format!("{prefix}.w_msg"), &self.w_msg, f),
            out_w: map3(&format!("{prefix}.out_w"), &self.out_w, f),
            out_b: map3(&format!("{prefix}.out_b"), &self.out_b, f),
            mean_w: map3(&format!("{prefix}.mean_w"), &self.mean_w, f),
            mean_b: map3(&format!("{prefix}.mean_b"), &self.mean_b, f),
            logvar_w: map3(&format!("{prefix}.logvar_w"), &self.logvar_w, f),
            logvar_b: map3(&format!("{prefix}.logvar_b"), &self.logvar_b, f),
        }
    }
}

impl<T> ModelParams<T> {
    /// Applies `f` to every tensor in a fixed order, passing a stable name.
    pub fn map_named<'a, U>(&'a self, mut f: impl FnMut(&str, &'a T) -> U) -> ModelParams<U> {
        let f = &mut f;
        ModelParams {
            shape: self.shape,
            input_w: map3("input_w", &self.input_w, f),
            input_b: map3("input_b", &self.input_b, f),
            layers: self
                .layers
                .iter()
                .enumerate()
                .map(|(i, l)| l.map_named(&format!("layer{i}"), f))
                .collect(),
            decoder: DecoderParams {
                hidden_w: map3("decoder.hidden_w", &self.decoder.hidden_w, f),
                hidden_b: map3("decoder.hidden_b", &self.decoder.hidden_b, f),
                out_w: map3("decoder.out_w", &self.decoder.out_w, f),
                out_b: map3("decoder.out_b", &self.decoder.out_b, f),
            },
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> ModelParams<U> {
        self.map_named(|_, t| f(t))
    }

    /// Every tensor with its name, in the canonical order.
    pub fn named(&self) -> Vec<(String, &T)> {
        let mut out = Vec::new();
        self.map_named(|name, t| out.push((name.to_string(), t)));
        out
    }

    pub fn tensors(&self) -> Vec<&T> {
        self.named().into_iter().map(|(_, t)| t).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut T> {
        let mut out: Vec<&mut T> = Vec::new();
        let ModelParams {
            input_w,
            input_b,
            layers,
            decoder,
            ..
        } = self;
        out.extend(input_w.iter_mut());
        out.extend(input_b.iter_mut());
        for l in layers.iter_mut() {
            out.extend(l.linear_s.iter_mut());
            out.extend(l.linear_d.iter_mut());
            out.extend(l.linear_m.iter_mut());
            out.extend(l.w_att.iter_mut());
            out.extend(l.w_msg.iter_mut());
            out.extend(l.out_w.iter_mut());
            out.extend(l.out_b.iter_mut());
            out.extend(l.mean_w.iter_mut());
            out.extend(l.mean_b.iter_mut());
            out.extend(l.logvar_w.iter_mut());
            out.extend(l.logvar_b.iter_mut());
        }
        out.extend(decoder.hidden_w.iter_mut());
        out.extend(decoder.hidden_b.iter_mut());
        out.extend(decoder.out_w.iter_mut());
        out.extend(decoder.out_b.iter_mut());
        out
    }
}

pub(crate) fn glorot<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-a..a)).collect();
    Tensor::from_vec(rows, cols, data).expect("length matches shape")
}

fn per_type<F: FnMut(usize) -> Tensor>(mut f: F) -> [Tensor; 3] {
    [f(0), f(1), f(2)]
}

fn per_edge<F: FnMut() -> Tensor>(mut f: F) -> [Tensor; 4] {
    [f(), f(), f(), f()]
}

impl ModelParams<Tensor> {
    /// Glorot-uniform weights and zero biases from a seeded stream.
    pub fn init(shape: ModelShape, seed: u64) -> Result<Self, ModelError> {
        shape.check()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (dim, dh, width) = (shape.dim, shape.head_dim(), shape.decoder_width);
        let rng = &mut rng;
        let input_w = per_type(|t| glorot(shape.feature_dims[t], dim, rng));
        let input_b = per_type(|_| Tensor::zeros(1, dim));
        let layers = (0..shape.encoder_depth)
            .map(|_| EncoderLayerParams {
                linear_s: per_type(|_| glorot(dim, dim, rng)),
                linear_d: per_type(|_| glorot(dim, dim, rng)),
                linear_m: per_type(|_| glorot(dim, dim, rng)),
                w_att: per_edge(|| glorot(dh, dh, rng)),
                w_msg: per_edge(|| glorot(dh, dh, rng)),
                out_w: per_type(|_| glorot(dim, dim, rng)),
                out_b: per_type(|_| Tensor::zeros(1, dim)),
                mean_w: per_type(|_| glorot(dim, dim, rng)),
                mean_b: per_type(|_| Tensor::zeros(1, dim)),
                logvar_w: per_type(|_| glorot(dim, dim, rng).map(|v| v * 0.1)),
                logvar_b: per_type(|_| Tensor::zeros(1, dim)),
            })
            .collect();
        let decoder = DecoderParams {
            hidden_w: per_type(|_| glorot(dim, width, rng)),
            hidden_b: per_type(|_| Tensor::zeros(1, width)),
            out_w: per_type(|t| glorot(width, shape.feature_dims[t], rng)),
            out_b: per_type(|t| Tensor::zeros(1, shape.feature_dims[t])),
        };
        Ok(Self {
            shape,
            input_w,
            input_b,
            layers,
            decoder,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Checks every tensor against the declared shape.
    pub fn check_shapes(&self) -> Result<(), ModelError> {
        self.shape.check()?;
        let s = self.shape;
        let (dim, dh, width) = (s.dim, s.head_dim(), s.decoder_width);
        let mut expected: Vec<(usize, usize)> = Vec::new();
        let fd = s.feature_dims;
        expected.extend((0..3).map(|t| (fd[t], dim)));
        expected.extend((0..3).map(|_| (1, dim)));
        for _ in 0..s.encoder_depth {
            expected.extend([(dim, dim); 9]);
            expected.extend([(dh, dh); 8]);
            expected.extend([(dim, dim); 3]);
            expected.extend([(1, dim); 3]);
            expected.extend([(dim, dim); 3]);
            expected.extend([(1, dim); 3]);
            expected.extend([(dim, dim); 3]);
            expected.extend([(1, dim); 3]);
        }
        expected.extend([(dim, width); 3]);
        expected.extend([(1, width); 3]);
        expected.extend((0..3).map(|t| (width, fd[t])));
        expected.extend((0..3).map(|t| (1, fd[t])));

        let named = self.named();
        if named.len() != expected.len() || self.layers.len() != s.encoder_depth {
            return Err(ModelError::InvalidShape(format!(
                "{} tensors, expected {}",
                named.len(),
                expected.len()
            )));
        }
        for ((name, t), want) in named.iter().zip(expected) {
            if t.shape() != want {
                return Err(ModelError::InvalidShape(format!(
                    "{name} is {:?}, expected {want:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn feature_dim(&self, t: NodeType) -> usize {
        self.shape.feature_dims[t.code()]
    }
}
