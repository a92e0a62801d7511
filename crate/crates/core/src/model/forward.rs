//! Batched encoder/decoder written once against [`Backend`].
//!
//! All edges of one relation are processed together: source and destination
//! rows are gathered, the `E × dim` projections are reshaped to `E·H × dh` so
//! each row is one (edge, head) pair, and the shared `dh × dh` relation
//! matrices apply to every head in a single product.

use rand::Rng;

use super::{EncoderLayerParams, ModelError, ModelParams};
use crate::hetgraph::{EdgeType, HeteroGraph, NodeType};
use crate::numerics::{dropout, reparameterize, Backend, Tensor};

/// Whether the forward pass samples (training) or is deterministic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Inference,
    Training { dropout: f64 },
}

impl Mode {
    pub fn is_training(self) -> bool {
        matches!(self, Mode::Training { .. })
    }
}

/// Edge index arrays of a graph, grouped by destination type.
#[derive(Debug, Clone)]
pub struct GraphIndex {
    counts: [usize; 3],
    src: [Vec<usize>; 4],
    dst: [Vec<usize>; 4],
    incoming: [Vec<EdgeType>; 3],
    segment: [Vec<usize>; 3],
}

impl GraphIndex {
    pub fn new(graph: &HeteroGraph) -> Self {
        let mut src: [Vec<usize>; 4] = Default::default();
        let mut dst: [Vec<usize>; 4] = Default::default();
        for e in EdgeType::ALL {
            (src[e.code()], dst[e.code()]) = graph.edges(e).iter().copied().unzip();
        }
        let mut incoming: [Vec<EdgeType>; 3] = Default::default();
        let mut segment: [Vec<usize>; 3] = Default::default();
        for t in NodeType::ALL {
            incoming[t.code()] = EdgeType::into_type(t).collect();
            segment[t.code()] = incoming[t.code()]
                .iter()
                .flat_map(|e| dst[e.code()].iter().copied())
                .collect();
        }
        Self {
            counts: NodeType::ALL.map(|t| graph.node_count(t)),
            src,
            dst,
            incoming,
            segment,
        }
    }

    pub fn node_count(&self, t: NodeType) -> usize {
        self.counts[t.code()]
    }

    /// Destination index of every incoming edge of type `t`, in the row order
    /// used for attention weights.
    pub fn segment(&self, t: NodeType) -> &[usize] {
        &self.segment[t.code()]
    }
}

/// Per-type matrices (rows are nodes) for one layer's latent variables.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState<V = Tensor> {
    pub mu: [V; 3],
    pub logvar: [V; 3],
    pub h: [V; 3],
}

impl LatentState<Tensor> {
    /// `(mu, logvar, h)` rows of one node.
    pub fn node(&self, t: NodeType, index: usize) -> (&[f64], &[f64], &[f64]) {
        let c = t.code();
        (self.mu[c].row(index), self.logvar[c].row(index), self.h[c].row(index))
    }
}

/// Everything one encoder layer produces.
#[derive(Debug, Clone)]
pub struct LayerOutput<V> {
    pub latent: LatentState<V>,
    /// Attention-weighted message sum per node, before the output projection.
    pub aggregate: [V; 3],
    /// Attention weights, `E_t × H` per destination type, rows ordered as
    /// [`GraphIndex::segment`].
    pub attention: [V; 3],
}

/// A complete encode/decode pass.
#[derive(Debug, Clone)]
pub struct ForwardPass<V> {
    pub inputs: [V; 3],
    pub h0: [V; 3],
    pub layers: Vec<LayerOutput<V>>,
    pub reconstruction: [V; 3],
}

impl<V> ForwardPass<V> {
    pub fn latent(&self) -> &LatentState<V> {
        &self.layers.last().expect("at least one layer").latent
    }
}

fn affine<B: Backend>(b: &mut B, x: &B::Value, w: &B::Value, bias: &B::Value) -> Result<B::Value, ModelError> {
    let y = b.matmul(x, w)?;
    Ok(b.add_row(&y, bias)?)
}

fn try_map3<U>(mut f: impl FnMut(usize) -> Result<U, ModelError>) -> Result<[U; 3], ModelError> {
    Ok([f(0)?, f(1)?, f(2)?])
}

pub fn input_projection<B: Backend>(
    b: &mut B,
    params: &ModelParams<B::Value>,
    inputs: &[B::Value; 3],
) -> Result<[B::Value; 3], ModelError> {
    try_map3(|t| affine(b, &inputs[t], &params.input_w[t], &params.input_b[t]))
}

/// One message-passing layer over all node types.
#[allow(clippy::too_many_arguments)]
pub fn encoder_layer<B: Backend, R: Rng + ?Sized>(
    b: &mut B,
    layer: &EncoderLayerParams<B::Value>,
    heads: usize,
    index: &GraphIndex,
    prev: &[B::Value; 3],
    h0: &[B::Value; 3],
    mode: Mode,
    rng: &mut R,
) -> Result<LayerOutput<B::Value>, ModelError>
where
    B::Value: Clone,
{
    let dim = b.shape(&prev[0]).1;
    let dh = dim / heads;
    let inv_sqrt = 1.0 / (dh as f64).sqrt();

    let proj_s = try_map3(|t| Ok(b.matmul(&prev[t], &layer.linear_s[t])?))?;
    let proj_d = try_map3(|t| Ok(b.matmul(&prev[t], &layer.linear_d[t])?))?;
    let proj_m = try_map3(|t| Ok(b.matmul(&prev[t], &layer.linear_m[t])?))?;

    let mut aggregate = Vec::with_capacity(3);
    let mut attention = Vec::with_capacity(3);
    for td in NodeType::ALL {
        let n_dst = index.node_count(td);
        let mut scores = Vec::new();
        let mut msgs = Vec::new();
        for &r in &index.incoming[td.code()] {
            let (ts, e) = (r.source().code(), index.src[r.code()].len());
            let s = b.gather_rows(&proj_s[ts], &index.src[r.code()])?;
            let s = b.reshape(&s, e * heads, dh)?;
            let s = b.matmul(&s, &layer.w_att[r.code()])?;
            let d = b.gather_rows(&proj_d[td.code()], &index.dst[r.code()])?;
            let d = b.reshape(&d, e * heads, dh)?;
            let sd = b.mul(&s, &d)?;
            let score = b.row_sums(&sd);
            let score = b.scale(&score, inv_sqrt);
            scores.push(b.reshape(&score, e, heads)?);

            let m = b.gather_rows(&proj_m[ts], &index.src[r.code()])?;
            let m = b.reshape(&m, e * heads, dh)?;
            msgs.push(b.matmul(&m, &layer.w_msg[r.code()])?);
        }
        let scores = b.concat_rows(&scores.iter().collect::<Vec<_>>())?;
        let msgs = b.concat_rows(&msgs.iter().collect::<Vec<_>>())?;
        let segment = index.segment(td);
        let e = segment.len();
        let weights = b.segment_softmax(&scores, segment, n_dst)?;
        let w = b.reshape(&weights, e * heads, 1)?;
        let weighted = b.mul_col(&msgs, &w)?;
        let weighted = b.reshape(&weighted, e, dim)?;
        aggregate.push(b.scatter_add_rows(&weighted, segment, n_dst)?);
        attention.push(weights);
    }
    let aggregate: [B::Value; 3] = aggregate.try_into().ok().expect("three node types");
    let attention: [B::Value; 3] = attention.try_into().ok().expect("three node types");

    let rate = match mode {
        Mode::Training { dropout } => dropout,
        Mode::Inference => 0.0,
    };
    let z = try_map3(|t| {
        let z = affine(b, &aggregate[t], &layer.out_w[t], &layer.out_b[t])?;
        let z = b.add(&z, &h0[t])?;
        Ok(dropout(b, &z, rate, mode.is_training(), rng)?)
    })?;
    let mu = try_map3(|t| affine(b, &z[t], &layer.mean_w[t], &layer.mean_b[t]))?;
    let logvar = try_map3(|t| affine(b, &z[t], &layer.logvar_w[t], &layer.logvar_b[t]))?;
    let h = if mode.is_training() {
        try_map3(|t| Ok(reparameterize(b, &mu[t], &logvar[t], rng)?))?
    } else {
        mu.clone()
    };
    Ok(LayerOutput {
        latent: LatentState { mu, logvar, h },
        aggregate,
        attention,
    })
}

pub fn decoder<B: Backend>(
    b: &mut B,
    params: &ModelParams<B::Value>,
    latent: &[B::Value; 3],
) -> Result<[B::Value; 3], ModelError> {
    let dec = &params.decoder;
    try_map3(|t| {
        let hidden = affine(b, &latent[t], &dec.hidden_w[t], &dec.hidden_b[t])?;
        let hidden = b.relu(&hidden);
        affine(b, &hidden, &dec.out_w[t], &dec.out_b[t])
    })
}

/// Input projection, every encoder layer, then the decoder.
pub fn forward<B: Backend, R: Rng + ?Sized>(
    b: &mut B,
    params: &ModelParams<B::Value>,
    graph: &HeteroGraph,
    index: &GraphIndex,
    mode: Mode,
    rng: &mut R,
) -> Result<ForwardPass<B::Value>, ModelError>
where
    B::Value: Clone,
{
    for t in NodeType::ALL {
        let (got, expected) = (graph.feature_dim(t), params.shape.feature_dims[t.code()]);
        if graph.node_count(t) > 0 && got != expected {
            return Err(ModelError::DimMismatch {
                node_type: t,
                expected,
                got,
            });
        }
    }
    let inputs = NodeType::ALL.map(|t| {
        let x = graph.features(t);
        let x = if x.rows() == 0 {
            Tensor::zeros(0, params.shape.feature_dims[t.code()])
        } else {
            x.clone()
        };
        b.constant(x)
    });
    let h0 = input_projection(b, params, &inputs)?;
    let mut layers: Vec<LayerOutput<B::Value>> = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let prev = layers.last().map_or(&h0, |l| &l.latent.h);
        let out = encoder_layer(b, layer, params.shape.heads, index, prev, &h0, mode, rng)?;
        layers.push(out);
    }
    let last = &layers
        .last()
        .ok_or(ModelError::InvalidShape("no encoder layers".into()))?
        .latent
        .h;
    let reconstruction = decoder(b, params, last)?;
    Ok(ForwardPass {
        inputs,
        h0,
        layers,
        reconstruction,
    })
}

/// Node types that contribute to a loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeFilter([bool; 3]);

impl NodeFilter {
    pub fn all() -> Self {
        Self([true; 3])
    }

    pub fn only(t: NodeType) -> Self {
        let mut f = [false; 3];
        f[t.code()] = true;
        Self(f)
    }

    pub fn includes(self, t: NodeType) -> bool {
        self.0[t.code()]
    }
}

/// Scalar loss plus the per-node squared errors it was built from.
#[derive(Debug, Clone)]
pub struct LossTerms<V> {
    pub total: V,
    /// `n_t × 1` mean squared error per node, for every type.
    pub per_node: [V; 3],
    pub reconstruction: V,
    pub kl: Option<V>,
}

/// Mean per-node MSE over the filtered nodes, plus `beta · KL` of the last
/// layer's latent when `beta > 0`.
pub fn loss_terms<B: Backend>(
    b: &mut B,
    inputs: &[B::Value; 3],
    reconstruction: &[B::Value; 3],
    latent: Option<(&LatentState<B::Value>, f64)>,
    filter: NodeFilter,
) -> Result<LossTerms<B::Value>, ModelError>
where
    B::Value: Clone,
{
    for t in NodeType::ALL {
        let (want, got) = (b.shape(&inputs[t.code()]), b.shape(&reconstruction[t.code()]));
        if want != got {
            return Err(ModelError::CoverageGap {
                node_type: t,
                expected: want.0,
                got: got.0,
            });
        }
    }
    let per_node = try_map3(|t| {
        let diff = b.sub(&reconstruction[t], &inputs[t])?;
        let sq = b.mul(&diff, &diff)?;
        Ok(b.mean_rows(&sq))
    })?;
    let mut n = 0usize;
    let mut parts = Vec::new();
    for t in NodeType::ALL.into_iter().filter(|&t| filter.includes(t)) {
        n += b.shape(&per_node[t.code()]).0;
        parts.push(b.sum(&per_node[t.code()]));
    }
    let norm = if n == 0 { 0.0 } else { 1.0 / n as f64 };
    let summed = sum_all(b, &parts)?;
    let reconstruction_loss = b.scale(&summed, norm);

    let kl = match latent {
        Some((state, beta)) if beta > 0.0 => {
            let mut parts = Vec::new();
            for t in NodeType::ALL.into_iter().filter(|&t| filter.includes(t)) {
                let (mu, lv) = (&state.mu[t.code()], &state.logvar[t.code()]);
                let (rows, cols) = b.shape(mu);
                let ones = b.constant(Tensor::filled(rows, cols, 1.0));
                let var = b.exp(lv)?;
                let mu2 = b.mul(mu, mu)?;
                let a = b.add(&var, &mu2)?;
                let a = b.sub(&a, lv)?;
                let a = b.sub(&a, &ones)?;
                parts.push(b.sum(&a));
            }
            let s = sum_all(b, &parts)?;
            Some(b.scale(&s, 0.5 * norm * beta))
        }
        _ => None,
    };
    let total = match &kl {
        Some(k) => b.add(&reconstruction_loss, k)?,
        None => reconstruction_loss.clone(),
    };
    Ok(LossTerms {
        total,
        per_node,
        reconstruction: reconstruction_loss,
        kl,
    })
}

fn sum_all<B: Backend>(b: &mut B, parts: &[B::Value]) -> Result<B::Value, ModelError>
where
    B::Value: Clone,
{
    let Some(first) = parts.first() else {
        return Ok(b.constant(Tensor::zeros(1, 1)));
    };
    let mut acc = first.clone();
    for p in &parts[1..] {
        acc = b.add(&acc, p)?;
    }
    Ok(acc)
}
