//! Single-destination attention, one head at a time.
//!
//! These operate on plain slices and exist as the readable definition of a
//! layer; the batched path in `forward` must agree with them.

use super::{EncoderLayerParams, ModelError};
use crate::hetgraph::{EdgeType, NodeType};
use crate::numerics::{NumericsError, Tensor};

/// One incoming neighbor of a destination node.
#[derive(Debug, Clone, Copy)]
pub struct Neighbor<'a> {
    pub node_type: NodeType,
    pub edge_type: EdgeType,
    pub embedding: &'a [f64],
}

fn head_dim(layer: &EncoderLayerParams) -> usize {
    layer.w_att[0].rows()
}

/// `x · W[:, k·dh .. (k+1)·dh]`
fn head_projection(x: &[f64], w: &Tensor, head: usize, dh: usize) -> Result<Vec<f64>, ModelError> {
    if x.len() != w.rows() || (head + 1) * dh > w.cols() {
        return Err(NumericsError::ShapeMismatch {
            op: "head_projection",
            left: (1, x.len()),
            right: w.shape(),
        }
        .into());
    }
    Ok((head * dh..(head + 1) * dh)
        .map(|c| x.iter().enumerate().map(|(r, &v)| v * w.get(r, c)).sum())
        .collect())
}

/// `x · W` for a row vector.
fn vec_mat(x: &[f64], w: &Tensor) -> Vec<f64> {
    (0..w.cols())
        .map(|c| x.iter().enumerate().map(|(r, &v)| v * w.get(r, c)).sum())
        .collect()
}

/// Bilinear score of each neighbor against the destination for one head,
/// scaled by `1/√dh`.
pub fn attention_scores(
    layer: &EncoderLayerParams,
    head: usize,
    dst_type: NodeType,
    dst: &[f64],
    neighbors: &[Neighbor],
) -> Result<Vec<f64>, ModelError> {
    if neighbors.is_empty() {
        return Err(ModelError::EmptyNeighborhood);
    }
    let dh = head_dim(layer);
    let d = head_projection(dst, &layer.linear_d[dst_type.code()], head, dh)?;
    neighbors
        .iter()
        .map(|n| {
            let s = head_projection(n.embedding, &layer.linear_s[n.node_type.code()], head, dh)?;
            let sw = vec_mat(&s, &layer.w_att[n.edge_type.code()]);
            Ok(sw.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>() / (dh as f64).sqrt())
        })
        .collect()
}

/// Softmax over neighbors, independently for each head. `scores[k][i]` is
/// head `k`'s score for neighbor `i`.
pub fn attention_weights(scores: &[Vec<f64>]) -> Vec<Vec<f64>> {
    scores
        .iter()
        .map(|row| {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|s| (s - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            exps.into_iter().map(|e| e / total).collect()
        })
        .collect()
}

/// Head-`k` message of each neighbor: `LinearM(h_v)` slice times `W^Mssg_r`.
pub fn messages(layer: &EncoderLayerParams, head: usize, neighbors: &[Neighbor]) -> Result<Vec<Vec<f64>>, ModelError> {
    let dh = head_dim(layer);
    neighbors
        .iter()
        .map(|n| {
            let m = head_projection(n.embedding, &layer.linear_m[n.node_type.code()], head, dh)?;
            Ok(vec_mat(&m, &layer.w_msg[n.edge_type.code()]))
        })
        .collect()
}

/// Attention-weighted message sum, heads concatenated. Zero when there are
/// no neighbors.
pub fn aggregate(
    layer: &EncoderLayerParams,
    dst_type: NodeType,
    dst: &[f64],
    neighbors: &[Neighbor],
) -> Result<Vec<f64>, ModelError> {
    let dh = head_dim(layer);
    let dim = layer.linear_s[0].cols();
    let mut out = vec![0.0; dim];
    if neighbors.is_empty() {
        return Ok(out);
    }
    for head in 0..dim / dh {
        let scores = attention_scores(layer, head, dst_type, dst, neighbors)?;
        let weights = attention_weights(&[scores]).pop().expect("one head");
        let msgs = messages(layer, head, neighbors)?;
        let slot = &mut out[head * dh..(head + 1) * dh];
        for (w, m) in weights.iter().zip(&msgs) {
            for (o, v) in slot.iter_mut().zip(m) {
                *o += w * v;
            }
        }
    }
    Ok(out)
}
