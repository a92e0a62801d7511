//! Graph auto-encoder: typed multi-head attention encoder, Gaussian latent
//! with reparameterized sampling, and a per-type decoder.

mod attention;
mod forward;
mod params;

use rand::Rng;
use thiserror::Error;

use crate::hetgraph::{HeteroGraph, NodeType};
use crate::numerics::{Eval, NumericsError, Tensor};

pub use attention::{aggregate, attention_scores, attention_weights, messages, Neighbor};
pub use forward::{
    decoder, encoder_layer, forward, input_projection, loss_terms, ForwardPass, GraphIndex, LatentState, LayerOutput,
    LossTerms, Mode, NodeFilter,
};
pub(crate) use params::glorot;
pub use params::{DecoderParams, EncoderLayerParams, ModelParams, ModelShape};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("attention over an empty neighborhood")]
    EmptyNeighborhood,
    #[error("reconstruction for {node_type:?} covers {got} nodes, expected {expected}")]
    CoverageGap {
        node_type: NodeType,
        expected: usize,
        got: usize,
    },
    #[error("{node_type:?} features have width {got}, model expects {expected}")]
    DimMismatch {
        node_type: NodeType,
        expected: usize,
        got: usize,
    },
    #[error("invalid model shape: {0}")]
    InvalidShape(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Runs every encoder layer and returns the last layer's latent state.
pub fn encode<R: Rng + ?Sized>(
    params: &ModelParams,
    graph: &HeteroGraph,
    mode: Mode,
    rng: &mut R,
) -> Result<LatentState, ModelError> {
    let pass = forward(&mut Eval, params, graph, &GraphIndex::new(graph), mode, rng)?;
    Ok(pass.layers.into_iter().last().expect("at least one layer").latent)
}

/// Decodes per-type latent matrices back to feature space.
pub fn decode(params: &ModelParams, latent: &[Tensor; 3]) -> Result<[Tensor; 3], ModelError> {
    for t in NodeType::ALL {
        let cols = latent[t.code()].cols();
        if cols != params.shape.dim && latent[t.code()].rows() > 0 {
            return Err(NumericsError::ShapeMismatch {
                op: "decode",
                left: latent[t.code()].shape(),
                right: (params.shape.dim, params.shape.decoder_width),
            }
            .into());
        }
    }
    decoder(&mut Eval, params, latent)
}

/// Reconstruction loss of a graph as plain numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub total: f64,
    /// Mean squared error of each node, indexed by node type code.
    pub per_node: [Vec<f64>; 3],
}

/// Mean per-node MSE between the graph's features and `reconstructed`,
/// averaged over the filtered nodes. With `kl = Some((latent, beta))` and
/// `beta > 0` the scaled KL divergence to `N(0, I)` is added.
pub fn reconstruction_loss(
    graph: &HeteroGraph,
    reconstructed: &[Tensor; 3],
    filter: NodeFilter,
    kl: Option<(&LatentState, f64)>,
) -> Result<LossReport, ModelError> {
    let inputs = NodeType::ALL.map(|t| {
        let x = graph.features(t);
        if x.rows() == 0 {
            Tensor::zeros(0, reconstructed[t.code()].cols())
        } else {
            x.clone()
        }
    });
    let terms = loss_terms(&mut Eval, &inputs, reconstructed, kl, filter)?;
    Ok(LossReport {
        total: terms.total.get(0, 0),
        per_node: terms.per_node.map(Tensor::into_data),
    })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::dataio::{encode_features, generate_synthetic, FeatureSpec};
    use crate::hetgraph::{EdgeType, NodeRef};
    use crate::numerics::kernels;

    fn shape_for(graph: &HeteroGraph, dim: usize, heads: usize, depth: usize) -> ModelShape {
        ModelShape {
            dim,
            heads,
            encoder_depth: depth,
            decoder_width: 6,
            feature_dims: NodeType::ALL.map(|t| graph.feature_dim(t)),
        }
    }

    fn sample_graph(seed: u64) -> HeteroGraph {
        let recs = generate_synthetic(4, 3, 2, 0.1, seed).unwrap();
        let spec = FeatureSpec::from_records(&recs);
        HeteroGraph::build(&recs, &encode_features(&recs, &spec).unwrap()).unwrap()
    }

    fn identity_layer(dim: usize, dh: usize) -> EncoderLayerParams {
        let i = Tensor::identity(dim);
        let r = Tensor::identity(dh);
        EncoderLayerParams {
            linear_s: [i.clone(), i.clone(), i.clone()],
            linear_d: [i.clone(), i.clone(), i.clone()],
            linear_m: [i.clone(), i.clone(), i.clone()],
            w_att: [r.clone(), r.clone(), r.clone(), r.clone()],
            w_msg: [r.clone(), r.clone(), r.clone(), r.clone()],
            out_w: [i.clone(), i.clone(), i.clone()],
            out_b: [Tensor::zeros(1, dim), Tensor::zeros(1, dim), Tensor::zeros(1, dim)],
            mean_w: [i.clone(), i.clone(), i.clone()],
            mean_b: [Tensor::zeros(1, dim), Tensor::zeros(1, dim), Tensor::zeros(1, dim)],
            logvar_w: [i.clone(), i.clone(), i],
            logvar_b: [Tensor::zeros(1, dim), Tensor::zeros(1, dim), Tensor::zeros(1, dim)],
        }
    }

    fn random_layer(dim: usize, heads: usize, seed: u64) -> EncoderLayerParams {
        let shape = ModelShape {
            dim,
            heads,
            encoder_depth: 1,
            decoder_width: 2,
            feature_dims: [1, 1, 1],
        };
        ModelParams::init(shape, seed).unwrap().layers.pop().unwrap()
    }

    fn nb(node_type: NodeType, edge_type: EdgeType, embedding: &[f64]) -> Neighbor<'_> {
        Neighbor {
            node_type,
            edge_type,
            embedding,
        }
    }

    #[test]
    fn scores_zero_identity_and_bilinear() {
        let layer = identity_layer(4, 4);
        let zero = [0.0; 4];
        let s = attention_scores(
            &layer,
            0,
            NodeType::Transaction,
            &zero,
            &[nb(NodeType::Customer, EdgeType::R1, &zero)],
        )
        .unwrap();
        assert_eq!(s, vec![0.0]);

        let e1 = [1.0, 0.0, 0.0, 0.0];
        let s = attention_scores(
            &layer,
            0,
            NodeType::Transaction,
            &e1,
            &[nb(NodeType::Customer, EdgeType::R1, &e1)],
        )
        .unwrap();
        assert!((s[0] - 0.5).abs() < 1e-15);

        let layer = random_layer(8, 2, 3);
        let v = [0.3, -1.2, 0.5, 0.9, -0.1, 0.4, 2.0, -0.7];
        let v2: Vec<f64> = v.iter().map(|x| 2.0 * x).collect();
        let d = [0.2, 0.1, -0.4, 0.8, 1.1, -0.3, 0.6, 0.05];
        for head in 0..2 {
            let a = attention_scores(
                &layer,
                head,
                NodeType::Merchant,
                &d,
                &[nb(NodeType::Transaction, EdgeType::R2, &v)],
            )
            .unwrap();
            let b = attention_scores(
                &layer,
                head,
                NodeType::Merchant,
                &d,
                &[nb(NodeType::Transaction, EdgeType::R2, &v2)],
            )
            .unwrap();
            assert!((b[0] - 2.0 * a[0]).abs() < 1e-12);
        }
        assert!(matches!(
            attention_scores(&layer, 0, NodeType::Merchant, &d, &[]),
            Err(ModelError::EmptyNeighborhood)
        ));
    }

    #[test]
    fn weight_examples() {
        assert_eq!(attention_weights(&[vec![3.7], vec![-2.0]]), vec![vec![1.0], vec![1.0]]);
        assert_eq!(attention_weights(&[vec![0.4, 0.4]]), vec![vec![0.5, 0.5]]);
        let w = attention_weights(&[vec![0.0, 3f64.ln()]]);
        assert!((w[0][0] - 0.25).abs() < 1e-15 && (w[0][1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn message_examples() {
        let mut layer = identity_layer(4, 2);
        let zero = [0.0; 4];
        let m = messages(&layer, 1, &[nb(NodeType::Customer, EdgeType::R1, &zero)]).unwrap();
        assert_eq!(m, vec![vec![0.0, 0.0]]);

        layer.w_msg[0] = Tensor::identity(2).map(|v| 2.0 * v);
        let h = [1.0, 2.0, 3.0, 4.0];
        let m = messages(&layer, 1, &[nb(NodeType::Customer, EdgeType::R1, &h)]).unwrap();
        assert_eq!(m, vec![vec![6.0, 8.0]]);

        // Oracle: full matrix products, then column slicing.
        let layer = random_layer(4, 2, 11);
        let h = [0.5, -0.25, 1.5, 0.75];
        let full = kernels::matmul(&Tensor::row_vector(&h), &layer.linear_m[1]).unwrap();
        for head in 0..2 {
            let slice = kernels::slice_cols(&full, head * 2, head * 2 + 2).unwrap();
            let want = kernels::matmul(&slice, &layer.w_msg[3]).unwrap();
            let got = messages(&layer, head, &[nb(NodeType::Merchant, EdgeType::R2Rev, &h)]).unwrap();
            for (a, b) in got[0].iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn aggregate_examples() {
        let layer = random_layer(4, 2, 5);
        let v = [0.1, 0.2, -0.3, 0.4];
        let d = [1.0, 0.0, 0.5, -1.0];
        let one = [nb(NodeType::Customer, EdgeType::R1, &v)];
        let agg = aggregate(&layer, NodeType::Transaction, &d, &one).unwrap();
        let concat: Vec<f64> = (0..2)
            .flat_map(|k| messages(&layer, k, &one).unwrap().remove(0))
            .collect();
        assert_eq!(agg, concat);

        // A zero destination makes every score 0, so weights are equal.
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        let pair = [
            nb(NodeType::Customer, EdgeType::R1, &v),
            nb(NodeType::Customer, EdgeType::R1, &neg),
        ];
        let agg = aggregate(&layer, NodeType::Transaction, &[0.0; 4], &pair).unwrap();
        assert!(agg.iter().all(|x| x.abs() < 1e-15));

        assert_eq!(aggregate(&layer, NodeType::Transaction, &d, &[]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn aggregate_matches_loop_oracle_and_is_order_invariant() {
        let layer = random_layer(6, 3, 8);
        let embs = [
            [0.3, -0.1, 0.8, 0.0, 1.2, -0.5],
            [-0.7, 0.4, 0.2, 0.9, -0.3, 0.6],
            [0.05, 0.5, -0.9, 0.1, 0.2, 0.3],
        ];
        let d = [0.4, -0.2, 0.1, 0.7, -0.6, 0.25];
        let types = [
            (NodeType::Customer, EdgeType::R1),
            (NodeType::Merchant, EdgeType::R2Rev),
            (NodeType::Customer, EdgeType::R1),
        ];
        let nbs: Vec<Neighbor> = embs.iter().zip(types).map(|(e, (t, r))| nb(t, r, e)).collect();
        let got = aggregate(&layer, NodeType::Transaction, &d, &nbs).unwrap();

        let dh = 2;
        let mut want = vec![0.0; 6];
        for k in 0..3 {
            let mut scores = Vec::new();
            let mut msgs = Vec::new();
            for (e, (t, r)) in embs.iter().zip(types) {
                let mut s = vec![0.0; dh];
                let mut q = vec![0.0; dh];
                let mut m = vec![0.0; dh];
                for j in 0..dh {
                    for i in 0..6 {
                        s[j] += e[i] * layer.linear_s[t.code()].get(i, k * dh + j);
                        q[j] += d[i] * layer.linear_d[2].get(i, k * dh + j);
                        m[j] += e[i] * layer.linear_m[t.code()].get(i, k * dh + j);
                    }
                }
                let mut score = 0.0;
                let mut msg = vec![0.0; dh];
                for a in 0..dh {
                    for b in 0..dh {
                        score += s[a] * layer.w_att[r.code()].get(a, b) * q[b];
                        msg[b] += m[a] * layer.w_msg[r.code()].get(a, b);
                    }
                }
                scores.push(score / (dh as f64).sqrt());
                msgs.push(msg);
            }
            let z: f64 = scores.iter().map(|s| s.exp()).sum();
            for (s, m) in scores.iter().zip(&msgs) {
                for j in 0..dh {
                    want[k * dh + j] += s.exp() / z * m[j];
                }
            }
        }
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }

        let reversed: Vec<Neighbor> = nbs.iter().rev().copied().collect();
        let again = aggregate(&layer, NodeType::Transaction, &d, &reversed).unwrap();
        for (a, b) in got.iter().zip(&again) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn batched_layer_agrees_with_per_node_ops() {
        let g = sample_graph(21);
        let params = ModelParams::init(shape_for(&g, 8, 2, 1), 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pass = forward(&mut Eval, &params, &g, &GraphIndex::new(&g), Mode::Inference, &mut rng).unwrap();
        let layer = &params.layers[0];
        for t in NodeType::ALL {
            for i in 0..g.node_count(t) {
                let incoming = g.neighbors_in(NodeRef::new(t, i)).unwrap();
                let nbs: Vec<Neighbor> = incoming
                    .iter()
                    .map(|(n, r)| nb(n.node_type, *r, pass.h0[n.node_type.code()].row(n.index)))
                    .collect();
                let want = aggregate(layer, t, pass.h0[t.code()].row(i), &nbs).unwrap();
                let got = pass.layers[0].aggregate[t.code()].row(i);
                for (a, b) in got.iter().zip(&want) {
                    assert!((a - b).abs() < 1e-12, "{t:?} {i}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let g = sample_graph(2);
        let params = ModelParams::init(shape_for(&g, 8, 4, 1), 1).unwrap();
        let index = GraphIndex::new(&g);
        let pass = forward(
            &mut Eval,
            &params,
            &g,
            &index,
            Mode::Inference,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        for t in NodeType::ALL {
            let w = &pass.layers[0].attention[t.code()];
            let sums = kernels::scatter_add_rows(w, index.segment(t), g.node_count(t)).unwrap();
            for v in sums.data() {
                assert!((v - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn isolated_node_uses_residual_only() {
        let keys = [vec!["c".to_string()], vec![], vec![]];
        let features = [
            Tensor::from_rows(&[vec![1.0, -2.0, 0.5]]),
            Tensor::zeros(0, 3),
            Tensor::zeros(0, 6),
        ];
        let g = HeteroGraph::from_parts(keys, features, Default::default());
        let params = ModelParams::init(shape_for(&g, 4, 2, 1), 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pass = forward(&mut Eval, &params, &g, &GraphIndex::new(&g), Mode::Inference, &mut rng).unwrap();
        let l = &params.layers[0];
        assert_eq!(pass.layers[0].aggregate[0].data(), &[0.0; 4]);
        // zero aggregate still passes through out_b, which is zero at init
        let mu = kernels::add_row(&kernels::matmul(&pass.h0[0], &l.mean_w[0]).unwrap(), &l.mean_b[0]).unwrap();
        assert!(pass.layers[0].latent.mu[0].max_abs_diff(&mu) < 1e-14);
        assert_eq!(pass.layers[0].latent.h, pass.layers[0].latent.mu);
    }

    #[test]
    fn inference_is_deterministic_and_h_is_mu() {
        let g = sample_graph(6);
        let params = ModelParams::init(shape_for(&g, 8, 2, 2), 3).unwrap();
        let a = encode(&params, &g, Mode::Inference, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = encode(&params, &g, Mode::Inference, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.h, a.mu);
        let t = encode(
            &params,
            &g,
            Mode::Training { dropout: 0.4 },
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        assert_ne!(t.h, t.mu);
    }

    #[test]
    fn encode_is_layer_composition() {
        let g = sample_graph(7);
        let params = ModelParams::init(shape_for(&g, 8, 2, 2), 5).unwrap();
        let index = GraphIndex::new(&g);
        let rng = &mut ChaCha8Rng::seed_from_u64(0);
        let inputs = NodeType::ALL.map(|t| g.features(t).clone());
        let h0 = input_projection(&mut Eval, &params, &inputs).unwrap();
        let l1 = encoder_layer(&mut Eval, &params.layers[0], 2, &index, &h0, &h0, Mode::Inference, rng).unwrap();
        let l2 = encoder_layer(
            &mut Eval,
            &params.layers[1],
            2,
            &index,
            &l1.latent.h,
            &h0,
            Mode::Inference,
            rng,
        )
        .unwrap();
        assert_eq!(encode(&params, &g, Mode::Inference, rng).unwrap(), l2.latent);

        let mut one = params.clone();
        one.layers.truncate(1);
        one.shape.encoder_depth = 1;
        assert_eq!(encode(&one, &g, Mode::Inference, rng).unwrap(), l1.latent);
    }

    #[test]
    fn decode_examples() {
        let g = sample_graph(1);
        let mut params = ModelParams::init(shape_for(&g, 6, 2, 1), 0).unwrap();
        let zero = NodeType::ALL.map(|t| Tensor::zeros(g.node_count(t), 6));
        let out = decode(&params, &zero).unwrap();
        assert!(out.iter().all(|t| t.data().iter().all(|&v| v == 0.0)));

        // identity decoder on nonnegative latents
        params.shape.decoder_width = 6;
        params.shape.feature_dims = [6; 3];
        for t in 0..3 {
            params.decoder.hidden_w[t] = Tensor::identity(6);
            params.decoder.hidden_b[t] = Tensor::zeros(1, 6);
            params.decoder.out_w[t] = Tensor::identity(6);
            params.decoder.out_b[t] = Tensor::zeros(1, 6);
        }
        let latent = [0, 1, 2].map(|t| Tensor::from_rows(&[vec![0.1 * t as f64, 1.0, 2.0, 0.0, 3.5, 0.25]]));
        assert_eq!(decode(&params, &latent).unwrap(), latent);
        let bad = [0, 1, 2].map(|_| Tensor::zeros(1, 5));
        assert!(decode(&params, &bad).is_err());
    }

    #[test]
    fn decode_matches_recompute() {
        let g = sample_graph(3);
        let params = ModelParams::init(shape_for(&g, 4, 2, 1), 13).unwrap();
        let latent = NodeType::ALL.map(|t| {
            let n = g.node_count(t);
            Tensor::from_vec(n, 4, (0..n * 4).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap()
        });
        let out = decode(&params, &latent).unwrap();
        for t in 0..3 {
            let d = &params.decoder;
            for r in 0..latent[t].rows() {
                let mut hidden = [0.0; 6];
                for (j, h) in hidden.iter_mut().enumerate() {
                    *h = d.hidden_b[t].get(0, j)
                        + (0..4)
                            .map(|i| latent[t].get(r, i) * d.hidden_w[t].get(i, j))
                            .sum::<f64>();
                    *h = h.max(0.0);
                }
                for c in 0..out[t].cols() {
                    let v = d.out_b[t].get(0, c) + (0..6).map(|j| hidden[j] * d.out_w[t].get(j, c)).sum::<f64>();
                    assert!((out[t].get(r, c) - v).abs() < 1e-12);
                }
            }
        }
    }

    fn two_dim_graph() -> HeteroGraph {
        let keys = [vec!["c".to_string()], vec!["m".to_string()], vec![]];
        let features = [
            Tensor::from_rows(&[vec![1.0, 0.0]]),
            Tensor::from_rows(&[vec![0.5, 0.5]]),
            Tensor::zeros(0, 2),
        ];
        HeteroGraph::from_parts(keys, features, Default::default())
    }

    #[test]
    fn loss_examples() {
        let g = two_dim_graph();
        let exact = NodeType::ALL.map(|t| g.features(t).clone());
        let r = reconstruction_loss(&g, &exact, NodeFilter::all(), None).unwrap();
        assert_eq!(r.total, 0.0);
        assert!(r.per_node.iter().flatten().all(|&v| v == 0.0));

        let zeros = [
            Tensor::zeros(1, 2),
            Tensor::from_rows(&[vec![0.5, 0.5]]),
            Tensor::zeros(0, 2),
        ];
        let r = reconstruction_loss(&g, &zeros, NodeFilter::only(NodeType::Customer), None).unwrap();
        assert_eq!(r.per_node[0], vec![0.5]);
        assert_eq!(r.total, 0.5);
        let r = reconstruction_loss(&g, &zeros, NodeFilter::all(), None).unwrap();
        assert_eq!(r.total, 0.25);

        let short = [Tensor::zeros(0, 2), Tensor::zeros(1, 2), Tensor::zeros(0, 2)];
        assert!(matches!(
            reconstruction_loss(&g, &short, NodeFilter::all(), None),
            Err(ModelError::CoverageGap {
                node_type: NodeType::Customer,
                ..
            })
        ));
    }

    #[test]
    fn kl_term() {
        let g = two_dim_graph();
        let exact = NodeType::ALL.map(|t| g.features(t).clone());
        let zero = || [Tensor::zeros(1, 2), Tensor::zeros(1, 2), Tensor::zeros(0, 2)];
        let standard = LatentState {
            mu: zero(),
            logvar: zero(),
            h: zero(),
        };
        let r = reconstruction_loss(&g, &exact, NodeFilter::all(), Some((&standard, 1.0))).unwrap();
        assert_eq!(r.total, 0.0);

        // mu = 1 in one dim of one node: KL = 0.5, averaged over 2 nodes
        let mut shifted = standard.clone();
        shifted.mu[0] = Tensor::from_rows(&[vec![1.0, 0.0]]);
        let r = reconstruction_loss(&g, &exact, NodeFilter::all(), Some((&shifted, 2.0))).unwrap();
        assert!((r.total - 0.5).abs() < 1e-15);
        let r = reconstruction_loss(&g, &exact, NodeFilter::all(), Some((&shifted, 0.0))).unwrap();
        assert_eq!(r.total, 0.0);
    }

    #[test]
    fn init_is_seeded_and_shapes_check() {
        let shape = ModelShape {
            dim: 8,
            heads: 2,
            encoder_depth: 2,
            decoder_width: 5,
            feature_dims: [3, 3, 9],
        };
        let a = ModelParams::init(shape, 1).unwrap();
        assert_eq!(a, ModelParams::init(shape, 1).unwrap());
        assert_ne!(a, ModelParams::init(shape, 2).unwrap());
        a.check_shapes().unwrap();
        let names: Vec<String> = a.named().into_iter().map(|(n, _)| n).collect();
        let mut dedup = names.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), names.len());
        assert_eq!(a.tensors().len(), a.clone().tensors_mut().len());

        let bad = ModelShape { heads: 3, ..shape };
        assert!(matches!(ModelParams::init(bad, 0), Err(ModelError::InvalidShape(_))));
    }
}
