//! Customer / merchant / transaction graph.
//!
//! Each record `(cc_num, merchant)` contributes one transaction node and four
//! typed edges: customer → transaction (`R1`), transaction → merchant (`R2`)
//! and the two reverses, so every node type receives messages.

mod io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{FeatureTable, TransactionRecord};
use crate::numerics::Tensor;

pub use io::{read_graph, read_graph_from, write_graph, write_graph_to, GRAPH_FORMAT_VERSION, GRAPH_MAGIC};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeType {
    Customer = 0,
    Merchant = 1,
    Transaction = 2,
}

impl NodeType {
    pub const ALL: [NodeType; 3] = [NodeType::Customer, NodeType::Merchant, NodeType::Transaction];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Self> {
        Self::ALL.get(code).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            NodeType::Customer => "customer",
            NodeType::Merchant => "merchant",
            NodeType::Transaction => "transaction",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeType {
    /// Customer initiates transaction.
    R1 = 0,
    /// Transaction settles with merchant.
    R2 = 1,
    R1Rev = 2,
    R2Rev = 3,
}

impl EdgeType {
    pub const ALL: [EdgeType; 4] = [EdgeType::R1, EdgeType::R2, EdgeType::R1Rev, EdgeType::R2Rev];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Self> {
        Self::ALL.get(code).copied()
    }

    pub fn source(self) -> NodeType {
        match self {
            EdgeType::R1 => NodeType::Customer,
            EdgeType::R2 | EdgeType::R1Rev => NodeType::Transaction,
            EdgeType::R2Rev => NodeType::Merchant,
        }
    }

    pub fn target(self) -> NodeType {
        match self {
            EdgeType::R1 | EdgeType::R2Rev => NodeType::Transaction,
            EdgeType::R2 => NodeType::Merchant,
            EdgeType::R1Rev => NodeType::Customer,
        }
    }

    pub fn reverse(self) -> EdgeType {
        match self {
            EdgeType::R1 => EdgeType::R1Rev,
            EdgeType::R2 => EdgeType::R2Rev,
            EdgeType::R1Rev => EdgeType::R1,
            EdgeType::R2Rev => EdgeType::R2,
        }
    }

    pub fn is_forward(self) -> bool {
        matches!(self, EdgeType::R1 | EdgeType::R2)
    }

    /// Edge types whose target is `t`, in code order.
    pub fn into_type(t: NodeType) -> impl Iterator<Item = EdgeType> {
        Self::ALL.into_iter().filter(move |e| e.target() == t)
    }

    pub fn name(self) -> &'static str {
        match self {
            EdgeType::R1 => "r1",
            EdgeType::R2 => "r2",
            EdgeType::R1Rev => "r1_rev",
            EdgeType::R2Rev => "r2_rev",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeRef {
    pub node_type: NodeType,
    pub index: usize,
}

impl NodeRef {
    pub fn new(node_type: NodeType, index: usize) -> Self {
        Self { node_type, index }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("no features for {node_type:?} `{key}`")]
    MissingFeature { node_type: NodeType, key: String },
    #[error("{node_type:?} node {index} out of range ({len} nodes)")]
    NodeOutOfRange {
        node_type: NodeType,
        index: usize,
        len: usize,
    },
    #[error("inconsistent feature widths for {0:?}")]
    RaggedFeatures(NodeType),
    #[error("malformed graph file: {0}")]
    Format(String),
    #[error("unsupported graph file version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for GraphError {
    fn from(e: std::io::Error) -> Self {
        GraphError::Io(e.to_string())
    }
}

/// One problem found by [`HeteroGraph::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    DanglingEdge {
        edge_type: EdgeType,
        position: usize,
        source: usize,
        target: usize,
    },
    TypeMismatch {
        edge_type: EdgeType,
        detail: String,
    },
    DegreeViolation {
        transaction: usize,
        forward_degree: usize,
    },
    FeatureDimMismatch {
        node_type: NodeType,
        detail: String,
    },
    AdjacencyMismatch {
        detail: String,
    },
}

/// Typed nodes with per-type feature matrices and per-type edge lists.
#[derive(Debug, Clone, PartialEq)]
pub struct HeteroGraph {
    keys: [Vec<String>; 3],
    features: [Tensor; 3],
    edges: [Vec<(usize, usize)>; 4],
    /// Per target type, per node: incoming `(source, edge type)` in insertion order.
    incoming: [Vec<Vec<(NodeRef, EdgeType)>>; 3],
}

fn feature_matrix(node_type: NodeType, rows: Vec<&Vec<f64>>) -> Result<Tensor, GraphError> {
    let cols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != cols) {
        return Err(GraphError::RaggedFeatures(node_type));
    }
    let n = rows.len();
    let data = rows.into_iter().flatten().copied().collect();
    Tensor::from_vec(n, cols, data).map_err(|_| GraphError::RaggedFeatures(node_type))
}

impl HeteroGraph {
    /// Builds the graph; node order is first appearance in `records`.
    pub fn build(records: &[TransactionRecord], features: &FeatureTable) -> Result<Self, GraphError> {
        let mut index: [std::collections::HashMap<&str, usize>; 2] = Default::default();
        let mut keys: [Vec<String>; 3] = Default::default();
        let mut edges: [Vec<(usize, usize)>; 4] = Default::default();

        fn intern<'a>(
            index: &mut std::collections::HashMap<&'a str, usize>,
            keys: &mut Vec<String>,
            key: &'a str,
        ) -> usize {
            *index.entry(key).or_insert_with(|| {
                keys.push(key.to_string());
                keys.len() - 1
            })
        }

        for r in records {
            let c = intern(&mut index[0], &mut keys[NodeType::Customer.code()], &r.cc_num);
            let m = intern(&mut index[1], &mut keys[NodeType::Merchant.code()], &r.merchant);
            keys[NodeType::Transaction.code()].push(r.trans_id.clone());
            let t = keys[NodeType::Transaction.code()].len() - 1;
            edges[EdgeType::R1.code()].push((c, t));
            edges[EdgeType::R2.code()].push((t, m));
            edges[EdgeType::R1Rev.code()].push((t, c));
            edges[EdgeType::R2Rev.code()].push((m, t));
        }

        let lookup = |t: NodeType| -> Result<Tensor, GraphError> {
            let table = match t {
                NodeType::Customer => &features.customers,
                NodeType::Merchant => &features.merchants,
                NodeType::Transaction => &features.transactions,
            };
            let rows = keys[t.code()]
                .iter()
                .map(|k| {
                    table.get(k).ok_or_else(|| GraphError::MissingFeature {
                        node_type: t,
                        key: k.clone(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            feature_matrix(t, rows)
        };
        let feats = [
            lookup(NodeType::Customer)?,
            lookup(NodeType::Merchant)?,
            lookup(NodeType::Transaction)?,
        ];
        Ok(Self::from_parts(keys, feats, edges))
    }

    /// Assembles a graph without checking it; see [`HeteroGraph::validate`].
    /// Edges whose endpoints are out of range are kept in the edge lists but
    /// left out of the adjacency index.
    pub fn from_parts(keys: [Vec<String>; 3], features: [Tensor; 3], edges: [Vec<(usize, usize)>; 4]) -> Self {
        let mut incoming: [Vec<Vec<(NodeRef, EdgeType)>>; 3] = std::array::from_fn(|t| vec![Vec::new(); keys[t].len()]);
        // Replay insertion order: edges were appended record by record, one of each type.
        let max_len = edges.iter().map(Vec::len).max().unwrap_or(0);
        for pos in 0..max_len {
            for e in EdgeType::ALL {
                let Some(&(s, d)) = edges[e.code()].get(pos) else {
                    continue;
                };
                let (st, dt) = (e.source(), e.target());
                if s < keys[st.code()].len() && d < keys[dt.code()].len() {
                    incoming[dt.code()][d].push((NodeRef::new(st, s), e));
                }
            }
        }
        Self {
            keys,
            features,
            edges,
            incoming,
        }
    }

    pub fn node_count(&self, t: NodeType) -> usize {
        self.keys[t.code()].len()
    }

    pub fn total_nodes(&self) -> usize {
        self.keys.iter().map(Vec::len).sum()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }

    pub fn keys(&self, t: NodeType) -> &[String] {
        &self.keys[t.code()]
    }

    pub fn features(&self, t: NodeType) -> &Tensor {
        &self.features[t.code()]
    }

    pub fn feature_dim(&self, t: NodeType) -> usize {
        self.features[t.code()].cols()
    }

    pub fn edges(&self, e: EdgeType) -> &[(usize, usize)] {
        &self.edges[e.code()]
    }

    pub fn is_empty(&self) -> bool {
        self.total_nodes() == 0
    }

    /// Sources of all edges ending at `node`, in edge insertion order.
    pub fn neighbors_in(&self, node: NodeRef) -> Result<&[(NodeRef, EdgeType)], GraphError> {
        let list = &self.incoming[node.node_type.code()];
        list.get(node.index)
            .map(Vec::as_slice)
            .ok_or(GraphError::NodeOutOfRange {
                node_type: node.node_type,
                index: node.index,
                len: list.len(),
            })
    }

    /// Structural checks; an empty report means the graph is well formed.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut report = Vec::new();
        for t in NodeType::ALL {
            let f = &self.features[t.code()];
            if f.rows() != self.node_count(t) {
                report.push(Diagnostic::FeatureDimMismatch {
                    node_type: t,
                    detail: format!("{} feature rows for {} nodes", f.rows(), self.node_count(t)),
                });
            }
        }

        let n_tx = self.node_count(NodeType::Transaction);
        let mut r1_in = vec![0usize; n_tx];
        let mut r2_out = vec![0usize; n_tx];
        let mut valid_edges = 0usize;
        for e in EdgeType::ALL {
            let (st, dt) = (e.source(), e.target());
            for (pos, &(s, d)) in self.edges[e.code()].iter().enumerate() {
                if s >= self.node_count(st) || d >= self.node_count(dt) {
                    report.push(Diagnostic::DanglingEdge {
                        edge_type: e,
                        position: pos,
                        source: s,
                        target: d,
                    });
                    continue;
                }
                valid_edges += 1;
                match e {
                    EdgeType::R1 => r1_in[d] += 1,
                    EdgeType::R2 => r2_out[s] += 1,
                    _ => {}
                }
            }
        }
        for t in 0..n_tx {
            let degree = r1_in[t] + r2_out[t];
            if r1_in[t] != 1 || r2_out[t] != 1 {
                report.push(Diagnostic::DegreeViolation {
                    transaction: t,
                    forward_degree: degree,
                });
            }
        }

        // Every forward edge needs its reverse.
        for e in [EdgeType::R1, EdgeType::R2] {
            let mut fwd: Vec<(usize, usize)> = self.edges[e.code()].clone();
            let mut rev: Vec<(usize, usize)> = self.edges[e.reverse().code()].iter().map(|&(s, d)| (d, s)).collect();
            fwd.sort_unstable();
            rev.sort_unstable();
            if fwd != rev {
                report.push(Diagnostic::TypeMismatch {
                    edge_type: e.reverse(),
                    detail: format!("{} edges are not the transpose of {}", e.reverse().name(), e.name()),
                });
            }
        }

        // Adjacency must be exactly the transpose of the edge lists.
        let mut indexed = 0usize;
        for t in NodeType::ALL {
            for (d, list) in self.incoming[t.code()].iter().enumerate() {
                for &(src, e) in list {
                    indexed += 1;
                    if e.target() != t || e.source() != src.node_type {
                        report.push(Diagnostic::TypeMismatch {
                            edge_type: e,
                            detail: format!("adjacency of {} {d} lists a {:?} source", t.name(), src.node_type),
                        });
                    } else if !self.edges[e.code()].contains(&(src.index, d)) {
                        report.push(Diagnostic::AdjacencyMismatch {
                            detail: format!("({}, {d}) missing from {}", src.index, e.name()),
                        });
                    }
                }
            }
        }
        if indexed != valid_edges {
            report.push(Diagnostic::AdjacencyMismatch {
                detail: format!("adjacency holds {indexed} entries for {valid_edges} edges"),
            });
        }
        report
    }
}

/// Convenience wrapper for [`HeteroGraph::build`].
pub fn build_graph(records: &[TransactionRecord], features: &FeatureTable) -> Result<HeteroGraph, GraphError> {
    HeteroGraph::build(records, features)
}
