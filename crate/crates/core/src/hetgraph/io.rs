//! Versioned binary container for [`HeteroGraph`].
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "FGHGRAPH"
//! version      u32
//! header_len   u64
//! header       JSON, header_len bytes: per node type {code, name, count,
//!              feature_dim, keys}, per edge type {code, name, source,
//!              target, count}
//! features     per node type in code order: count × feature_dim f64, row-major
//! edges        per edge type in code order: count × (source u64, target u64)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EdgeType, GraphError, HeteroGraph, NodeType};
use crate::numerics::Tensor;

pub const GRAPH_MAGIC: [u8; 8] = *b"FGHGRAPH";
pub const GRAPH_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeSection {
    code: usize,
    name: String,
    count: usize,
    feature_dim: usize,
    keys: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeSection {
    code: usize,
    name: String,
    source: usize,
    target: usize,
    count: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: u32,
    node_types: Vec<NodeSection>,
    edge_types: Vec<EdgeSection>,
}

pub fn write_graph_to<W: Write>(mut w: W, graph: &HeteroGraph) -> Result<(), GraphError> {
    let header = Header {
        version: GRAPH_FORMAT_VERSION,
        node_types: NodeType::ALL
            .iter()
            .map(|&t| NodeSection {
                code: t.code(),
                name: t.name().into(),
                count: graph.node_count(t),
                feature_dim: graph.feature_dim(t),
                keys: graph.keys(t).to_vec(),
            })
            .collect(),
        edge_types: EdgeType::ALL
            .iter()
            .map(|&e| EdgeSection {
                code: e.code(),
                name: e.name().into(),
                source: e.source().code(),
                target: e.target().code(),
                count: graph.edges(e).len(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| GraphError::Format(e.to_string()))?;
    w.write_all(&GRAPH_MAGIC)?;
    w.write_all(&GRAPH_FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for t in NodeType::ALL {
        for v in graph.features(t).data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    for e in EdgeType::ALL {
        for &(s, d) in graph.edges(e) {
            w.write_all(&(s as u64).to_le_bytes())?;
            w.write_all(&(d as u64).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_graph(path: impl AsRef<Path>, graph: &HeteroGraph) -> Result<(), GraphError> {
    write_graph_to(BufWriter::new(File::create(path)?), graph)
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, GraphError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_graph_from<R: Read>(mut r: R) -> Result<HeteroGraph, GraphError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if magic != GRAPH_MAGIC {
        return Err(GraphError::Format("bad magic".into()));
    }
    let mut vb = [0u8; 4];
    r.read_exact(&mut vb)?;
    let version = u32::from_le_bytes(vb);
    if version != GRAPH_FORMAT_VERSION {
        return Err(GraphError::VersionMismatch {
            found: version,
            expected: GRAPH_FORMAT_VERSION,
        });
    }
    let header_len = read_u64(&mut r)? as usize;
    let mut json = vec![0u8; header_len];
    r.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| GraphError::Format(e.to_string()))?;
    if header.version != version || header.node_types.len() != 3 || header.edge_types.len() != 4 {
        return Err(GraphError::Format("unexpected header layout".into()));
    }

    let mut keys: [Vec<String>; 3] = Default::default();
    let mut features: [Tensor; 3] = std::array::from_fn(|_| Tensor::zeros(0, 0));
    for (code, sec) in header.node_types.into_iter().enumerate() {
        if sec.code != code || sec.keys.len() != sec.count {
            return Err(GraphError::Format(format!("node section {code} inconsistent")));
        }
        let mut data = Vec::with_capacity(sec.count * sec.feature_dim);
        for _ in 0..sec.count * sec.feature_dim {
            data.push(f64::from_bits(read_u64(&mut r)?));
        }
        features[code] =
            Tensor::from_vec(sec.count, sec.feature_dim, data).map_err(|e| GraphError::Format(e.to_string()))?;
        keys[code] = sec.keys;
    }
    let mut edges: [Vec<(usize, usize)>; 4] = Default::default();
    for (code, sec) in header.edge_types.into_iter().enumerate() {
        let e = EdgeType::from_code(code).expect("four edge types");
        if sec.code != code || sec.source != e.source().code() || sec.target != e.target().code() {
            return Err(GraphError::Format(format!("edge section {code} inconsistent")));
        }
        for _ in 0..sec.count {
            let s = read_u64(&mut r)? as usize;
            let d = read_u64(&mut r)? as usize;
            edges[code].push((s, d));
        }
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(GraphError::Format("trailing bytes".into()));
    }
    Ok(HeteroGraph::from_parts(keys, features, edges))
}

pub fn read_graph(path: impl AsRef<Path>) -> Result<HeteroGraph, GraphError> {
    read_graph_from(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{encode_features, generate_synthetic, FeatureSpec};

    #[test]
    fn round_trip_is_exact() {
        let recs = generate_synthetic(6, 5, 2, 0.1, 4).unwrap();
        let spec = FeatureSpec::from_records(&recs);
        let g = HeteroGraph::build(&recs, &encode_features(&recs, &spec).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_graph_to(&mut buf, &g).unwrap();
        let back = read_graph_from(buf.as_slice()).unwrap();
        assert_eq!(back, g);
        assert!(back.validate().is_empty());
    }

    #[test]
    fn version_and_magic_checked() {
        let recs = generate_synthetic(3, 3, 1, 0.0, 1).unwrap();
        let spec = FeatureSpec::from_records(&recs);
        let g = HeteroGraph::build(&recs, &encode_features(&recs, &spec).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_graph_to(&mut buf, &g).unwrap();
        let mut bumped = buf.clone();
        bumped[8] = 9;
        assert!(matches!(
            read_graph_from(bumped.as_slice()),
            Err(GraphError::VersionMismatch { found: 9, .. })
        ));
        buf[0] = b'X';
        assert!(matches!(read_graph_from(buf.as_slice()), Err(GraphError::Format(_))));
    }
}
