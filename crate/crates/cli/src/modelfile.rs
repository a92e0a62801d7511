//! Trained model container.
//!
//! ```text
//! magic        8 bytes  "FGMODEL\0"
//! version      u32 LE
//! header_len   u64 LE
//! header       JSON: config, feature spec, shape, threshold, fingerprint,
//!              tensor names and shapes in storage order
//! tensors      f64 LE, row-major, in header order
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use fraudgraph::dataio::{write_csv_to, ColumnMap, FeatureSpec, TransactionRecord};
use fraudgraph::detector::{ThresholdMethod, TrainConfig};
use fraudgraph::model::{ModelParams, ModelShape};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const MODEL_MAGIC: [u8; 8] = *b"FGMODEL\0";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported model file version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("malformed model file: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Record count and SHA-256 of the canonical CSV rendering of the training
/// records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fingerprint {
    pub record_count: u64,
    pub sha256: String,
}

impl Fingerprint {
    pub fn of(records: &[TransactionRecord]) -> Self {
        let mut buf = Vec::new();
        write_csv_to(&mut buf, records, &ColumnMap::default()).expect("writing to memory");
        Self {
            record_count: records.len() as u64,
            sha256: hex::encode(Sha256::digest(&buf)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoredThreshold {
    pub value: f64,
    pub method: ThresholdMethod,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub config: TrainConfig,
    pub feature_spec: FeatureSpec,
    pub threshold: Option<StoredThreshold>,
    pub fingerprint: Fingerprint,
    pub params: ModelParams,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    config: TrainConfig,
    feature_spec: FeatureSpec,
    shape: ModelShape,
    threshold: Option<StoredThreshold>,
    fingerprint: Fingerprint,
    tensors: Vec<TensorEntry>,
}

impl ModelFile {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), ModelFileError> {
        let named = self.params.named();
        let header = Header {
            format_version: MODEL_FORMAT_VERSION,
            config: self.config.clone(),
            feature_spec: self.feature_spec.clone(),
            shape: self.params.shape,
            threshold: self.threshold,
            fingerprint: self.fingerprint.clone(),
            tensors: named
                .iter()
                .map(|(name, t)| TensorEntry {
                    name: name.clone(),
                    rows: t.rows(),
                    cols: t.cols(),
                })
                .collect(),
        };
        let json = serde_json::to_vec_pretty(&header).map_err(|e| ModelFileError::Format(e.to_string()))?;
        w.write_all(&MODEL_MAGIC)?;
        w.write_all(&MODEL_FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for (_, t) in named {
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelFileError> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, ModelFileError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if magic != MODEL_MAGIC {
            return Err(ModelFileError::BadMagic);
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != MODEL_FORMAT_VERSION {
            return Err(ModelFileError::VersionMismatch {
                found: version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let len = usize::try_from(u64::from_le_bytes(b8)).map_err(|e| ModelFileError::Format(e.to_string()))?;
        let mut json = vec![0u8; len];
        r.read_exact(&mut json)?;
        let header: Header = serde_json::from_slice(&json).map_err(|e| ModelFileError::Format(e.to_string()))?;
        if header.format_version != version {
            return Err(ModelFileError::Format("header version disagrees with preamble".into()));
        }

        let mut params = ModelParams::init(header.shape, 0).map_err(|e| ModelFileError::Format(e.to_string()))?;
        let expected: Vec<(String, (usize, usize))> = params.named().into_iter().map(|(n, t)| (n, t.shape())).collect();
        if expected.len() != header.tensors.len() {
            return Err(ModelFileError::Format(format!(
                "{} tensors stored, shape implies {}",
                header.tensors.len(),
                expected.len()
            )));
        }
        for ((name, shape), entry) in expected.iter().zip(&header.tensors) {
            if *name != entry.name || *shape != (entry.rows, entry.cols) {
                return Err(ModelFileError::Format(format!(
                    "tensor {} {}x{} does not match expected {name} {}x{}",
                    entry.name, entry.rows, entry.cols, shape.0, shape.1
                )));
            }
        }
        for t in params.tensors_mut() {
            for v in t.data_mut() {
                r.read_exact(&mut b8)?;
                *v = f64::from_le_bytes(b8);
            }
        }
        if r.read(&mut [0u8; 1])? != 0 {
            return Err(ModelFileError::Format("trailing bytes".into()));
        }
        Ok(Self {
            config: header.config,
            feature_spec: header.feature_spec,
            threshold: header.threshold,
            fingerprint: header.fingerprint,
            params,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelFileError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fraudgraph::dataio::generate_synthetic;

    fn sample() -> ModelFile {
        let recs = generate_synthetic(3, 3, 1, 0.0, 2).unwrap();
        let spec = FeatureSpec::from_records(&recs);
        let config = TrainConfig {
            dim: 4,
            heads: 2,
            encoder_depth: 1,
            decoder_width: 3,
            ..TrainConfig::default()
        };
        let dims = [
            spec.feature_dim_customer,
            spec.feature_dim_merchant,
            spec.feature_dim_transaction,
        ];
        let mut params = ModelParams::init(config.model_shape(dims), 5).unwrap();
        // values whose decimal form would not round-trip through text
        params.input_w[0].data_mut()[0] = 0.1 + 0.2;
        params.input_b[2].data_mut()[1] = f64::MIN_POSITIVE / 3.0;
        ModelFile {
            config,
            feature_spec: spec,
            threshold: Some(StoredThreshold {
                value: 0.1 + 0.7,
                method: ThresholdMethod::BestF1,
            }),
            fingerprint: Fingerprint::of(&recs),
            params,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = sample();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let back = ModelFile::read_from(buf.as_slice()).unwrap();
        for ((_, a), (_, b)) in m.params.named().iter().zip(back.params.named()) {
            let bits = |t: &fraudgraph::numerics::Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
        assert_eq!(back, m);
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn version_and_corruption_are_errors() {
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();
        let mut v2 = buf.clone();
        v2[8] = 2;
        assert!(matches!(
            ModelFile::read_from(v2.as_slice()),
            Err(ModelFileError::VersionMismatch { found: 2, expected: 1 })
        ));
        let mut magic = buf.clone();
        magic[0] = b'X';
        assert!(matches!(
            ModelFile::read_from(magic.as_slice()),
            Err(ModelFileError::BadMagic)
        ));
        let truncated = &buf[..buf.len() - 3];
        assert!(matches!(ModelFile::read_from(truncated), Err(ModelFileError::Io(_))));
        let mut longer = buf.clone();
        longer.push(0);
        assert!(matches!(
            ModelFile::read_from(longer.as_slice()),
            Err(ModelFileError::Format(_))
        ));
    }

    #[test]
    fn fingerprint_tracks_content() {
        let recs = generate_synthetic(3, 3, 1, 0.0, 2).unwrap();
        let a = Fingerprint::of(&recs);
        assert_eq!(a.record_count, recs.len() as u64);
        assert_eq!(a.sha256.len(), 64);
        let mut changed = recs.clone();
        changed[0].amount += 1.0;
        assert_ne!(Fingerprint::of(&changed).sha256, a.sha256);
    }
}
