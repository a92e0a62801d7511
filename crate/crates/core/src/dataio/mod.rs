//! Transaction tables: CSV ingestion, feature encoding, chronological
//! splitting and a seeded synthetic generator.

mod csvio;
mod features;
mod split;
mod synth;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use csvio::{format_timestamp, parse_csv, parse_timestamp, read_csv, write_csv, write_csv_to, ColumnMap};
pub use features::{encode_features, FeatureSpec, FeatureTable, OTHER_CATEGORY};
pub use split::{split_records, SplitTable};
pub use synth::{
    generate_synthetic, SyntheticConfig, SyntheticStream, CATEGORIES, REFERENCE_TEST_ABNORMAL, REFERENCE_TEST_NORMAL,
    REFERENCE_TRAIN_ABNORMAL, REFERENCE_TRAIN_NORMAL, SIMULATION_START,
};

/// One row of a transaction table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransactionRecord {
    pub trans_id: String,
    /// Seconds since the Unix epoch, UTC.
    pub timestamp: i64,
    pub cc_num: String,
    pub merchant: String,
    pub category: String,
    pub amount: f64,
    pub is_fraud: bool,
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: cannot parse field `{field}`: {message}")]
    ParseError { row: u64, field: String, message: String },
    #[error("input file is empty")]
    EmptyFile,
    #[error("no records to encode")]
    EmptyInput,
    #[error("{split} split would hold {count} records; at least 10 required")]
    InsufficientData { split: &'static str, count: usize },
    #[error("invalid split fractions {val} / {test}")]
    InvalidFraction { val: f64, test: f64 },
    #[error("invalid fraud rate {0}; expected a value in [0, 0.5]")]
    InvalidRate(f64),
    #[error("invalid generator parameters: {0}")]
    InvalidGenerator(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
