//! Credit-card fraud detection with a heterogeneous graph auto-encoder.
//!
//! Records flow through [`dataio`] (parsing, features, splits, synthetic
//! data) into a [`hetgraph::HeteroGraph`], which [`model`] encodes and
//! reconstructs. [`detector`] trains on genuine transactions and turns
//! per-transaction reconstruction error into verdicts and metrics.

pub mod dataio;
pub mod detector;
pub mod hetgraph;
pub mod model;
pub mod numerics;

use thiserror::Error;

/// Any error raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] dataio::DataError),
    #[error(transparent)]
    Graph(#[from] hetgraph::GraphError),
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Detector(#[from] detector::DetectorError),
    #[error(transparent)]
    Numerics(#[from] numerics::NumericsError),
}
