use std::path::PathBuf;

use fraudgraph::dataio::DataError;
use fraudgraph::detector::DetectorError;
use fraudgraph::hetgraph::GraphError;
use fraudgraph::model::ModelError;
use thiserror::Error;

use crate::modelfile::ModelFileError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    ModelFile(#[from] ModelFileError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable identifier printed after `ERROR`.
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Config(_) => "ConfigError",
            CliError::Data(e) => match e {
                DataError::MissingColumn(_) => "MissingColumn",
                DataError::ParseError { .. } => "ParseError",
                DataError::EmptyFile => "EmptyFile",
                DataError::EmptyInput => "EmptyInput",
                DataError::InsufficientData { .. } => "InsufficientData",
                DataError::InvalidFraction { .. } => "InvalidFraction",
                DataError::InvalidRate(_) => "InvalidRate",
                DataError::InvalidGenerator(_) => "InvalidGenerator",
                DataError::Csv(_) => "CsvError",
                DataError::Io(_) => "IoError",
            },
            CliError::Graph(e) => match e {
                GraphError::VersionMismatch { .. } => "VersionMismatch",
                GraphError::Io(_) => "IoError",
                _ => "GraphError",
            },
            CliError::Model(e) => match e {
                ModelError::DimMismatch { .. } => "DimMismatch",
                _ => "ModelError",
            },
            CliError::Detector(e) => match e {
                DetectorError::NonFiniteLoss { .. } => "NonFiniteLoss",
                DetectorError::EmptyGraph => "EmptyGraph",
                DetectorError::DimMismatch { .. } => "DimMismatch",
                DetectorError::DegenerateLabels => "DegenerateLabels",
                DetectorError::NoPositives => "NoPositives",
                DetectorError::InvalidConfig(_) => "ConfigError",
                DetectorError::Model(ModelError::DimMismatch { .. }) => "DimMismatch",
                _ => "DetectorError",
            },
            CliError::ModelFile(e) => match e {
                ModelFileError::VersionMismatch { .. } => "VersionMismatch",
                ModelFileError::Io(_) => "IoError",
                _ => "ModelFileError",
            },
            CliError::Io { .. } => "IoError",
        }
    }

    /// 2 for bad input or configuration, 1 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self.code() {
            "IoError" | "NonFiniteLoss" | "DetectorError" | "ModelError" => 1,
            _ => 2,
        }
    }

    /// The single diagnostic line written to stderr.
    pub fn line(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!("ERROR {}: {msg}", self.code())
    }
}
