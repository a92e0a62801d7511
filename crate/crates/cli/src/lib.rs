//! Command-line pipeline around the `fraudgraph` library: synthetic data,
//! graph building, training, scoring and evaluation.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod modelfile;
pub mod outputs;
pub mod plot;

pub use args::Cli;
pub use error::CliError;
