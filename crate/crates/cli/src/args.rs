use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "fraudgraph", version, about = "Graph auto-encoder fraud detection pipeline")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for default output files.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[command(flatten)]
    pub columns: ColumnFlags,
    #[command(subcommand)]
    pub command: Command,
}

/// CSV header names, overriding the Sparkov defaults.
#[derive(Debug, Default, Args)]
pub struct ColumnFlags {
    #[arg(long, global = true)]
    pub col_trans_id: Option<String>,
    #[arg(long, global = true)]
    pub col_timestamp: Option<String>,
    #[arg(long, global = true)]
    pub col_cc_num: Option<String>,
    #[arg(long, global = true)]
    pub col_merchant: Option<String>,
    #[arg(long, global = true)]
    pub col_category: Option<String>,
    #[arg(long, global = true)]
    pub col_amount: Option<String>,
    #[arg(long, global = true)]
    pub col_is_fraud: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic transaction CSV.
    Generate(GenerateArgs),
    /// Build the heterogeneous graph of a CSV and save it.
    BuildGraph(BuildGraphArgs),
    /// Train on the genuine part of a CSV and save the model.
    Train(TrainArgs),
    /// Score every transaction of a CSV with a saved model.
    Score(ScoreArgs),
    /// Fit the threshold on validation data and report test metrics.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Default, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Size relative to the reference dataset (1000 customers, 800 merchants).
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long)]
    pub customers: Option<usize>,
    #[arg(long)]
    pub merchants: Option<usize>,
    #[arg(long)]
    pub days: Option<u32>,
    /// Constant fraud rate; replaces the two-period default.
    #[arg(long)]
    pub fraud_rate: Option<f64>,
}

#[derive(Debug, Default, Args)]
pub struct BuildGraphArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Default, Args)]
pub struct SplitFlags {
    #[arg(long)]
    pub val_fraction: Option<f64>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
}

#[derive(Debug, Default, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub encoder_depth: Option<usize>,
    #[arg(long)]
    pub decoder_width: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub kl_beta: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[command(flatten)]
    pub split: SplitFlags,
}

#[derive(Debug, Default, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Use this threshold instead of the one stored in the model.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Default, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub split: SplitFlags,
}
