//! Run configuration: a TOML file merged with command-line flags.
//!
//! Relative paths in the file are taken relative to the file's directory;
//! relative paths given as flags are taken relative to the working
//! directory. Flags win over the file.

use std::path::{Path, PathBuf};

use fraudgraph::dataio::{ColumnMap, SyntheticConfig};
use fraudgraph::detector::TrainConfig;
use serde::Deserialize;

use crate::args::{Cli, ColumnFlags, Command, SplitFlags, TrainArgs};
use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub input: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOverrides {
    pub dim: Option<usize>,
    pub heads: Option<usize>,
    pub encoder_depth: Option<usize>,
    pub decoder_width: Option<usize>,
    pub dropout: Option<f64>,
    pub weight_decay: Option<f64>,
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub kl_beta: Option<f64>,
    pub patience: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub scale: Option<f64>,
    pub n_customers: Option<usize>,
    pub n_merchants: Option<usize>,
    pub n_days: Option<u32>,
    pub fraud_rate: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub val_fraction: Option<f64>,
    pub test_fraction: Option<f64>,
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    /// Score threshold overriding the model's stored one.
    pub threshold: Option<f64>,
    pub paths: PathsConfig,
    pub columns: ColumnMap,
    pub train: TrainOverrides,
    pub generate: GenerateConfig,
    pub split: SplitConfig,
}

pub const DEFAULT_SCALE: f64 = 0.01;
pub const DEFAULT_VAL_FRACTION: f64 = 0.2;
pub const DEFAULT_TEST_FRACTION: f64 = 0.2;

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("config: {}", e.message())))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(inner) = p.as_mut() {
                if inner.is_relative() {
                    *inner = base.join(&*inner);
                }
            }
        };
        rebase(&mut cfg.out_dir);
        rebase(&mut cfg.paths.input);
        rebase(&mut cfg.paths.model);
        rebase(&mut cfg.paths.output);
        Ok(cfg)
    }
}

/// Fully merged settings for one command.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    pub columns: ColumnMap,
    pub input: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub threshold: Option<f64>,
    pub train: TrainConfig,
    pub generate: GenerateConfig,
    pub val_fraction: f64,
    pub test_fraction: f64,
}

fn pick<T>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}

fn apply_columns(columns: &mut ColumnMap, flags: &ColumnFlags) {
    let slots = [
        (&mut columns.trans_id, &flags.col_trans_id),
        (&mut columns.timestamp, &flags.col_timestamp),
        (&mut columns.cc_num, &flags.col_cc_num),
        (&mut columns.merchant, &flags.col_merchant),
        (&mut columns.category, &flags.col_category),
        (&mut columns.amount, &flags.col_amount),
        (&mut columns.is_fraud, &flags.col_is_fraud),
    ];
    for (slot, flag) in slots {
        if let Some(name) = flag {
            slot.clone_from(name);
        }
    }
}

fn apply_train(cfg: &mut TrainConfig, o: &TrainOverrides) {
    macro_rules! set {
        ($($f:ident),*) => { $( if let Some(v) = o.$f { cfg.$f = v; } )* };
    }
    set!(
        dim,
        heads,
        encoder_depth,
        decoder_width,
        dropout,
        weight_decay,
        learning_rate,
        epochs,
        kl_beta,
        patience
    );
}

fn train_flags(a: &TrainArgs) -> TrainOverrides {
    TrainOverrides {
        dim: a.dim,
        heads: a.heads,
        encoder_depth: a.encoder_depth,
        decoder_width: a.decoder_width,
        dropout: a.dropout,
        weight_decay: a.weight_decay,
        learning_rate: a.learning_rate,
        epochs: a.epochs,
        kl_beta: a.kl_beta,
        patience: a.patience,
    }
}

impl Settings {
    fn apply_split(&mut self, flags: &SplitFlags) {
        if let Some(v) = flags.val_fraction {
            self.val_fraction = v;
        }
        if let Some(v) = flags.test_fraction {
            self.test_fraction = v;
        }
    }

    pub fn resolve(cli: &Cli) -> Result<Self, CliError> {
        let file = match &cli.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let mut columns = file.columns.clone();
        apply_columns(&mut columns, &cli.columns);
        let out_dir = pick(cli.out_dir.clone(), file.out_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
        let mut s = Settings {
            seed: pick(cli.seed, file.seed),
            out_dir,
            columns,
            input: file.paths.input.clone(),
            model: file.paths.model.clone(),
            output: file.paths.output.clone(),
            threshold: file.threshold,
            train: TrainConfig::default(),
            generate: file.generate.clone(),
            val_fraction: file.split.val_fraction.unwrap_or(DEFAULT_VAL_FRACTION),
            test_fraction: file.split.test_fraction.unwrap_or(DEFAULT_TEST_FRACTION),
        };
        apply_train(&mut s.train, &file.train);
        match &cli.command {
            Command::Generate(a) => {
                s.output = pick(a.output.clone(), s.output.take());
                let g = &mut s.generate;
                g.scale = pick(a.scale, g.scale);
                g.n_customers = pick(a.customers, g.n_customers);
                g.n_merchants = pick(a.merchants, g.n_merchants);
                g.n_days = pick(a.days, g.n_days);
                g.fraud_rate = pick(a.fraud_rate, g.fraud_rate);
            }
            Command::BuildGraph(a) => {
                s.input = pick(a.input.clone(), s.input.take());
                s.output = pick(a.output.clone(), s.output.take());
            }
            Command::Train(a) => {
                s.apply_split(&a.split);
                s.input = pick(a.input.clone(), s.input.take());
                s.model = pick(a.model.clone(), s.model.take());
                apply_train(&mut s.train, &train_flags(a));
            }
            Command::Score(a) => {
                s.input = pick(a.input.clone(), s.input.take());
                s.model = pick(a.model.clone(), s.model.take());
                s.output = pick(a.output.clone(), s.output.take());
                s.threshold = pick(a.threshold, s.threshold);
            }
            Command::Evaluate(a) => {
                s.apply_split(&a.split);
                s.input = pick(a.input.clone(), s.input.take());
                s.model = pick(a.model.clone(), s.model.take());
            }
        }
        if let Some(seed) = s.seed {
            s.train.seed = seed;
        }
        if let Some(t) = s.threshold {
            if !t.is_finite() {
                return Err(CliError::Config(format!("threshold {t} is not finite")));
            }
        }
        Ok(s)
    }

    /// Commands whose output depends on randomness refuse to run unseeded.
    pub fn require_seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Config("a seed is required: set `seed` in the config or pass --seed".into()))
    }

    pub fn require_input(&self) -> Result<&Path, CliError> {
        self.input
            .as_deref()
            .ok_or_else(|| CliError::Config("no input CSV: pass --input or set paths.input".into()))
    }

    pub fn model_path(&self) -> PathBuf {
        self.model.clone().unwrap_or_else(|| self.out_dir.join("model.fgm"))
    }

    pub fn output_or(&self, default_name: &str) -> PathBuf {
        self.output.clone().unwrap_or_else(|| self.out_dir.join(default_name))
    }

    pub fn synthetic_config(&self, seed: u64) -> SyntheticConfig {
        let g = &self.generate;
        let mut cfg = SyntheticConfig::reference_scale(g.scale.unwrap_or(DEFAULT_SCALE), seed);
        if let Some(n) = g.n_customers {
            cfg.n_customers = n;
        }
        if let Some(n) = g.n_merchants {
            cfg.n_merchants = n;
        }
        if let Some(d) = g.n_days {
            cfg.n_days = d;
            cfg.late_fraud_rate = cfg.late_fraud_rate.filter(|&(day, _)| day < d);
        }
        if let Some(r) = g.fraud_rate {
            cfg.fraud_rate = r;
            cfg.late_fraud_rate = None;
        }
        cfg
    }
}

#[cfg(test)]
mod tests {
    use clap::Parser;

    use super::*;

    fn cli(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("fraudgraph").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::parse("seed = 1\nbogus = 2").is_err());
        assert!(RunConfig::parse("[train]\nlayers = 124").is_err());
        assert!(RunConfig::parse("[columns]\namount = \"amount_usd\"").is_ok());
    }

    #[test]
    fn flags_win_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "seed = 5\nout_dir = \"runs\"\n[paths]\ninput = \"data.csv\"\n[train]\nepochs = 7\ndim = 32\n[columns]\namount = \"a\"",
        )
        .unwrap();
        let p = path.to_str().unwrap();
        let s = Settings::resolve(&cli(&["--config", p, "train", "--epochs", "3"])).unwrap();
        assert_eq!(s.train.epochs, 3);
        assert_eq!(s.train.dim, 32);
        assert_eq!(s.train.seed, 5);
        assert_eq!(s.columns.amount, "a");
        assert_eq!(s.input.as_deref(), Some(dir.path().join("data.csv").as_path()));
        assert_eq!(s.out_dir, dir.path().join("runs"));

        let s = Settings::resolve(&cli(&["--config", p, "--seed", "9", "--col-amount", "b", "train"])).unwrap();
        assert_eq!((s.train.seed, s.columns.amount.as_str()), (9, "b"));
    }

    #[test]
    fn seed_is_mandatory_when_requested() {
        let s = Settings::resolve(&cli(&["generate"])).unwrap();
        assert!(matches!(s.require_seed(), Err(CliError::Config(_))));
        let s = Settings::resolve(&cli(&["--seed", "1", "generate"])).unwrap();
        assert_eq!(s.require_seed().unwrap(), 1);
    }

    #[test]
    fn generator_overrides() {
        let s = Settings::resolve(&cli(&["generate", "--scale", "0.01"])).unwrap();
        let g = s.synthetic_config(1);
        assert_eq!((g.n_customers, g.n_merchants), (10, 8));
        assert!(g.late_fraud_rate.is_some());
        let s = Settings::resolve(&cli(&["generate", "--fraud-rate", "0", "--days", "3"])).unwrap();
        let g = s.synthetic_config(1);
        assert_eq!((g.fraud_rate, g.late_fraud_rate, g.n_days), (0.0, None, 3));
    }
}
