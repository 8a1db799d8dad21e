//! Run configuration: an optional TOML file, overridden by command-line flags.
//!
//! ```toml
//! seeds = [1, 2, 3]
//! out_dir = "results"
//!
//! [data]
//! dir = "data/mnist-10k"        # relative to this file
//! # or a synthetic Gaussian mixture instead of MNIST:
//! # [data.synthetic]
//! # n_per_class = 200
//! # n_classes = 4
//! # n_features = 16
//! # separation = 4.0
//! # seed = 0
//!
//! [model]
//! hidden = [128]
//!
//! [train]
//! learning_rate = 0.1
//! momentum = 0.9
//! batch_size = 64
//! epochs = 5
//!
//! [algorithm]
//! name = "dnw"
//! density = 0.095
//! freeze_epoch = 3
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use sparselab::algorithms::{AlgorithmKind, AlgorithmSpec};
use sparselab::io::{load_mnist_dir, synthetic_gaussians, DATA_DIR_ENV};
use sparselab::{DataSplit, TrainConfig};

use crate::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seeds: Option<Vec<u64>>,
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub algorithm: AlgorithmSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub dir: Option<PathBuf>,
    pub synthetic: Option<SyntheticSection>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSection {
    pub n_per_class: usize,
    pub test_per_class: usize,
    pub n_classes: usize,
    pub n_features: usize,
    pub separation: f64,
    pub seed: u64,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        SyntheticSection {
            n_per_class: 200,
            test_per_class: 100,
            n_classes: 4,
            n_features: 16,
            separation: 4.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: Option<Vec<usize>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: Option<f64>,
    pub momentum: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSection {
    pub name: Option<String>,
    pub density: Option<f64>,
    pub imp_rounds: Option<usize>,
    pub imp_prune_rate: Option<f64>,
    pub rigl_interval: Option<usize>,
    pub rigl_alpha: Option<f64>,
    pub rigl_t_end: Option<usize>,
    pub freeze_epoch: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: FileConfig = toml::from_str(&text)
            .map_err(|e| CliError::usage(format!("bad config {}: {e}", path.display())))?;
        // Relative paths in a config file are relative to the file.
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(dir) = cfg.data.dir.take() {
            cfg.data.dir = Some(base.join(dir));
        }
        if let Some(out) = cfg.out_dir.take() {
            cfg.out_dir = Some(base.join(out));
        }
        Ok(cfg)
    }
}

pub enum DataSource {
    Mnist(PathBuf),
    Synthetic(SyntheticSection),
}

impl DataSource {
    /// Flag, then config file, then the environment.
    pub fn resolve(flag_dir: Option<&Path>, synthetic: bool, file: &DataSection) -> Result<Self, CliError> {
        if synthetic {
            return Ok(DataSource::Synthetic(file.synthetic.unwrap_or_default()));
        }
        if let Some(dir) = flag_dir {
            return Ok(DataSource::Mnist(dir.to_path_buf()));
        }
        if let Some(dir) = &file.dir {
            return Ok(DataSource::Mnist(dir.clone()));
        }
        if let Some(s) = file.synthetic {
            return Ok(DataSource::Synthetic(s));
        }
        match std::env::var_os(DATA_DIR_ENV) {
            Some(dir) if !dir.is_empty() => Ok(DataSource::Mnist(PathBuf::from(dir))),
            _ => Err(CliError::usage(format!(
                "no dataset: pass --data-dir, set {DATA_DIR_ENV}, or use --synthetic"
            ))),
        }
    }

    pub fn load(&self) -> Result<DataSplit, CliError> {
        match self {
            DataSource::Mnist(dir) => {
                if !dir.is_dir() {
                    return Err(CliError::usage(format!(
                        "data directory {} does not exist",
                        dir.display()
                    )));
                }
                load_mnist_dir(dir).map_err(CliError::usage_from)
            }
            DataSource::Synthetic(s) => {
                // The test split is drawn from the next seed.
                let gen = |n, seed| {
                    synthetic_gaussians(n, s.n_classes, s.n_features, s.separation, seed)
                        .map_err(CliError::usage_from)
                };
                let train = gen(s.n_per_class, s.seed)?;
                let test = gen(s.test_per_class, s.seed.wrapping_add(1))?;
                DataSplit::new(train, test).map_err(CliError::usage_from)
            }
        }
    }
}

/// Flags shared by every subcommand. Unset flags fall back to the config file.
#[derive(Debug, Default, Clone, clap::Args)]
pub struct CommonArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory holding MNIST IDX files (default: $SPARSELAB_DATA_DIR).
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Use the synthetic Gaussian dataset instead of MNIST.
    #[arg(long)]
    pub synthetic: bool,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// Algorithm flags, shared by the subcommands that train.
#[derive(Debug, Default, Clone, clap::Args)]
pub struct AlgoArgs {
    /// random, imp, dnw, rigl or hybrid.
    #[arg(long)]
    pub algo: Option<String>,
    /// Fraction of weights kept in every layer.
    #[arg(long)]
    pub density: Option<f64>,
    #[arg(long)]
    pub imp_rounds: Option<usize>,
    #[arg(long)]
    pub imp_prune_rate: Option<f64>,
    #[arg(long)]
    pub rigl_interval: Option<usize>,
    #[arg(long)]
    pub rigl_alpha: Option<f64>,
    #[arg(long)]
    pub rigl_t_end: Option<usize>,
    #[arg(long)]
    pub freeze_epoch: Option<usize>,
}

/// Everything a subcommand needs, after merging file and flags.
pub struct RunConfig {
    pub data: DataSource,
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    pub out_dir: PathBuf,
    pub file: FileConfig,
}

impl RunConfig {
    pub fn resolve(common: &CommonArgs) -> Result<Self, CliError> {
        let file = match &common.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let data = DataSource::resolve(common.data_dir.as_deref(), common.synthetic, &file.data)?;
        let defaults = TrainConfig::default();
        let train = TrainConfig {
            learning_rate: common.lr.or(file.train.learning_rate).unwrap_or(defaults.learning_rate),
            momentum: common.momentum.or(file.train.momentum).unwrap_or(defaults.momentum),
            batch_size: common.batch_size.or(file.train.batch_size).unwrap_or(defaults.batch_size),
            epochs: common.epochs.or(file.train.epochs).unwrap_or(defaults.epochs),
            seed: 0,
        };
        train.validate().map_err(CliError::usage_from)?;
        let hidden = common
            .hidden
            .clone()
            .or_else(|| file.model.hidden.clone())
            .unwrap_or_else(|| vec![128]);
        if hidden.contains(&0) {
            return Err(CliError::usage("hidden widths must be at least 1"));
        }
        let out_dir = common
            .out_dir
            .clone()
            .or_else(|| file.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(RunConfig {
            data,
            hidden,
            train,
            out_dir,
            file,
        })
    }

    /// Flag seeds, else the config's, else `fallback`.
    pub fn seeds(&self, flag: Option<&[u64]>, fallback: &[u64]) -> Result<Vec<u64>, CliError> {
        let seeds = flag
            .map(<[u64]>::to_vec)
            .or_else(|| self.file.seeds.clone())
            .unwrap_or_else(|| fallback.to_vec());
        if seeds.is_empty() {
            return Err(CliError::usage("at least one seed is required"));
        }
        Ok(seeds)
    }

    pub fn algorithm(&self, args: &AlgoArgs) -> Result<AlgorithmSpec, CliError> {
        let f = &self.file.algorithm;
        let name = args.algo.clone().or_else(|| f.name.clone()).unwrap_or_else(|| "dnw".into());
        let kind: AlgorithmKind = name.parse().map_err(CliError::usage_from)?;
        let density = args.density.or(f.density).unwrap_or(0.095);
        let imp_rounds = args.imp_rounds.or(f.imp_rounds);
        let imp_rate = args.imp_prune_rate.or(f.imp_prune_rate);
        let mut spec = match (kind, imp_rounds) {
            (AlgorithmKind::Imp, Some(rounds)) => {
                let rate = imp_rate.unwrap_or(sparselab::algorithms::DEFAULT_IMP_PRUNE_RATE);
                AlgorithmSpec::imp_with(density, rounds, rate)
            }
            (AlgorithmKind::Imp, None) => AlgorithmSpec::imp(density),
            _ => AlgorithmSpec::random(density).map(|s| s.with_kind(kind)),
        }
        .map_err(CliError::usage_from)?;
        if let Some(v) = args.rigl_interval.or(f.rigl_interval) {
            spec.rigl_interval = v;
        }
        if let Some(v) = args.rigl_alpha.or(f.rigl_alpha) {
            spec.rigl_alpha = v;
        }
        if let Some(v) = args.rigl_t_end.or(f.rigl_t_end) {
            spec.rigl_t_end = Some(v);
        }
        spec.freeze_epoch = args.freeze_epoch.or(f.freeze_epoch).unwrap_or(self.train.epochs);
        spec.validate(&self.train).map_err(CliError::usage_from)?;
        Ok(spec)
    }
}
