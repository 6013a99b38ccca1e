//! Run configuration: a flat JSON config file whose keys mirror the training
//! settings, with command-line flags taking precedence over file values.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use awd::trainer::{BatchMode, TrainConfig};
use awd::Penalty;

/// Training regime selected with `--mode`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Baseline,
    AwdStrict,
    AwdLoose,
}

/// The config file schema. Every key has a flag equivalent; unknown keys are
/// rejected so typos fail loudly.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub mode: Option<Mode>,
    pub train: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub k: Option<usize>,
    pub min_count: Option<usize>,
    pub embedding_dim: Option<usize>,
    pub hidden_dim: Option<usize>,
    pub epochs: Option<usize>,
    pub outer_lr: Option<f64>,
    pub inner_lr: Option<f64>,
    pub inner_steps: Option<usize>,
    pub rho: Option<f64>,
    pub lambda: Option<f64>,
    pub gamma: Option<f64>,
    pub seed: Option<u64>,
    pub seeds: Option<usize>,
    pub batch_size: Option<usize>,
    pub augmentations: Option<PathBuf>,
    pub init_table: Option<PathBuf>,
    pub frozen_table: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let content = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        serde_json::from_str(&content)
            .with_context(|| format!("invalid config file {}", path.display()))
    }
}

/// Fully resolved training settings; this is what gets echoed to
/// `config.json` in the run directory.
#[derive(Debug, Clone, Serialize)]
pub struct TrainSettings {
    pub mode: Mode,
    pub train: PathBuf,
    pub val: PathBuf,
    pub test: Option<PathBuf>,
    pub out: PathBuf,
    pub k: Option<usize>,
    pub min_count: usize,
    pub seed: u64,
    pub seeds: usize,
    pub config: TrainConfig,
    pub augmentations: Option<PathBuf>,
    pub init_table: Option<PathBuf>,
    pub frozen_table: Option<PathBuf>,
}

/// Flag-side overrides shared by `train`.
#[derive(Debug, Clone, clap::Args, Default)]
pub struct TrainOverrides {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training regime.
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Training set (JSONL with "text" and "label").
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Validation set used for best-checkpoint selection.
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// Optional held-out test set, evaluated on the selected checkpoint.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Output run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Low-resource size: sample exactly k examples per class.
    #[arg(long)]
    pub k: Option<usize>,
    /// Minimum token frequency for the vocabulary.
    #[arg(long)]
    pub min_count: Option<usize>,
    #[arg(long)]
    pub embedding_dim: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Adam learning rate for embeddings and classifier.
    #[arg(long)]
    pub outer_lr: Option<f64>,
    /// SGD ascent rate for the dilution networks.
    #[arg(long)]
    pub inner_lr: Option<f64>,
    /// Dilution-network updates per epoch.
    #[arg(long)]
    pub inner_steps: Option<usize>,
    /// Strict-mode dilution budget fraction.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Strict-mode penalty weight.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Loose-mode regularizer weight.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Base RNG seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of seeded repetitions (seed, seed+1, ...).
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Minibatch size; omit for full-batch updates.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Augmentations file from `awd augment`, added to baseline training.
    #[arg(long)]
    pub augmentations: Option<PathBuf>,
    /// Checkpoint whose embedding table initializes this run (stays
    /// trainable); vocabulary and classes come from that run.
    #[arg(long)]
    pub init_table: Option<PathBuf>,
    /// Checkpoint whose embedding table is used frozen (classifier-only
    /// training, e.g. a hardness discriminator).
    #[arg(long)]
    pub frozen_table: Option<PathBuf>,
}

pub fn resolve_train(args: &TrainOverrides) -> Result<TrainSettings> {
    let file = match &args.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };

    let mode = args.mode.or(file.mode);
    let Some(mode) = mode else {
        bail!("--mode is required (baseline, awd-strict, or awd-loose)");
    };
    let Some(train) = args.train.clone().or(file.train) else {
        bail!("--train is required");
    };
    let Some(val) = args.val.clone().or(file.val) else {
        bail!("--val is required");
    };
    let Some(out) = args.out.clone().or(file.out) else {
        bail!("--out is required");
    };

    let penalty = match mode {
        Mode::AwdStrict | Mode::Baseline => Penalty::Strict {
            rho: args.rho.or(file.rho).unwrap_or(0.3),
            lambda: args.lambda.or(file.lambda).unwrap_or(1.0),
        },
        Mode::AwdLoose => Penalty::Loose {
            gamma: args.gamma.or(file.gamma).unwrap_or(0.005),
        },
    };
    let default_inner_steps = match penalty {
        Penalty::Strict { .. } => 5,
        Penalty::Loose { .. } => 1,
    };
    let seeds = args.seeds.or(file.seeds).unwrap_or(1);
    if seeds == 0 {
        bail!("--seeds must be at least 1");
    }

    let config = TrainConfig {
        embedding_dim: args.embedding_dim.or(file.embedding_dim).unwrap_or(32),
        hidden_dim: args.hidden_dim.or(file.hidden_dim).unwrap_or(64),
        epochs: args.epochs.or(file.epochs).unwrap_or(30),
        outer_lr: args.outer_lr.or(file.outer_lr).unwrap_or(5e-4),
        inner_lr: args.inner_lr.or(file.inner_lr).unwrap_or(0.01),
        inner_steps: args
            .inner_steps
            .or(file.inner_steps)
            .unwrap_or(default_inner_steps),
        penalty,
        seed: args.seed.or(file.seed).unwrap_or(0),
        batch: match args.batch_size.or(file.batch_size) {
            Some(size) => BatchMode::Minibatch { size },
            None => BatchMode::Full,
        },
    };
    config.validate()?;

    let settings = TrainSettings {
        mode,
        train,
        val,
        test: args.test.clone().or(file.test),
        out,
        k: args.k.or(file.k),
        min_count: args.min_count.or(file.min_count).unwrap_or(1),
        seed: config.seed,
        seeds,
        config,
        augmentations: args.augmentations.clone().or(file.augmentations),
        init_table: args.init_table.clone().or(file.init_table),
        frozen_table: args.frozen_table.clone().or(file.frozen_table),
    };

    if settings.frozen_table.is_some() && settings.mode != Mode::Baseline {
        bail!("--frozen-table only applies to --mode baseline");
    }
    if settings.frozen_table.is_some() && settings.augmentations.is_some() {
        bail!("--frozen-table cannot be combined with --augmentations");
    }
    if settings.augmentations.is_some() && settings.mode != Mode::Baseline {
        bail!("--augmentations only applies to --mode baseline");
    }
    if settings.init_table.is_some() && settings.frozen_table.is_some() {
        bail!("--init-table and --frozen-table are mutually exclusive");
    }
    Ok(settings)
}
