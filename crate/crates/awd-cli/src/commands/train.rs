//! The `train` subcommand: corpus -> (sampling, vocabulary) -> training ->
//! run directory, optionally swept over consecutive seeds.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use awd::corpus::{Dataset, Vocab};
use awd::eval;
use awd::trainer::{self, EpochRecord, TrainConfig, TrainOutcome};
use awd::Checkpoint;

use crate::runs::{load_bundle, read_json, AugmentationFile, ModelBundle, RunWriter};
use crate::settings::{resolve_train, Mode, TrainOverrides, TrainSettings};

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    #[command(flatten)]
    overrides: TrainOverrides,
}

#[derive(Debug, Clone, Serialize)]
struct RunMetrics {
    seed: u64,
    best_epoch: usize,
    best_val_accuracy: f64,
    test_accuracy: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Aggregate {
    mean: f64,
    sd: f64,
}

fn aggregate(values: &[f64]) -> Aggregate {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Aggregate { mean, sd }
}

pub fn run(args: TrainArgs) -> Result<()> {
    let settings = resolve_train(&args.overrides)?;

    let full_train = Dataset::load_jsonl(&settings.train)
        .with_context(|| format!("cannot load training set {}", settings.train.display()))?;
    let val_raw = Dataset::load_jsonl(&settings.val)
        .with_context(|| format!("cannot load validation set {}", settings.val.display()))?;
    let test_raw = match &settings.test {
        Some(path) => Some(
            Dataset::load_jsonl(path)
                .with_context(|| format!("cannot load test set {}", path.display()))?,
        ),
        None => None,
    };

    let source = match settings.init_table.as_ref().or(settings.frozen_table.as_ref()) {
        Some(path) => Some(load_bundle(path)?),
        None => None,
    };
    let augmentations: Option<AugmentationFile> = match &settings.augmentations {
        Some(path) => Some(read_json(path)?),
        None => None,
    };

    let seeds: Vec<u64> = (0..settings.seeds as u64).map(|i| settings.seed + i).collect();
    let sweep = seeds.len() > 1;
    let mut all_metrics = Vec::with_capacity(seeds.len());
    for &seed in &seeds {
        let run_dir = if sweep {
            settings.out.join(format!("seed_{seed}"))
        } else {
            settings.out.clone()
        };
        let metrics = run_single(
            &settings,
            seed,
            &run_dir,
            &full_train,
            &val_raw,
            test_raw.as_ref(),
            source.as_ref(),
            augmentations.as_ref(),
        )?;
        match metrics.test_accuracy {
            Some(test) => println!(
                "seed {seed}: best epoch {}, val accuracy {:.4}, test accuracy {test:.4}",
                metrics.best_epoch, metrics.best_val_accuracy
            ),
            None => println!(
                "seed {seed}: best epoch {}, val accuracy {:.4}",
                metrics.best_epoch, metrics.best_val_accuracy
            ),
        }
        all_metrics.push(metrics);
    }

    if sweep {
        let val_acc: Vec<f64> = all_metrics.iter().map(|m| m.best_val_accuracy).collect();
        let val_agg = aggregate(&val_acc);
        let test_agg = if all_metrics.iter().all(|m| m.test_accuracy.is_some()) {
            let test: Vec<f64> = all_metrics.iter().filter_map(|m| m.test_accuracy).collect();
            Some(aggregate(&test))
        } else {
            None
        };
        println!(
            "{} seeds: val accuracy mean {:.4} sd {:.4}",
            seeds.len(),
            val_agg.mean,
            val_agg.sd
        );
        let mut writer = RunWriter::create(&settings.out)?;
        writer.write_json("config.json", &settings)?;
        writer.write_json(
            "summary.json",
            &serde_json::json!({
                "seeds": seeds,
                "val_accuracy": val_agg,
                "test_accuracy": test_agg,
                "per_seed": all_metrics,
            }),
        )?;
        writer.finish(
            "train",
            serde_json::to_value(&settings)?,
            seeds.clone(),
            dataset_paths(&settings),
        )?;
    }
    Ok(())
}

fn dataset_paths(settings: &TrainSettings) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    map.insert("train".into(), settings.train.display().to_string());
    map.insert("val".into(), settings.val.display().to_string());
    if let Some(test) = &settings.test {
        map.insert("test".into(), test.display().to_string());
    }
    if let Some(aug) = &settings.augmentations {
        map.insert("augmentations".into(), aug.display().to_string());
    }
    map
}

#[allow(clippy::too_many_arguments)]
fn run_single(
    settings: &TrainSettings,
    seed: u64,
    run_dir: &Path,
    full_train: &Dataset,
    val_raw: &Dataset,
    test_raw: Option<&Dataset>,
    source: Option<&ModelBundle>,
    augmentations: Option<&AugmentationFile>,
) -> Result<RunMetrics> {
    let mut cfg = settings.config.clone();
    cfg.seed = seed;

    // Each repetition draws its own low-resource sample, like repeated
    // experiments would.
    let sampled = match settings.k {
        Some(k) => full_train.sample_low_resource(k, seed)?,
        None => full_train.clone(),
    };

    let (vocab, classes) = match source {
        Some(bundle) => (bundle.vocab.clone(), bundle.classes.clone()),
        None => (
            Vocab::build(&[&sampled], settings.min_count)?,
            sampled.classes.clone(),
        ),
    };
    let mut train_ds = if source.is_some() {
        sampled.with_classes(&classes)?
    } else {
        sampled
    };
    train_ds.encode(&vocab);
    let mut val = val_raw.with_classes(&classes)?;
    val.encode(&vocab);
    let test = match test_raw {
        Some(t) => {
            let mut t = t.with_classes(&classes)?;
            t.encode(&vocab);
            Some(t)
        }
        None => None,
    };

    let outcome = train_variant(settings, &cfg, &train_ds, &val, &vocab, source, augmentations)?;

    let test_accuracy = match &test {
        Some(t) => Some(eval::accuracy(&outcome.table, &outcome.classifier, t)?),
        None => None,
    };
    let metrics = RunMetrics {
        seed,
        best_epoch: outcome.best_epoch,
        best_val_accuracy: outcome.best_val_accuracy,
        test_accuracy,
    };

    let mut config_echo = serde_json::to_value(settings)?;
    config_echo["seed"] = serde_json::json!(seed);
    config_echo["config"]["seed"] = serde_json::json!(seed);

    let mut writer = RunWriter::create(run_dir)?;
    writer.write_json("config.json", &config_echo)?;
    writer.write_jsonl::<EpochRecord>("epochs.jsonl", &outcome.records)?;
    let ckpt = Checkpoint::from_model(&outcome.table, &outcome.classifier, &outcome.dilution);
    writer.write_json("checkpoint.json", &ckpt)?;
    writer.write_json("vocab.json", &vocab)?;
    writer.write_json("classes.json", &classes)?;
    writer.write_json("metrics.json", &metrics)?;
    writer.finish("train", config_echo, vec![seed], dataset_paths(settings))?;
    Ok(metrics)
}

fn train_variant(
    settings: &TrainSettings,
    cfg: &TrainConfig,
    train_ds: &Dataset,
    val: &Dataset,
    vocab: &Vocab,
    source: Option<&ModelBundle>,
    augmentations: Option<&AugmentationFile>,
) -> Result<TrainOutcome> {
    match settings.mode {
        Mode::AwdStrict | Mode::AwdLoose => {
            Ok(trainer::train(train_ds, val, vocab, cfg)?)
        }
        Mode::Baseline => {
            if settings.frozen_table.is_some() {
                let bundle = source.expect("frozen table requires a source bundle");
                let (classifier, records) =
                    trainer::train_discriminator(train_ds, val, &bundle.table, cfg)?;
                // Synthesize an outcome around the frozen table so the run
                // directory stays a complete, loadable model.
                let (best_epoch, best_val_accuracy) = best_of(&records);
                return Ok(TrainOutcome {
                    table: bundle.table.clone(),
                    classifier: classifier.clone(),
                    dilution: bundle.dilution.clone(),
                    records,
                    best_epoch,
                    best_val_accuracy,
                    final_table: bundle.table.clone(),
                    final_classifier: classifier,
                    final_dilution: bundle.dilution.clone(),
                });
            }
            if augmentations.is_some() || settings.init_table.is_some() {
                let augs = augmentations.map(|a| {
                    anyhow::ensure!(
                        a.embedding_dim == cfg.embedding_dim,
                        "augmentations were generated at embedding width {}, run uses {}",
                        a.embedding_dim,
                        cfg.embedding_dim
                    );
                    Ok(a.examples.clone())
                });
                let augs = match augs {
                    Some(r) => r?,
                    None => Vec::new(),
                };
                let init = source.map(|b| &b.table);
                return Ok(trainer::train_with_augmentations(
                    train_ds, &augs, val, vocab, cfg, init,
                )?);
            }
            Ok(trainer::train_baseline(train_ds, val, vocab, cfg)?)
        }
    }
}

fn best_of(records: &[EpochRecord]) -> (usize, f64) {
    let mut best = (0usize, f64::NEG_INFINITY);
    for r in records {
        if r.val_accuracy > best.1 {
            best = (r.epoch, r.val_accuracy);
        }
    }
    if best.1.is_finite() {
        best
    } else {
        (0, 0.0)
    }
}
