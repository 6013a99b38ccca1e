//! The `augment` subcommand: frozen dilution networks applied to new
//! examples, producing per-word weight dumps and a retraining-ready
//! augmentation file.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{Context, Result};
use serde::Serialize;

use awd::corpus::Dataset;
use awd::eval;

use crate::runs::{load_bundle, AugmentationFile, RunWriter};

#[derive(Debug, clap::Args)]
pub struct AugmentArgs {
    /// Checkpoint of a finished run (vocab.json and classes.json must sit
    /// next to it).
    #[arg(long)]
    checkpoint: PathBuf,
    /// New examples to augment (JSONL).
    #[arg(long)]
    data: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct TokenWeight {
    token: String,
    alpha: f64,
}

#[derive(Serialize)]
struct ExampleWeights {
    text: String,
    label: String,
    pairs: Vec<TokenWeight>,
}

pub fn run(args: AugmentArgs) -> Result<()> {
    let bundle = load_bundle(&args.checkpoint)?;
    let mut data = Dataset::load_jsonl(&args.data)
        .with_context(|| format!("cannot load dataset {}", args.data.display()))?
        .with_classes(&bundle.classes)?;
    data.encode(&bundle.vocab);

    let (weights, augmented) = eval::extend_augment(&bundle.dilution, &bundle.table, &data)?;

    let dump: Vec<ExampleWeights> = data
        .examples
        .iter()
        .zip(&weights.per_example)
        .map(|(ex, alphas)| ExampleWeights {
            text: ex.raw_text.clone(),
            label: data.classes[ex.label].clone(),
            pairs: ex
                .words
                .iter()
                .zip(alphas)
                .map(|(w, &a)| TokenWeight {
                    token: w.clone(),
                    alpha: a,
                })
                .collect(),
        })
        .collect();

    let mut writer = RunWriter::create(&args.out)?;
    writer.write_json("weights.json", &dump)?;
    writer.write_json(
        "augmentations.json",
        &AugmentationFile {
            embedding_dim: bundle.table.dim(),
            examples: augmented,
        },
    )?;
    let mut datasets = BTreeMap::new();
    datasets.insert("data".into(), args.data.display().to_string());
    datasets.insert("checkpoint".into(), args.checkpoint.display().to_string());
    writer.finish(
        "augment",
        serde_json::json!({
            "checkpoint": args.checkpoint.display().to_string(),
            "data": args.data.display().to_string(),
        }),
        Vec::new(),
        datasets,
    )?;

    println!(
        "augmented {} examples, mean dilution weight {:.4}",
        data.len(),
        weights.mean()
    );
    Ok(())
}
