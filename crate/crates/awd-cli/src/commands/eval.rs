//! The `eval` subcommand: accuracy (single runs or seed sweeps), hardness
//! against a discriminator, and per-word weight reports.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use awd::corpus::Dataset;
use awd::eval;

use crate::runs::{load_bundle, ModelBundle, RunWriter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Report {
    Accuracy,
    Hardness,
    Weights,
}

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    /// A run's checkpoint.json, a run directory, or a sweep root containing
    /// seed_* run directories.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Evaluation set (JSONL).
    #[arg(long)]
    data: PathBuf,
    /// What to report.
    #[arg(long, value_enum, default_value_t = Report::Accuracy)]
    report: Report,
    /// Discriminator checkpoint (hardness only); must share the embedding
    /// table of the evaluated run.
    #[arg(long)]
    discriminator: Option<PathBuf>,
    /// Examples to augment for the hardness measurement (hardness only).
    #[arg(long)]
    augment_data: Option<PathBuf>,
    /// Strong-word cap per example in weight reports.
    #[arg(long, default_value_t = 5)]
    top: usize,
    /// Optional output directory for report JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// For sweep roots: evaluate exactly this many seed runs.
    #[arg(long)]
    seeds: Option<usize>,
}

pub fn run(args: EvalArgs) -> Result<()> {
    match args.report {
        Report::Accuracy => accuracy(&args),
        Report::Hardness => hardness(&args),
        Report::Weights => weights(&args),
    }
}

fn resolve_checkpoints(path: &Path, seeds: Option<usize>) -> Result<Vec<(Option<u64>, PathBuf)>> {
    if path.is_file() {
        return Ok(vec![(None, path.to_path_buf())]);
    }
    let direct = path.join("checkpoint.json");
    if direct.is_file() {
        return Ok(vec![(None, direct)]);
    }
    // Sweep root: seed_<n> subdirectories.
    let mut found: Vec<(u64, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(path)
        .with_context(|| format!("cannot read {}", path.display()))?
    {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().to_string();
        if let Some(rest) = name.strip_prefix("seed_") {
            if let Ok(seed) = rest.parse::<u64>() {
                let ckpt = entry.path().join("checkpoint.json");
                if ckpt.is_file() {
                    found.push((seed, ckpt));
                }
            }
        }
    }
    if found.is_empty() {
        bail!(
            "{} is neither a checkpoint nor a run/sweep directory",
            path.display()
        );
    }
    found.sort_by_key(|(seed, _)| *seed);
    if let Some(n) = seeds {
        if found.len() < n {
            bail!("sweep has {} runs, --seeds asked for {n}", found.len());
        }
        found.truncate(n);
    }
    Ok(found.into_iter().map(|(s, p)| (Some(s), p)).collect())
}

fn encoded_for(bundle: &ModelBundle, path: &Path) -> Result<Dataset> {
    let mut data = Dataset::load_jsonl(path)
        .with_context(|| format!("cannot load dataset {}", path.display()))?
        .with_classes(&bundle.classes)?;
    data.encode(&bundle.vocab);
    Ok(data)
}

fn write_report<T: Serialize>(
    out: Option<&PathBuf>,
    name: &str,
    value: &T,
    extra_text: Option<(&str, &str)>,
    command_config: serde_json::Value,
    datasets: BTreeMap<String, String>,
) -> Result<()> {
    if let Some(dir) = out {
        let mut writer = RunWriter::create(dir)?;
        writer.write_json(name, value)?;
        if let Some((text_name, text)) = extra_text {
            writer.write_bytes(text_name, text.as_bytes())?;
        }
        writer.finish("eval", command_config, Vec::new(), datasets)?;
    }
    Ok(())
}

#[derive(Serialize)]
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

fn accuracy(args: &EvalArgs) -> Result<()> {
    let checkpoints = resolve_checkpoints(&args.checkpoint, args.seeds)?;
    let mut per_seed = Vec::new();
    for (seed, ckpt) in &checkpoints {
        let bundle = load_bundle(ckpt)?;
        let data = encoded_for(&bundle, &args.data)?;
        let acc = eval::accuracy(&bundle.table, &bundle.classifier, &data)?;
        per_seed.push((seed.unwrap_or_default(), acc));
    }
    let value = if checkpoints.len() == 1 {
        let acc = per_seed[0].1;
        println!("accuracy {acc:.4}");
        serde_json::json!({ "accuracy": acc })
    } else {
        let accs: Vec<f64> = per_seed.iter().map(|(_, a)| *a).collect();
        let agg = aggregate(&accs);
        println!(
            "accuracy over {} runs: mean {:.4} sd {:.4}",
            accs.len(),
            agg.mean,
            agg.sd
        );
        serde_json::json!({
            "runs": per_seed
                .iter()
                .map(|(s, a)| serde_json::json!({ "seed": s, "accuracy": a }))
                .collect::<Vec<_>>(),
            "accuracy": agg,
        })
    };
    let mut datasets = BTreeMap::new();
    datasets.insert("data".into(), args.data.display().to_string());
    write_report(
        args.out.as_ref(),
        "accuracy.json",
        &value,
        None,
        serde_json::json!({"report": "accuracy", "checkpoint": args.checkpoint.display().to_string()}),
        datasets,
    )
}

fn hardness(args: &EvalArgs) -> Result<()> {
    let Some(disc_path) = &args.discriminator else {
        bail!("--report hardness needs --discriminator");
    };
    let Some(augment_data) = &args.augment_data else {
        bail!("--report hardness needs --augment-data");
    };
    let checkpoints = resolve_checkpoints(&args.checkpoint, args.seeds)?;
    if checkpoints.len() != 1 {
        bail!("--report hardness evaluates a single run");
    }
    let bundle = load_bundle(&checkpoints[0].1)?;
    let disc = load_bundle(disc_path)?;
    let test = encoded_for(&bundle, &args.data)?;
    let to_augment = encoded_for(&bundle, augment_data)?;
    let (_, augmentations) =
        eval::extend_augment(&bundle.dilution, &bundle.table, &to_augment)?;
    let report = eval::hardness(
        (&bundle.table, &bundle.classifier),
        &test,
        (&disc.table, &disc.classifier),
        &augmentations,
    )?;
    println!(
        "acc {:.4} err {:.4} hm {:.4}",
        report.acc, report.err, report.hm
    );
    let mut datasets = BTreeMap::new();
    datasets.insert("data".into(), args.data.display().to_string());
    datasets.insert("augment_data".into(), augment_data.display().to_string());
    write_report(
        args.out.as_ref(),
        "hardness.json",
        &report,
        None,
        serde_json::json!({
            "report": "hardness",
            "checkpoint": args.checkpoint.display().to_string(),
            "discriminator": disc_path.display().to_string(),
        }),
        datasets,
    )
}

fn weights(args: &EvalArgs) -> Result<()> {
    let checkpoints = resolve_checkpoints(&args.checkpoint, args.seeds)?;
    if checkpoints.len() != 1 {
        bail!("--report weights evaluates a single run");
    }
    let bundle = load_bundle(&checkpoints[0].1)?;
    let data = encoded_for(&bundle, &args.data)?;
    let report = eval::weight_report(
        &bundle.table,
        &bundle.classifier,
        &bundle.dilution,
        &data,
        args.top,
    )?;
    let heatmap = eval::render_heatmap(&report);
    print!("{heatmap}");
    let mut datasets = BTreeMap::new();
    datasets.insert("data".into(), args.data.display().to_string());
    write_report(
        args.out.as_ref(),
        "weights_report.json",
        &report,
        Some(("heatmap.txt", &heatmap)),
        serde_json::json!({
            "report": "weights",
            "checkpoint": args.checkpoint.display().to_string(),
            "top": args.top,
        }),
        datasets,
    )
}
