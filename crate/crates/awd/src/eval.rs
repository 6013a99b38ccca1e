//! Accuracy evaluation, the hardness harness (discriminator error, accuracy,
//! harmonic mean), frozen-network augmentation of new examples, and per-word
//! weight reports.

use serde::{Deserialize, Serialize};

use crate::classifier::{self, ClassifierParams, EmbeddingTable};
use crate::corpus::Dataset;
use crate::dilution::{self, AugmentedExample, DilutionModel, DilutionWeights};
use crate::error::{Error, Result};

/// Fraction of examples whose argmax score matches the label. Ties resolve
/// to the lowest class id.
pub fn accuracy(table: &EmbeddingTable, params: &ClassifierParams, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut correct = 0usize;
    for ex in &data.examples {
        if classifier::predict(ex, table, params)? == ex.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Joint hardness/quality score of a set of augmentations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardnessReport {
    /// Classifier accuracy on the test set.
    pub acc: f64,
    /// Discriminator error rate on the augmentations.
    pub err: f64,
    /// Harmonic mean of the two.
    pub hm: f64,
}

/// `2 * acc * err / (acc + err)`, zero when both inputs are zero.
pub fn harmonic_mean(acc: f64, err: f64) -> f64 {
    if acc + err > 0.0 {
        2.0 * acc * err / (acc + err)
    } else {
        0.0
    }
}

/// Embeds every example without dilution; the clean counterpart of an
/// augmentation set.
pub fn embedded_examples(table: &EmbeddingTable, data: &Dataset) -> Result<Vec<AugmentedExample>> {
    data.examples
        .iter()
        .map(|ex| {
            Ok(AugmentedExample {
                vectors: classifier::embed(ex, table)?,
                label: ex.label,
            })
        })
        .collect()
}

/// Error rate of a classifier head on embedding-space inputs.
pub fn error_rate(params: &ClassifierParams, inputs: &[AugmentedExample]) -> Result<f64> {
    if inputs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut wrong = 0usize;
    for aug in inputs {
        if classifier::predict_vectors(&aug.vectors, params)? != aug.label {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / inputs.len() as f64)
}

/// Scores a trained run against a discriminator trained on abundant data:
/// accuracy on `test`, discriminator error on the augmentations, and their
/// harmonic mean.
///
/// Both runs must share one embedding table, since the augmentations live in
/// that table's embedding space.
pub fn hardness(
    classifier_run: (&EmbeddingTable, &ClassifierParams),
    test: &Dataset,
    discriminator: (&EmbeddingTable, &ClassifierParams),
    augmentations: &[AugmentedExample],
) -> Result<HardnessReport> {
    let (table, params) = classifier_run;
    let (disc_table, disc_params) = discriminator;
    if table.weights != disc_table.weights || table.unk_id != disc_table.unk_id {
        return Err(Error::Incompatible(
            "classifier and discriminator do not share an embedding table".into(),
        ));
    }
    if let Some(bad) = augmentations
        .iter()
        .flat_map(|a| &a.vectors)
        .find(|v| v.len() != disc_params.input_dim())
    {
        return Err(Error::Incompatible(format!(
            "augmentation vector of width {} fed to a width-{} discriminator",
            bad.len(),
            disc_params.input_dim()
        )));
    }
    let acc = accuracy(table, params, test)?;
    let err = error_rate(disc_params, augmentations)?;
    Ok(HardnessReport {
        acc,
        err,
        hm: harmonic_mean(acc, err),
    })
}

/// Computes dilution weights and diluted sequences for new examples under a
/// frozen model. No parameter is touched; out-of-vocabulary words were
/// already mapped to the unknown id at encoding time.
pub fn extend_augment(
    model: &DilutionModel,
    table: &EmbeddingTable,
    new_data: &Dataset,
) -> Result<(DilutionWeights, Vec<AugmentedExample>)> {
    let weights = DilutionWeights::compute(&new_data.examples, table, model)?;
    let unk = table.unk_row();
    let augmented = new_data
        .examples
        .iter()
        .zip(&weights.per_example)
        .map(|(ex, alphas)| {
            Ok(AugmentedExample {
                vectors: dilution::dilute(&classifier::embed(ex, table)?, alphas, &unk)?,
                label: ex.label,
            })
        })
        .collect::<Result<_>>()?;
    Ok((weights, augmented))
}

/// A word flagged as strongly label-indicative by its dilution weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrongWord {
    pub token: String,
    pub alpha: f64,
}

/// Per-example weight presentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightEntry {
    pub text: String,
    pub tokens: Vec<String>,
    pub alphas: Vec<f64>,
    pub label: String,
    pub predicted: String,
    /// Words with weight above the example mean plus one standard deviation,
    /// strongest first.
    pub strong_words: Vec<StrongWord>,
}

/// Interpretability report over a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightReport {
    pub entries: Vec<WeightEntry>,
}

/// Builds the per-word weight report. At most `top_n` strong words are kept
/// per example.
pub fn weight_report(
    table: &EmbeddingTable,
    params: &ClassifierParams,
    model: &DilutionModel,
    data: &Dataset,
    top_n: usize,
) -> Result<WeightReport> {
    let mut entries = Vec::with_capacity(data.len());
    for ex in &data.examples {
        let alphas = dilution::dilution_weights(ex, table, model)?;
        let predicted = classifier::predict(ex, table, params)?;
        let n = alphas.len() as f64;
        let mean = alphas.iter().sum::<f64>() / n;
        let sd = (alphas.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
        let threshold = mean + sd;
        let mut strong: Vec<StrongWord> = ex
            .words
            .iter()
            .zip(&alphas)
            .filter(|(_, &a)| a > threshold)
            .map(|(w, &a)| StrongWord {
                token: w.clone(),
                alpha: a,
            })
            .collect();
        strong.sort_by(|a, b| b.alpha.partial_cmp(&a.alpha).expect("weights are finite"));
        strong.truncate(top_n);
        entries.push(WeightEntry {
            text: ex.raw_text.clone(),
            tokens: ex.words.clone(),
            alphas,
            label: data.classes[ex.label].clone(),
            predicted: data.classes[predicted].clone(),
            strong_words: strong,
        });
    }
    Ok(WeightReport { entries })
}

/// Plain-text rendering: one line per example of `token:weight` pairs with
/// three decimals.
pub fn render_heatmap(report: &WeightReport) -> String {
    let mut out = String::new();
    for entry in &report.entries {
        let pairs: Vec<String> = entry
            .tokens
            .iter()
            .zip(&entry.alphas)
            .map(|(t, a)| format!("{t}:{a:.3}"))
            .collect();
        out.push_str(&format!(
            "[{} -> {}] {}\n",
            entry.label,
            entry.predicted,
            pairs.join(" ")
        ));
    }
    out
}
