//! Per-class dilution networks, the word-dilution augmentation, the dilution
//! budget constraint, and the strict/loose adversary objectives.
//!
//! A dilution network for class `y` is the affine map `theta_y . e(w) + b_y`
//! squashed by the logistic function; its output `alpha` mixes each word
//! embedding with the unknown-word embedding. The adversary maximizes the
//! augmented loss over these networks, penalized so the mixing weights stay on
//! a budget: strictly (at most a `rho` fraction diluted, enforced by a hinge
//! penalty weighted `lambda`) or loosely (a mean-weight regularizer `gamma`).

use rand::rngs::StdRng;
use serde::{Deserialize, Serialize};

use crate::classifier::{
    self, score_node, ClassifierNodes, ClassifierParams, EmbeddingTable,
};
use crate::corpus::{Dataset, Example};
use crate::error::{Error, Result};
use crate::kernel::{ops, Gradients, Tape, Tensor, ValueId};

/// Checkpoint name of a class's dilution weight vector.
pub fn theta_name(class: &str) -> String {
    format!("dil.{class}.theta")
}

/// Checkpoint name of a class's dilution bias.
pub fn bias_name(class: &str) -> String {
    format!("dil.{class}.b")
}

/// One affine-plus-logistic dilution network per class.
#[derive(Debug, Clone, PartialEq)]
pub struct DilutionModel {
    pub classes: Vec<String>,
    pub theta: Vec<Tensor>,
    pub bias: Vec<Tensor>,
}

impl DilutionModel {
    pub fn new_random(classes: &[String], dim: usize, rng: &mut StdRng) -> Self {
        let theta = classes
            .iter()
            .map(|_| classifier::uniform_init(vec![dim], rng))
            .collect();
        let bias = classes
            .iter()
            .map(|_| classifier::uniform_init(vec![], rng))
            .collect();
        Self {
            classes: classes.to_vec(),
            theta,
            bias,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn dim(&self) -> usize {
        self.theta.first().map_or(0, Tensor::len)
    }

    /// Parameter names in class order, theta before bias.
    pub fn param_names(&self) -> Vec<String> {
        self.classes
            .iter()
            .flat_map(|c| [theta_name(c), bias_name(c)])
            .collect()
    }

    fn check_class(&self, label: usize) -> Result<usize> {
        if label < self.classes.len() {
            Ok(label)
        } else {
            Err(Error::MissingClass(format!("#{label}")))
        }
    }
}

/// Mixing weights for a batch: one vector per example, one entry per word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DilutionWeights {
    pub per_example: Vec<Vec<f64>>,
}

impl DilutionWeights {
    /// Computes every example's weights from the dilution networks.
    pub fn compute(
        batch: &[Example],
        table: &EmbeddingTable,
        model: &DilutionModel,
    ) -> Result<Self> {
        let per_example = batch
            .iter()
            .map(|ex| dilution_weights(ex, table, model))
            .collect::<Result<_>>()?;
        Ok(Self { per_example })
    }

    /// Mean weight over all words of all examples.
    pub fn mean(&self) -> f64 {
        let total: f64 = self.per_example.iter().flatten().sum();
        let count: usize = self.per_example.iter().map(Vec::len).sum();
        if count == 0 {
            0.0
        } else {
            total / count as f64
        }
    }

    /// Checks the sigmoid range invariant `0 < alpha < 1`.
    pub fn validate_open_range(&self) -> Result<()> {
        for (i, alphas) in self.per_example.iter().enumerate() {
            for &a in alphas {
                if !a.is_finite() || a <= 0.0 || a >= 1.0 {
                    return Err(Error::Contract(format!(
                        "dilution weight {a} of example {i} left the open interval (0, 1)"
                    )));
                }
            }
        }
        Ok(())
    }

    fn check_against(&self, batch: &[Example]) -> Result<()> {
        if self.per_example.len() != batch.len() {
            return Err(Error::Contract(format!(
                "{} weight vectors for {} examples",
                self.per_example.len(),
                batch.len()
            )));
        }
        for (alphas, ex) in self.per_example.iter().zip(batch) {
            if alphas.len() != ex.words.len() {
                return Err(Error::Contract(format!(
                    "{} weights for {} words in {:?}",
                    alphas.len(),
                    ex.words.len(),
                    ex.raw_text
                )));
            }
            if let Some(bad) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
                return Err(Error::Contract(format!(
                    "dilution weight {bad} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// How the adversary is kept from saturating every weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Penalty {
    /// Hinge penalty `lambda * max(sum(alpha) - rho * n, 0)` per example.
    Strict { rho: f64, lambda: f64 },
    /// Mean-weight regularizer `gamma * sum(alpha) / n` per example.
    Loose { gamma: f64 },
}

impl Penalty {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Penalty::Strict { rho, lambda } => {
                if !rho.is_finite() || rho <= 0.0 || rho >= 1.0 {
                    return Err(Error::Contract(format!("rho must be in (0, 1), got {rho}")));
                }
                if !lambda.is_finite() || lambda < 0.0 {
                    return Err(Error::Contract(format!("lambda must be >= 0, got {lambda}")));
                }
            }
            Penalty::Loose { gamma } => {
                if !gamma.is_finite() || gamma < 0.0 {
                    return Err(Error::Contract(format!("gamma must be >= 0, got {gamma}")));
                }
            }
        }
        Ok(())
    }
}

/// A diluted example in embedding space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentedExample {
    pub vectors: Vec<Tensor>,
    pub label: usize,
}

/// Weights for one example: `sigmoid(theta_y . e(w) + b_y)` per word.
///
/// Two occurrences of the same token always receive the same weight; the
/// network sees only the word embedding and the class.
pub fn dilution_weights(
    example: &Example,
    table: &EmbeddingTable,
    model: &DilutionModel,
) -> Result<Vec<f64>> {
    let y = model.check_class(example.label)?;
    classifier::example_ids(example)?
        .iter()
        .map(|&id| {
            let emb = table.row(id)?;
            let pre = ops::add(&ops::dot(&model.theta[y], &emb)?, &model.bias[y])?;
            ops::sigmoid(&pre)?.scalar_value()
        })
        .collect()
}

/// Mixes each vector toward the unknown embedding:
/// `(1 - alpha_j) * seq[j] + alpha_j * unk`.
pub fn dilute(seq: &[Tensor], alpha: &[f64], unk: &Tensor) -> Result<Vec<Tensor>> {
    if seq.len() != alpha.len() {
        return Err(Error::Contract(format!(
            "{} vectors but {} weights",
            seq.len(),
            alpha.len()
        )));
    }
    seq.iter()
        .zip(alpha)
        .map(|(v, &a)| ops::convex_mix(v, unk, a))
        .collect()
}

/// Budget slack of one example: `sum |alpha_j| - rho * n`. Non-positive means
/// the constraint is satisfied.
pub fn constraint_value(alpha: &[f64], rho: f64) -> f64 {
    let l1: f64 = alpha.iter().map(|a| a.abs()).sum();
    l1 - rho * alpha.len() as f64
}

/// Tape handles for the dilution networks.
#[derive(Debug, Clone)]
pub struct DilutionNodes {
    pub theta: Vec<ValueId>,
    pub bias: Vec<ValueId>,
}

impl DilutionNodes {
    pub fn insert(tape: &mut Tape, model: &DilutionModel, trainable: bool) -> Result<Self> {
        let mut theta = Vec::with_capacity(model.num_classes());
        let mut bias = Vec::with_capacity(model.num_classes());
        for (i, class) in model.classes.iter().enumerate() {
            if trainable {
                theta.push(tape.param(&theta_name(class), &model.theta[i])?);
                bias.push(tape.param(&bias_name(class), &model.bias[i])?);
            } else {
                theta.push(tape.constant(model.theta[i].clone()));
                bias.push(tape.constant(model.bias[i].clone()));
            }
        }
        Ok(Self { theta, bias })
    }
}

/// Where the mixing weights of the augmented loss come from: recomputed from
/// the dilution networks (differentiable) or frozen numbers.
pub enum AlphaSource<'a> {
    Network(&'a DilutionNodes),
    Fixed(&'a DilutionWeights),
}

impl AlphaSource<'_> {
    fn alpha_node(
        &self,
        tape: &mut Tape,
        example_idx: usize,
        word_idx: usize,
        emb: ValueId,
        class: usize,
    ) -> Result<ValueId> {
        match self {
            AlphaSource::Network(dnodes) => {
                let pre = tape.dot(dnodes.theta[class], emb)?;
                let pre = tape.add(pre, dnodes.bias[class])?;
                tape.sigmoid(pre)
            }
            AlphaSource::Fixed(weights) => {
                let a = weights.per_example[example_idx][word_idx];
                Ok(tape.constant(Tensor::scalar(a)?))
            }
        }
    }
}

/// Builds the augmented cross-entropy loss over a batch and returns the loss
/// node plus every per-word mixing-weight node (for penalty terms).
pub fn augmented_loss_node(
    tape: &mut Tape,
    cnodes: &ClassifierNodes,
    source: &AlphaSource<'_>,
    batch: &[Example],
    unk_id: usize,
) -> Result<(ValueId, Vec<Vec<ValueId>>)> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let AlphaSource::Fixed(weights) = source {
        weights.check_against(batch)?;
    }
    let unk = tape.row(cnodes.table, unk_id)?;
    let mut terms = Vec::with_capacity(batch.len());
    let mut alpha_ids = Vec::with_capacity(batch.len());
    for (i, ex) in batch.iter().enumerate() {
        let ids = classifier::example_ids(ex)?;
        let mut alphas = Vec::with_capacity(ids.len());
        let mut mixed = Vec::with_capacity(ids.len());
        for (j, &id) in ids.iter().enumerate() {
            let emb = tape.row(cnodes.table, id)?;
            let alpha = source.alpha_node(tape, i, j, emb, ex.label)?;
            mixed.push(tape.convex_mix(emb, unk, alpha)?);
            alphas.push(alpha);
        }
        let scores = score_node(tape, cnodes, &mixed)?;
        terms.push(classifier::nll_node(tape, scores, ex.label)?);
        alpha_ids.push(alphas);
    }
    let loss = tape.sum(&terms)?;
    Ok((loss, alpha_ids))
}

/// Adds the penalty term to an augmented loss, yielding the quantity the
/// inner loop maximizes.
pub fn adversary_node(
    tape: &mut Tape,
    loss: ValueId,
    alpha_ids: &[Vec<ValueId>],
    penalty: &Penalty,
) -> Result<ValueId> {
    penalty.validate()?;
    match *penalty {
        Penalty::Strict { rho, lambda } => {
            let mut hinges = Vec::with_capacity(alpha_ids.len());
            for alphas in alpha_ids {
                let total = tape.sum(alphas)?;
                let slack = tape.add_const(total, -rho * alphas.len() as f64)?;
                hinges.push(tape.relu(slack)?);
            }
            let pen = tape.sum(&hinges)?;
            let term = tape.scale(pen, -lambda)?;
            tape.add(loss, term)
        }
        Penalty::Loose { gamma } => {
            let mut terms = Vec::with_capacity(alpha_ids.len());
            for alphas in alpha_ids {
                let total = tape.sum(alphas)?;
                terms.push(tape.scale(total, -gamma / alphas.len() as f64)?);
            }
            let pen = tape.sum(&terms)?;
            tape.add(loss, pen)
        }
    }
}

fn check_labels(batch: &[Example], model: &DilutionModel) -> Result<()> {
    for ex in batch {
        model.check_class(ex.label)?;
    }
    Ok(())
}

/// The adversary objective (augmented loss minus penalty) for any penalty
/// mode, evaluated with every parameter frozen.
pub fn adversary_objective(
    batch: &[Example],
    model: &DilutionModel,
    table: &EmbeddingTable,
    params: &ClassifierParams,
    penalty: &Penalty,
) -> Result<f64> {
    check_labels(batch, model)?;
    let mut tape = Tape::new();
    let cnodes = ClassifierNodes::insert(&mut tape, table, params, false, false)?;
    let dnodes = DilutionNodes::insert(&mut tape, model, false)?;
    let (loss, alphas) = augmented_loss_node(
        &mut tape,
        &cnodes,
        &AlphaSource::Network(&dnodes),
        batch,
        table.unk_id,
    )?;
    let obj = adversary_node(&mut tape, loss, &alphas, penalty)?;
    tape.scalar_value(obj)
}

/// The strict adversary objective `L_a - lambda * sum_i max(R_i, 0)`.
pub fn adversary_objective_strict(
    batch: &Dataset,
    model: &DilutionModel,
    table: &EmbeddingTable,
    params: &ClassifierParams,
    rho: f64,
    lambda: f64,
) -> Result<f64> {
    adversary_objective(
        &batch.examples,
        model,
        table,
        params,
        &Penalty::Strict { rho, lambda },
    )
}

/// The loose adversary objective `L_a - gamma * sum_i mean(alpha_i)`.
pub fn adversary_objective_loose(
    batch: &Dataset,
    model: &DilutionModel,
    table: &EmbeddingTable,
    params: &ClassifierParams,
    gamma: f64,
) -> Result<f64> {
    adversary_objective(&batch.examples, model, table, params, &Penalty::Loose { gamma })
}

/// Objective value and gradients with respect to the dilution networks only;
/// embeddings and classifier enter as constants. This is the inner step.
pub fn adversary_grads(
    batch: &[Example],
    model: &DilutionModel,
    table: &EmbeddingTable,
    params: &ClassifierParams,
    penalty: &Penalty,
) -> Result<(f64, Gradients)> {
    check_labels(batch, model)?;
    let mut tape = Tape::new();
    let cnodes = ClassifierNodes::insert(&mut tape, table, params, false, false)?;
    let dnodes = DilutionNodes::insert(&mut tape, model, true)?;
    let (loss, alphas) = augmented_loss_node(
        &mut tape,
        &cnodes,
        &AlphaSource::Network(&dnodes),
        batch,
        table.unk_id,
    )?;
    let obj = adversary_node(&mut tape, loss, &alphas, penalty)?;
    let value = tape.scalar_value(obj)?;
    Ok((value, tape.backward(obj)?))
}

/// Augmented loss with frozen mixing weights.
pub fn loss_augmented(
    batch: &Dataset,
    weights: &DilutionWeights,
    table: &EmbeddingTable,
    params: &ClassifierParams,
) -> Result<f64> {
    loss_augmented_examples(&batch.examples, weights, table, params)
}

/// [`loss_augmented`] over a plain example slice.
pub fn loss_augmented_examples(
    batch: &[Example],
    weights: &DilutionWeights,
    table: &EmbeddingTable,
    params: &ClassifierParams,
) -> Result<f64> {
    let mut tape = Tape::new();
    let cnodes = ClassifierNodes::insert(&mut tape, table, params, false, false)?;
    let (loss, _) = augmented_loss_node(
        &mut tape,
        &cnodes,
        &AlphaSource::Fixed(weights),
        batch,
        table.unk_id,
    )?;
    tape.scalar_value(loss)
}

/// Augmented loss (frozen weights) and gradients for the selected parameter
/// groups. With trainable embeddings, gradient reaches the table through both
/// the word side and the unknown side of every mix. This is the outer step.
pub fn loss_augmented_grads(
    batch: &[Example],
    weights: &DilutionWeights,
    table: &EmbeddingTable,
    params: &ClassifierParams,
    train_embeddings: bool,
    train_classifier: bool,
) -> Result<(f64, Gradients)> {
    let mut tape = Tape::new();
    let cnodes = ClassifierNodes::insert(&mut tape, table, params, train_embeddings, train_classifier)?;
    let (loss, _) = augmented_loss_node(
        &mut tape,
        &cnodes,
        &AlphaSource::Fixed(weights),
        batch,
        table.unk_id,
    )?;
    let value = tape.scalar_value(loss)?;
    Ok((value, tape.backward(loss)?))
}
