//! The three-step training loop: per epoch, (1) one optimizer update
//! minimizing the clean loss over embeddings and classifier, (2) a few SGD
//! ascent updates maximizing the adversary objective over the dilution
//! networks only, (3) one optimizer update minimizing the augmented loss with
//! frozen mixing weights. Baseline training runs step (1) only.

use std::collections::HashMap;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::classifier::{
    self, fixed_sequence_nll_node, ClassifierNodes, ClassifierParams, EmbeddingTable, P_EMB,
    P_HIDDEN_B, P_HIDDEN_W, P_OUT_B, P_OUT_W,
};
use crate::corpus::{Dataset, Example, Vocab};
use crate::dilution::{
    self, bias_name, theta_name, AugmentedExample, DilutionModel, DilutionWeights, Penalty,
};
use crate::error::{Error, Result};
use crate::eval;
use crate::kernel::{Gradients, Tape, Tensor};

/// Whether an epoch consumes the whole split at once or shuffled chunks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BatchMode {
    Full,
    Minibatch { size: usize },
}

/// Hyper-parameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub epochs: usize,
    /// Adam learning rate for embeddings and classifier.
    pub outer_lr: f64,
    /// Plain-SGD ascent rate for the dilution networks.
    pub inner_lr: f64,
    /// Dilution-network updates per outer iteration.
    pub inner_steps: usize,
    pub penalty: Penalty,
    pub seed: u64,
    pub batch: BatchMode,
}

impl TrainConfig {
    /// Strict-mode defaults: hinge penalty, five inner SGD updates at 0.01,
    /// Adam at 5e-4, 30 epochs.
    pub fn strict(rho: f64, lambda: f64) -> Self {
        Self {
            embedding_dim: 32,
            hidden_dim: 64,
            epochs: 30,
            outer_lr: 5e-4,
            inner_lr: 0.01,
            inner_steps: 5,
            penalty: Penalty::Strict { rho, lambda },
            seed: 0,
            batch: BatchMode::Full,
        }
    }

    /// Loose-mode defaults: mean-weight regularizer, one inner update.
    pub fn loose(gamma: f64) -> Self {
        Self {
            inner_steps: 1,
            penalty: Penalty::Loose { gamma },
            ..Self::strict(0.3, 1.0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Contract("model dimensions must be positive".into()));
        }
        if !self.outer_lr.is_finite() || self.outer_lr <= 0.0 {
            return Err(Error::Contract(format!(
                "outer learning rate must be positive, got {}",
                self.outer_lr
            )));
        }
        // inner_lr = 0 is allowed: it freezes the dilution networks, which
        // the ablation paths rely on.
        if !self.inner_lr.is_finite() || self.inner_lr < 0.0 {
            return Err(Error::Contract(format!(
                "inner learning rate must be non-negative, got {}",
                self.inner_lr
            )));
        }
        if self.inner_steps == 0 {
            return Err(Error::Contract("inner_steps must be at least 1".into()));
        }
        if let BatchMode::Minibatch { size } = self.batch {
            if size == 0 {
                return Err(Error::Contract("minibatch size must be at least 1".into()));
            }
        }
        self.penalty.validate()
    }
}

/// Per-epoch observability record, one JSON line per epoch in run output.
///
/// The adversary/augmentation fields are `None` on baseline runs, and the
/// constraint-violation fraction is `None` in loose mode (no budget exists).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_clean: f64,
    pub adversary_before: Option<f64>,
    pub adversary_after: Option<f64>,
    pub loss_augmented: Option<f64>,
    pub mean_alpha: Option<f64>,
    pub constraint_violation_frac: Option<f64>,
    pub val_accuracy: f64,
}

/// Everything a finished run hands back: the best-on-validation parameter
/// snapshot, the last-epoch state, and the full epoch stream.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub table: EmbeddingTable,
    pub classifier: ClassifierParams,
    pub dilution: DilutionModel,
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    /// Parameters as of the final epoch, for constraint/weight diagnostics.
    pub final_table: EmbeddingTable,
    pub final_classifier: ClassifierParams,
    pub final_dilution: DilutionModel,
}

/// Adam with the usual defaults (0.9, 0.999, 1e-8), one shared moment state
/// for every parameter it touches.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: HashMap<String, Tensor>,
    v: HashMap<String, Tensor>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: HashMap::new(),
            v: HashMap::new(),
        }
    }

    /// One minimizing update over the given parameters. Order matters for
    /// reproducibility; callers pass a fixed order.
    pub fn step(&mut self, targets: &mut [(&str, &mut Tensor)], grads: &Gradients) -> Result<()> {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for (name, tensor) in targets.iter_mut() {
            let g = grads.expect(name)?;
            let m = self
                .m
                .entry(name.to_string())
                .or_insert_with(|| Tensor::zeros(tensor.shape().to_vec()));
            let v = self
                .v
                .entry(name.to_string())
                .or_insert_with(|| Tensor::zeros(tensor.shape().to_vec()));
            let mut new_m = Vec::with_capacity(g.len());
            let mut new_v = Vec::with_capacity(g.len());
            let mut updated = Vec::with_capacity(g.len());
            for i in 0..g.len() {
                let gi = g.values()[i];
                let mi = self.beta1 * m.values()[i] + (1.0 - self.beta1) * gi;
                let vi = self.beta2 * v.values()[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                updated.push(tensor.values()[i] - self.lr * m_hat / (v_hat.sqrt() + self.eps));
                new_m.push(mi);
                new_v.push(vi);
            }
            *m = Tensor::raw(tensor.shape().to_vec(), new_m);
            *v = Tensor::raw(tensor.shape().to_vec(), new_v);
            **tensor = Tensor::new(tensor.shape().to_vec(), updated)?;
        }
        Ok(())
    }
}

/// One plain-SGD ascent update on the dilution networks.
pub fn sgd_ascent(model: &mut DilutionModel, grads: &Gradients, lr: f64) -> Result<()> {
    for i in 0..model.classes.len() {
        let class = model.classes[i].clone();
        for (tensor, name) in [
            (&mut model.theta[i], theta_name(&class)),
            (&mut model.bias[i], bias_name(&class)),
        ] {
            let g = grads.expect(&name)?;
            let values = tensor
                .values()
                .iter()
                .zip(g.values())
                .map(|(p, gi)| p + lr * gi)
                .collect();
            *tensor = Tensor::new(tensor.shape().to_vec(), values)?;
        }
    }
    Ok(())
}

fn classifier_targets<'a>(
    table: &'a mut EmbeddingTable,
    cls: &'a mut ClassifierParams,
) -> [(&'static str, &'a mut Tensor); 5] {
    [
        (P_EMB, &mut table.weights),
        (P_HIDDEN_W, &mut cls.hidden_w),
        (P_HIDDEN_B, &mut cls.hidden_b),
        (P_OUT_W, &mut cls.out_w),
        (P_OUT_B, &mut cls.out_b),
    ]
}

fn numerical(epoch: usize, step: &str, e: Error) -> Error {
    match e {
        Error::NonFinite(message) => Error::Numerical {
            epoch,
            step: step.to_string(),
            message,
        },
        other => other,
    }
}

struct TrainState {
    table: EmbeddingTable,
    cls: ClassifierParams,
    dil: DilutionModel,
    adam: Adam,
    inner_lr: f64,
    inner_steps: usize,
    penalty: Penalty,
}

impl TrainState {
    /// Initializes every parameter group in a fixed draw order (table,
    /// classifier, dilution networks) so baseline and adversarial runs with
    /// the same seed start identically.
    fn init(vocab: &Vocab, classes: &[String], cfg: &TrainConfig, rng: &mut StdRng) -> Self {
        let table =
            EmbeddingTable::new_random(vocab.len(), cfg.embedding_dim, vocab.unk_id(), rng);
        let cls =
            ClassifierParams::new_random(cfg.embedding_dim, cfg.hidden_dim, classes.len(), rng);
        let dil = DilutionModel::new_random(classes, cfg.embedding_dim, rng);
        Self {
            table,
            cls,
            dil,
            adam: Adam::new(cfg.outer_lr),
            inner_lr: cfg.inner_lr,
            inner_steps: cfg.inner_steps,
            penalty: cfg.penalty,
        }
    }

    /// Step (1): one Adam update minimizing the clean loss over (E, Phi).
    fn step_clean(&mut self, batch: &[Example]) -> Result<f64> {
        let (value, grads) = classifier::loss_clean_grads(batch, &self.table, &self.cls, true, true)?;
        self.adam
            .step(&mut classifier_targets(&mut self.table, &mut self.cls), &grads)?;
        Ok(value)
    }

    /// Step (2): `inner_steps` SGD ascent updates on the dilution networks
    /// with (E, Phi) frozen. Returns the objective before the first update
    /// and after the last one.
    ///
    /// Sigmoid outputs mathematically stay inside (0, 1) but can round to the
    /// endpoints under f64 once the adversary saturates a word; the loop
    /// tolerates that (a fully diluted word is still a finite input).
    fn step_inner(&mut self, batch: &[Example]) -> Result<(f64, f64)> {
        let mut before = 0.0;
        for s in 0..self.inner_steps {
            let (value, grads) =
                dilution::adversary_grads(batch, &self.dil, &self.table, &self.cls, &self.penalty)?;
            if s == 0 {
                before = value;
            }
            sgd_ascent(&mut self.dil, &grads, self.inner_lr)?;
        }
        let after =
            dilution::adversary_objective(batch, &self.dil, &self.table, &self.cls, &self.penalty)?;
        Ok((before, after))
    }

    /// Step (3): recompute the mixing weights, freeze them, and take one Adam
    /// update minimizing the augmented loss over (E, Phi). Returns the
    /// augmented loss evaluated after the update.
    fn step_outer(&mut self, batch: &[Example]) -> Result<f64> {
        let weights = DilutionWeights::compute(batch, &self.table, &self.dil)?;
        let (_, grads) =
            dilution::loss_augmented_grads(batch, &weights, &self.table, &self.cls, true, true)?;
        self.adam
            .step(&mut classifier_targets(&mut self.table, &mut self.cls), &grads)?;
        dilution::loss_augmented_examples(batch, &weights, &self.table, &self.cls)
    }
}

fn epoch_batches(n: usize, mode: BatchMode, rng: &mut StdRng) -> Vec<Vec<usize>> {
    match mode {
        BatchMode::Full => vec![(0..n).collect()],
        BatchMode::Minibatch { size } => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(rng);
            order.chunks(size).map(<[usize]>::to_vec).collect()
        }
    }
}

fn run(
    data: &Dataset,
    val: &Dataset,
    vocab: &Vocab,
    cfg: &TrainConfig,
    adversarial: bool,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() || val.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = StdRng::seed_from_u64(cfg.seed);
    let mut state = TrainState::init(vocab, &data.classes, cfg, &mut rng);

    let strict_rho = match cfg.penalty {
        Penalty::Strict { rho, .. } => Some(rho),
        Penalty::Loose { .. } => None,
    };

    let mut records = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, EmbeddingTable, ClassifierParams, DilutionModel)> = None;

    for epoch in 0..cfg.epochs {
        let batches = epoch_batches(data.len(), cfg.batch, &mut rng);
        let mut loss_clean = 0.0;
        let mut adv_before = 0.0;
        let mut adv_after = 0.0;
        let mut loss_aug = 0.0;
        for indices in &batches {
            let owned: Vec<Example> = indices.iter().map(|&i| data.examples[i].clone()).collect();
            loss_clean += state
                .step_clean(&owned)
                .map_err(|e| numerical(epoch, "clean", e))?;
            if adversarial {
                let (before, after) = state
                    .step_inner(&owned)
                    .map_err(|e| numerical(epoch, "inner", e))?;
                adv_before += before;
                adv_after += after;
                loss_aug += state
                    .step_outer(&owned)
                    .map_err(|e| numerical(epoch, "outer", e))?;
            }
        }

        let (mean_alpha, violation_frac) = if adversarial {
            let weights = DilutionWeights::compute(&data.examples, &state.table, &state.dil)
                .map_err(|e| numerical(epoch, "metrics", e))?;
            let violation = strict_rho.map(|rho| {
                let violating = weights
                    .per_example
                    .iter()
                    .filter(|alphas| dilution::constraint_value(alphas, rho) > 0.0)
                    .count();
                violating as f64 / weights.per_example.len() as f64
            });
            (Some(weights.mean()), violation)
        } else {
            (None, None)
        };

        let val_accuracy = eval::accuracy(&state.table, &state.cls, val)
            .map_err(|e| numerical(epoch, "validation", e))?;

        records.push(EpochRecord {
            epoch,
            loss_clean,
            adversary_before: adversarial.then_some(adv_before),
            adversary_after: adversarial.then_some(adv_after),
            loss_augmented: adversarial.then_some(loss_aug),
            mean_alpha,
            constraint_violation_frac: violation_frac,
            val_accuracy,
        });

        // Earliest epoch wins ties.
        if best.as_ref().is_none_or(|(acc, ..)| val_accuracy > *acc) {
            best = Some((
                val_accuracy,
                epoch,
                state.table.clone(),
                state.cls.clone(),
                state.dil.clone(),
            ));
        }
    }

    let (best_val_accuracy, best_epoch, table, classifier, dilution) = match best {
        Some(b) => b,
        // Zero-epoch runs hand back the initialization untouched.
        None => (
            eval::accuracy(&state.table, &state.cls, val)?,
            0,
            state.table.clone(),
            state.cls.clone(),
            state.dil.clone(),
        ),
    };

    Ok(TrainOutcome {
        table,
        classifier,
        dilution,
        records,
        best_epoch,
        best_val_accuracy,
        final_table: state.table,
        final_classifier: state.cls,
        final_dilution: state.dil,
    })
}

/// Adversarial training: all three steps per epoch, best-on-validation
/// checkpoint selection, deterministic for a fixed seed.
pub fn train(data: &Dataset, val: &Dataset, vocab: &Vocab, cfg: &TrainConfig) -> Result<TrainOutcome> {
    run(data, val, vocab, cfg, true)
}

/// Clean training without augmentation: step (1) only.
pub fn train_baseline(
    data: &Dataset,
    val: &Dataset,
    vocab: &Vocab,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    run(data, val, vocab, cfg, false)
}

/// Trains classifier parameters on top of a frozen embedding table. Used for
/// the hardness discriminator, which must score augmentations living in the
/// embedding space of an existing run.
pub fn train_discriminator(
    data: &Dataset,
    val: &Dataset,
    table: &EmbeddingTable,
    cfg: &TrainConfig,
) -> Result<(ClassifierParams, Vec<EpochRecord>)> {
    cfg.validate()?;
    if data.is_empty() || val.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = StdRng::seed_from_u64(cfg.seed);
    let mut cls =
        ClassifierParams::new_random(table.dim(), cfg.hidden_dim, data.num_classes(), &mut rng);
    let mut adam = Adam::new(cfg.outer_lr);
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, ClassifierParams)> = None;
    for epoch in 0..cfg.epochs {
        let batches = epoch_batches(data.len(), cfg.batch, &mut rng);
        let mut loss_clean = 0.0;
        for indices in &batches {
            let owned: Vec<Example> = indices.iter().map(|&i| data.examples[i].clone()).collect();
            let (value, grads) = classifier::loss_clean_grads(&owned, table, &cls, false, true)
                .map_err(|e| numerical(epoch, "clean", e))?;
            let mut targets = [
                (P_HIDDEN_W, &mut cls.hidden_w),
                (P_HIDDEN_B, &mut cls.hidden_b),
                (P_OUT_W, &mut cls.out_w),
                (P_OUT_B, &mut cls.out_b),
            ];
            adam.step(&mut targets, &grads)
                .map_err(|e| numerical(epoch, "clean", e))?;
            loss_clean += value;
        }
        let val_accuracy = eval::accuracy(table, &cls, val)
            .map_err(|e| numerical(epoch, "validation", e))?;
        records.push(EpochRecord {
            epoch,
            loss_clean,
            adversary_before: None,
            adversary_after: None,
            loss_augmented: None,
            mean_alpha: None,
            constraint_violation_frac: None,
            val_accuracy,
        });
        if best.as_ref().is_none_or(|(acc, _)| val_accuracy > *acc) {
            best = Some((val_accuracy, cls.clone()));
        }
    }
    let cls = best.map_or(cls, |(_, c)| c);
    Ok((cls, records))
}

/// Baseline training whose loss additionally covers fixed, externally
/// generated embedding-space augmentations. `init_table` seeds the embedding
/// table from an existing run (the table stays trainable); the random draws
/// are unchanged either way, so paired-seed comparisons stay aligned.
pub fn train_with_augmentations(
    data: &Dataset,
    augmentations: &[AugmentedExample],
    val: &Dataset,
    vocab: &Vocab,
    cfg: &TrainConfig,
    init_table: Option<&EmbeddingTable>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() || val.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for aug in augmentations {
        if aug.label >= data.num_classes() {
            return Err(Error::MissingClass(format!("#{}", aug.label)));
        }
        if aug.vectors.iter().any(|v| v.len() != cfg.embedding_dim) {
            return Err(Error::Incompatible(format!(
                "augmentation vectors must have width {}",
                cfg.embedding_dim
            )));
        }
    }
    let mut rng = StdRng::seed_from_u64(cfg.seed);
    let mut state = TrainState::init(vocab, &data.classes, cfg, &mut rng);
    if let Some(t) = init_table {
        if t.dim() != cfg.embedding_dim || t.vocab_size() != vocab.len() {
            return Err(Error::Incompatible(format!(
                "initial table is {}x{}, expected {}x{}",
                t.vocab_size(),
                t.dim(),
                vocab.len(),
                cfg.embedding_dim
            )));
        }
        state.table = t.clone();
    }

    let mut records = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, EmbeddingTable, ClassifierParams)> = None;
    for epoch in 0..cfg.epochs {
        let batches = epoch_batches(data.len(), cfg.batch, &mut rng);
        let mut loss_clean = 0.0;
        for indices in &batches {
            let owned: Vec<Example> = indices.iter().map(|&i| data.examples[i].clone()).collect();
            let mut step = || -> Result<f64> {
                let mut tape = Tape::new();
                let nodes =
                    ClassifierNodes::insert(&mut tape, &state.table, &state.cls, true, true)?;
                let mut terms =
                    vec![classifier::clean_loss_node(&mut tape, &nodes, &owned)?];
                for aug in augmentations {
                    terms.push(fixed_sequence_nll_node(
                        &mut tape,
                        &nodes,
                        &aug.vectors,
                        aug.label,
                    )?);
                }
                let total = tape.sum(&terms)?;
                let value = tape.scalar_value(total)?;
                let grads = tape.backward(total)?;
                state
                    .adam
                    .step(&mut classifier_targets(&mut state.table, &mut state.cls), &grads)?;
                Ok(value)
            };
            loss_clean += step().map_err(|e| numerical(epoch, "clean", e))?;
        }
        let val_accuracy = eval::accuracy(&state.table, &state.cls, val)
            .map_err(|e| numerical(epoch, "validation", e))?;
        records.push(EpochRecord {
            epoch,
            loss_clean,
            adversary_before: None,
            adversary_after: None,
            loss_augmented: None,
            mean_alpha: None,
            constraint_violation_frac: None,
            val_accuracy,
        });
        if best.as_ref().is_none_or(|(acc, ..)| val_accuracy > *acc) {
            best = Some((val_accuracy, epoch, state.table.clone(), state.cls.clone()));
        }
    }
    let (best_val_accuracy, best_epoch, table, classifier) = match best {
        Some(b) => b,
        None => (
            eval::accuracy(&state.table, &state.cls, val)?,
            0,
            state.table.clone(),
            state.cls.clone(),
        ),
    };
    Ok(TrainOutcome {
        table,
        classifier,
        dilution: state.dil.clone(),
        records,
        best_epoch,
        best_val_accuracy,
        final_table: state.table,
        final_classifier: state.cls,
        final_dilution: state.dil,
    })
}
