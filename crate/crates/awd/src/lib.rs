//! Adversarial word dilution for low-resource text classification.
//!
//! The library trains a small text classifier on a few labeled examples per
//! class while adversarially learning per-word dilution weights. Each weight
//! mixes a word's embedding with the unknown-word embedding, manufacturing
//! hard positive augmentations; a constrained min-max loop alternates between
//! strengthening the augmentations and training the classifier on them.
//!
//! Module map:
//! - [`corpus`]: JSONL ingestion, tokenization, vocabulary, low-resource
//!   sampling.
//! - [`kernel`]: dense tensors, the primitive op set, reverse-mode gradients,
//!   and finite-difference checking.
//! - [`classifier`]: the mean-pool encoder, clean cross-entropy loss.
//! - [`dilution`]: dilution networks, word dilution, the budget constraint,
//!   strict/loose adversary objectives, augmented loss.
//! - [`trainer`]: the three-step training loop, baseline/discriminator/
//!   augmented-retraining variants, Adam.
//! - [`eval`]: accuracy, the hardness harness, frozen-network extension to
//!   new examples, weight reports.
//! - [`checkpoint`]: versioned named-tensor serialization.

pub mod checkpoint;
pub mod classifier;
pub mod corpus;
pub mod dilution;
pub mod error;
pub mod eval;
pub mod kernel;
pub mod trainer;

pub use checkpoint::{Checkpoint, CKPT_VERSION};
pub use classifier::{ClassifierParams, EmbeddingTable};
pub use corpus::{tokenize, Dataset, Example, Vocab};
pub use dilution::{AugmentedExample, DilutionModel, DilutionWeights, Penalty};
pub use error::{Error, Result};
pub use eval::{HardnessReport, WeightReport};
pub use kernel::Tensor;
pub use trainer::{BatchMode, EpochRecord, TrainConfig, TrainOutcome};
