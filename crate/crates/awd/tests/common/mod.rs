//! Shared fixtures: synthetic separable corpora and an independent
//! logistic-regression oracle for separability claims.

// Each integration-test target uses its own subset of these helpers.
#![allow(dead_code)]

use awd::corpus::{synthetic, Dataset, Vocab};
use awd::trainer::{BatchMode, TrainConfig};
use awd::Penalty;

pub struct Toy {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub vocab: Vocab,
}

/// Train/val/test splits of the separable sentiment corpus, all encoded
/// against the training vocabulary.
pub fn separable_split(
    train_per_class: usize,
    val_per_class: usize,
    test_per_class: usize,
    seed: u64,
) -> Toy {
    let mut train = synthetic::separable_dataset(train_per_class, seed);
    let mut val = synthetic::separable_dataset(val_per_class, seed.wrapping_add(7001));
    let mut test = synthetic::separable_dataset(test_per_class, seed.wrapping_add(9002));
    let vocab = Vocab::build(&[&train], 1).expect("non-empty corpus");
    train.encode(&vocab);
    val.encode(&vocab);
    test.encode(&vocab);
    Toy {
        train,
        val,
        test,
        vocab,
    }
}

/// Desk-scale training configuration: small model, learning rate large
/// enough to fit a toy corpus from scratch within 30 epochs.
pub fn desk_config(penalty: Penalty, seed: u64) -> TrainConfig {
    let inner_steps = match penalty {
        Penalty::Strict { .. } => 5,
        Penalty::Loose { .. } => 1,
    };
    TrainConfig {
        embedding_dim: 16,
        hidden_dim: 32,
        epochs: 30,
        outer_lr: 0.05,
        inner_lr: 0.05,
        inner_steps,
        penalty,
        seed,
        batch: BatchMode::Full,
    }
}

/// Plain full-batch logistic regression on bag-of-words counts, written with
/// raw loops so it shares nothing with the library's kernel. Returns
/// (train accuracy, eval accuracy). Binary corpora only.
pub fn logistic_regression_oracle(train: &Dataset, eval: &Dataset, vocab_size: usize) -> (f64, f64) {
    assert_eq!(train.num_classes(), 2, "oracle handles binary corpora");
    let features = |ds: &Dataset| -> Vec<(Vec<f64>, f64)> {
        ds.examples
            .iter()
            .map(|ex| {
                let mut x = vec![0.0; vocab_size];
                for &t in &ex.tokens {
                    x[t] += 1.0;
                }
                (x, ex.label as f64)
            })
            .collect()
    };
    let train_xy = features(train);
    let eval_xy = features(eval);

    let mut w = vec![0.0f64; vocab_size];
    let mut b = 0.0f64;
    let lr = 0.5 / train_xy.len() as f64;
    for _ in 0..2000 {
        let mut gw = vec![0.0f64; vocab_size];
        let mut gb = 0.0f64;
        for (x, y) in &train_xy {
            let z: f64 = b + x.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            let p = 1.0 / (1.0 + (-z).exp());
            let err = p - y;
            for (g, a) in gw.iter_mut().zip(x) {
                *g += err * a;
            }
            gb += err;
        }
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= lr * g;
        }
        b -= lr * gb;
    }

    let acc = |xy: &[(Vec<f64>, f64)]| {
        let correct = xy
            .iter()
            .filter(|(x, y)| {
                let z: f64 = b + x.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
                let predicted = if z > 0.0 { 1.0 } else { 0.0 };
                predicted == *y
            })
            .count();
        correct as f64 / xy.len() as f64
    };
    (acc(&train_xy), acc(&eval_xy))
}
