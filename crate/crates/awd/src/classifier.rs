//! The desk-scale text classifier: embedding lookup, a mean-pool encoder with
//! one hidden layer, and the summed cross-entropy loss over a batch.

use rand::rngs::StdRng;
use rand::Rng;

use crate::corpus::{Dataset, Example};
use crate::error::{Error, Result};
use crate::kernel::{ops, Gradients, Tape, Tensor, ValueId};

/// Checkpoint name of the embedding matrix.
pub const P_EMB: &str = "emb.E";
/// Checkpoint name of the hidden-layer weights.
pub const P_HIDDEN_W: &str = "cls.hidden.W";
/// Checkpoint name of the hidden-layer bias.
pub const P_HIDDEN_B: &str = "cls.hidden.b";
/// Checkpoint name of the per-class output rows.
pub const P_OUT_W: &str = "cls.out.W";
/// Checkpoint name of the output bias.
pub const P_OUT_B: &str = "cls.out.b";

/// Uniform(-0.1, 0.1) initialization shared by all trainable tensors.
pub(crate) fn uniform_init(shape: Vec<usize>, rng: &mut StdRng) -> Tensor {
    let n = shape.iter().product();
    let values = (0..n).map(|_| rng.gen_range(-0.1..0.1)).collect();
    Tensor::new(shape, values).expect("uniform draws are finite")
}

/// The learnable embedding matrix, one row per vocabulary id, including the
/// unknown-word row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub weights: Tensor,
    pub unk_id: usize,
}

impl EmbeddingTable {
    pub fn new_random(vocab_size: usize, dim: usize, unk_id: usize, rng: &mut StdRng) -> Self {
        Self {
            weights: uniform_init(vec![vocab_size, dim], rng),
            unk_id,
        }
    }

    pub fn from_tensor(weights: Tensor, unk_id: usize) -> Result<Self> {
        if weights.shape().len() != 2 {
            return Err(Error::Contract(format!(
                "embedding table must be rank 2, got {:?}",
                weights.shape()
            )));
        }
        if unk_id >= weights.rows() {
            return Err(Error::Lookup {
                id: unk_id,
                size: weights.rows(),
            });
        }
        Ok(Self { weights, unk_id })
    }

    pub fn vocab_size(&self) -> usize {
        self.weights.rows()
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    /// Embedding of one token id.
    pub fn row(&self, id: usize) -> Result<Tensor> {
        ops::row(&self.weights, id).map_err(|_| Error::Lookup {
            id,
            size: self.vocab_size(),
        })
    }

    /// Embedding of the unknown word.
    pub fn unk_row(&self) -> Tensor {
        ops::row(&self.weights, self.unk_id).expect("unk row validated at construction")
    }
}

/// Encoder parameters: hidden layer (d -> h, relu) and per-class output rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    pub hidden_w: Tensor,
    pub hidden_b: Tensor,
    pub out_w: Tensor,
    pub out_b: Tensor,
}

impl ClassifierParams {
    pub fn new_random(dim: usize, hidden: usize, num_classes: usize, rng: &mut StdRng) -> Self {
        Self {
            hidden_w: uniform_init(vec![hidden, dim], rng),
            hidden_b: uniform_init(vec![hidden], rng),
            out_w: uniform_init(vec![num_classes, hidden], rng),
            out_b: uniform_init(vec![num_classes], rng),
        }
    }

    pub fn zeros(dim: usize, hidden: usize, num_classes: usize) -> Self {
        Self {
            hidden_w: Tensor::zeros(vec![hidden, dim]),
            hidden_b: Tensor::zeros(vec![hidden]),
            out_w: Tensor::zeros(vec![num_classes, hidden]),
            out_b: Tensor::zeros(vec![num_classes]),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.out_w.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_w.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.hidden_w.cols()
    }
}

/// Tape handles for the classifier parameters, inserted either as trainable
/// leaves (named, receiving gradients) or as constants.
#[derive(Debug, Clone, Copy)]
pub struct ClassifierNodes {
    pub table: ValueId,
    pub hidden_w: ValueId,
    pub hidden_b: ValueId,
    pub out_w: ValueId,
    pub out_b: ValueId,
}

impl ClassifierNodes {
    pub fn insert(
        tape: &mut Tape,
        table: &EmbeddingTable,
        params: &ClassifierParams,
        train_embeddings: bool,
        train_classifier: bool,
    ) -> Result<Self> {
        let table_id = if train_embeddings {
            tape.param(P_EMB, &table.weights)?
        } else {
            tape.constant(table.weights.clone())
        };
        let leaf = |name: &str, t: &Tensor, tape: &mut Tape| -> Result<ValueId> {
            if train_classifier {
                tape.param(name, t)
            } else {
                Ok(tape.constant(t.clone()))
            }
        };
        Ok(Self {
            table: table_id,
            hidden_w: leaf(P_HIDDEN_W, &params.hidden_w, tape)?,
            hidden_b: leaf(P_HIDDEN_B, &params.hidden_b, tape)?,
            out_w: leaf(P_OUT_W, &params.out_w, tape)?,
            out_b: leaf(P_OUT_B, &params.out_b, tape)?,
        })
    }
}

/// Looks up the embedding node of every token id in order.
pub fn token_embedding_nodes(
    tape: &mut Tape,
    nodes: &ClassifierNodes,
    ids: &[usize],
) -> Result<Vec<ValueId>> {
    ids.iter().map(|&id| tape.row(nodes.table, id)).collect()
}

/// Scores a sequence of embedding nodes: mean pool, hidden relu layer,
/// per-class linear outputs.
pub fn score_node(tape: &mut Tape, nodes: &ClassifierNodes, seq: &[ValueId]) -> Result<ValueId> {
    if seq.is_empty() {
        return Err(Error::Contract("score of an empty sequence".into()));
    }
    let pooled = tape.mean_pool(seq)?;
    let pre = tape.matvec(nodes.hidden_w, pooled)?;
    let pre = tape.add(pre, nodes.hidden_b)?;
    let h = tape.relu(pre)?;
    let out = tape.matvec(nodes.out_w, h)?;
    tape.add(out, nodes.out_b)
}

/// Negative log-likelihood of `label` under the softmax of `scores`.
pub fn nll_node(tape: &mut Tape, scores: ValueId, label: usize) -> Result<ValueId> {
    let log_probs = tape.log_softmax(scores)?;
    let picked = tape.pick(log_probs, label)?;
    tape.scale(picked, -1.0)
}

/// Summed cross-entropy over a slice of encoded examples.
pub fn clean_loss_node(
    tape: &mut Tape,
    nodes: &ClassifierNodes,
    batch: &[Example],
) -> Result<ValueId> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut terms = Vec::with_capacity(batch.len());
    for ex in batch {
        let seq = token_embedding_nodes(tape, nodes, example_ids(ex)?)?;
        let scores = score_node(tape, nodes, &seq)?;
        terms.push(nll_node(tape, scores, ex.label)?);
    }
    tape.sum(&terms)
}

/// Negative log-likelihood of a fixed (constant) embedding sequence; used
/// when training on externally generated augmentations.
pub fn fixed_sequence_nll_node(
    tape: &mut Tape,
    nodes: &ClassifierNodes,
    vectors: &[Tensor],
    label: usize,
) -> Result<ValueId> {
    let seq: Vec<ValueId> = vectors
        .iter()
        .map(|v| tape.constant(v.clone()))
        .collect();
    let scores = score_node(tape, nodes, &seq)?;
    nll_node(tape, scores, label)
}

pub(crate) fn example_ids(ex: &Example) -> Result<&[usize]> {
    if ex.tokens.len() != ex.words.len() {
        return Err(Error::Contract(format!(
            "example {:?} is not encoded",
            ex.raw_text
        )));
    }
    Ok(&ex.tokens)
}

/// Embeds an encoded example: output `j` is row `tokens[j]` of the table.
pub fn embed(example: &Example, table: &EmbeddingTable) -> Result<Vec<Tensor>> {
    example_ids(example)?.iter().map(|&id| table.row(id)).collect()
}

/// Scores a sequence of embedding vectors without a tape.
pub fn score(seq: &[Tensor], params: &ClassifierParams) -> Result<Tensor> {
    if seq.is_empty() {
        return Err(Error::Contract("score of an empty sequence".into()));
    }
    let refs: Vec<&Tensor> = seq.iter().collect();
    let pooled = ops::mean_pool(&refs)?;
    let pre = ops::add(&ops::matvec(&params.hidden_w, &pooled)?, &params.hidden_b)?;
    let h = ops::relu(&pre)?;
    ops::add(&ops::matvec(&params.out_w, &h)?, &params.out_b)
}

/// Index of the highest score; ties resolve to the lowest class id.
pub fn argmax(scores: &Tensor) -> usize {
    let mut best = 0;
    for (i, &v) in scores.values().iter().enumerate() {
        if v > scores.values()[best] {
            best = i;
        }
    }
    best
}

/// Predicted class of an encoded example.
pub fn predict(example: &Example, table: &EmbeddingTable, params: &ClassifierParams) -> Result<usize> {
    Ok(argmax(&score(&embed(example, table)?, params)?))
}

/// Predicted class of a raw embedding sequence.
pub fn predict_vectors(vectors: &[Tensor], params: &ClassifierParams) -> Result<usize> {
    Ok(argmax(&score(vectors, params)?))
}

// The augmented counterpart lives with the dilution machinery; re-exported
// here because the two losses form one pair.
pub use crate::dilution::loss_augmented;

/// The summed clean cross-entropy loss over the whole batch.
pub fn loss_clean(batch: &Dataset, table: &EmbeddingTable, params: &ClassifierParams) -> Result<f64> {
    let mut tape = Tape::new();
    let nodes = ClassifierNodes::insert(&mut tape, table, params, false, false)?;
    let loss = clean_loss_node(&mut tape, &nodes, &batch.examples)?;
    tape.scalar_value(loss)
}

/// Clean loss and its gradients for the selected parameter groups.
pub fn loss_clean_grads(
    batch: &[Example],
    table: &EmbeddingTable,
    params: &ClassifierParams,
    train_embeddings: bool,
    train_classifier: bool,
) -> Result<(f64, Gradients)> {
    let mut tape = Tape::new();
    let nodes = ClassifierNodes::insert(&mut tape, table, params, train_embeddings, train_classifier)?;
    let loss = clean_loss_node(&mut tape, &nodes, batch)?;
    let value = tape.scalar_value(loss)?;
    Ok((value, tape.backward(loss)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn encoded_example(ids: &[usize], label: usize) -> Example {
        Example {
            words: ids.iter().map(|i| format!("w{i}")).collect(),
            tokens: ids.to_vec(),
            label,
            raw_text: String::new(),
        }
    }

    fn toy_batch(num_classes: usize) -> Dataset {
        Dataset {
            examples: vec![encoded_example(&[1, 2], 0)],
            classes: (0..num_classes).map(|c| format!("c{c}")).collect(),
            k: None,
        }
    }

    #[test]
    fn embed_unknown_row() {
        let mut rng = StdRng::seed_from_u64(0);
        let table = EmbeddingTable::new_random(4, 3, 0, &mut rng);
        let ex = encoded_example(&[0], 0);
        let vecs = embed(&ex, &table).unwrap();
        assert_eq!(vecs, vec![table.unk_row()]);
    }

    #[test]
    fn embed_repeats_and_locality() {
        let mut rng = StdRng::seed_from_u64(1);
        let table = EmbeddingTable::new_random(6, 3, 0, &mut rng);
        let ex = encoded_example(&[0, 0], 0);
        let vecs = embed(&ex, &table).unwrap();
        assert_eq!(vecs[0], vecs[1]);

        // Change row 3 only; token 3's embedding changes, token 5's does not.
        let mut values = table.weights.values().to_vec();
        let cols = table.dim();
        for v in values.iter_mut().skip(3 * cols).take(cols) {
            *v += 1.0;
        }
        let bumped = EmbeddingTable::from_tensor(
            Tensor::new(table.weights.shape().to_vec(), values).unwrap(),
            0,
        )
        .unwrap();
        assert_ne!(
            embed(&encoded_example(&[3], 0), &table).unwrap(),
            embed(&encoded_example(&[3], 0), &bumped).unwrap()
        );
        assert_eq!(
            embed(&encoded_example(&[5], 0), &table).unwrap(),
            embed(&encoded_example(&[5], 0), &bumped).unwrap()
        );
    }

    #[test]
    fn zero_params_tie_scores() {
        let params = ClassifierParams::zeros(3, 4, 2);
        let seq = vec![Tensor::vector(vec![1.0, -2.0, 0.5]).unwrap()];
        let scores = score(&seq, &params).unwrap();
        assert_eq!(scores.values(), &[0.0, 0.0]);
    }

    #[test]
    fn score_is_order_invariant() {
        let mut rng = StdRng::seed_from_u64(2);
        let params = ClassifierParams::new_random(3, 4, 2, &mut rng);
        let a = Tensor::vector(vec![0.3, -0.1, 0.9]).unwrap();
        let b = Tensor::vector(vec![-0.5, 0.2, 0.1]).unwrap();
        let fwd = score(&[a.clone(), b.clone()], &params).unwrap();
        let rev = score(&[b, a], &params).unwrap();
        for (x, y) in fwd.values().iter().zip(rev.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn score_ignores_duplication() {
        let mut rng = StdRng::seed_from_u64(3);
        let params = ClassifierParams::new_random(3, 4, 2, &mut rng);
        let a = Tensor::vector(vec![0.3, -0.1, 0.9]).unwrap();
        let b = Tensor::vector(vec![-0.5, 0.2, 0.1]).unwrap();
        let base = score(&[a.clone(), b.clone()], &params).unwrap();
        let doubled = score(&[a.clone(), a, b.clone(), b], &params).unwrap();
        for (x, y) in base.values().iter().zip(doubled.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn score_rejects_empty_sequence() {
        let params = ClassifierParams::zeros(3, 4, 2);
        assert!(matches!(score(&[], &params), Err(Error::Contract(_))));
    }

    #[test]
    fn uniform_loss_two_and_six_classes() {
        for (classes, expected) in [(2, (2.0f64).ln()), (6, (6.0f64).ln())] {
            let table = EmbeddingTable::from_tensor(Tensor::zeros(vec![4, 3]), 0).unwrap();
            let params = ClassifierParams::zeros(3, 4, classes);
            let batch = toy_batch(classes);
            let loss = loss_clean(&batch, &table, &params).unwrap();
            assert!((loss - expected).abs() < 1e-12, "classes={classes}");
        }
    }

    #[test]
    fn identical_examples_sum_exactly() {
        let mut rng = StdRng::seed_from_u64(4);
        let table = EmbeddingTable::new_random(5, 3, 0, &mut rng);
        let params = ClassifierParams::new_random(3, 4, 2, &mut rng);
        let one = Dataset {
            examples: vec![encoded_example(&[1, 2], 0)],
            classes: vec!["a".into(), "b".into()],
            k: None,
        };
        let three = Dataset {
            examples: vec![
                encoded_example(&[1, 2], 0),
                encoded_example(&[1, 2], 0),
                encoded_example(&[1, 2], 0),
            ],
            classes: one.classes.clone(),
            k: None,
        };
        let single = loss_clean(&one, &table, &params).unwrap();
        let triple = loss_clean(&three, &table, &params).unwrap();
        assert_eq!(triple, 3.0 * single);
    }

    #[test]
    fn loss_is_nonnegative() {
        let mut rng = StdRng::seed_from_u64(5);
        let table = EmbeddingTable::new_random(5, 3, 0, &mut rng);
        let params = ClassifierParams::new_random(3, 4, 3, &mut rng);
        let batch = Dataset {
            examples: vec![encoded_example(&[1, 4], 2), encoded_example(&[2], 0)],
            classes: vec!["a".into(), "b".into(), "c".into()],
            k: None,
        };
        assert!(loss_clean(&batch, &table, &params).unwrap() >= 0.0);
    }

    #[test]
    fn argmax_ties_to_lowest_and_shift_invariant() {
        let scores = Tensor::vector(vec![0.5, 0.5, 0.1]).unwrap();
        assert_eq!(argmax(&scores), 0);
        let scores = Tensor::vector(vec![0.1, 0.9, 0.3]).unwrap();
        let shifted = ops::add_const(&scores, 123.0).unwrap();
        assert_eq!(argmax(&scores), argmax(&shifted));
    }

    #[test]
    fn clean_gradients_pass_finite_differences() {
        let mut rng = StdRng::seed_from_u64(6);
        let table = EmbeddingTable::new_random(5, 3, 0, &mut rng);
        let params = ClassifierParams::new_random(3, 4, 2, &mut rng);
        let batch = Dataset {
            examples: vec![encoded_example(&[1, 2, 1], 0), encoded_example(&[3, 4], 1)],
            classes: vec!["a".into(), "b".into()],
            k: None,
        };
        let (_, grads) = loss_clean_grads(&batch.examples, &table, &params, true, true).unwrap();
        let tensors = [
            table.weights.clone(),
            params.hidden_w.clone(),
            params.hidden_b.clone(),
            params.out_w.clone(),
            params.out_b.clone(),
        ];
        let analytic = [
            grads.get(P_EMB).unwrap().clone(),
            grads.get(P_HIDDEN_W).unwrap().clone(),
            grads.get(P_HIDDEN_B).unwrap().clone(),
            grads.get(P_OUT_W).unwrap().clone(),
            grads.get(P_OUT_B).unwrap().clone(),
        ];
        let eval = |p: &[Tensor]| {
            let t = EmbeddingTable::from_tensor(p[0].clone(), 0)?;
            let c = ClassifierParams {
                hidden_w: p[1].clone(),
                hidden_b: p[2].clone(),
                out_w: p[3].clone(),
                out_b: p[4].clone(),
            };
            loss_clean(&batch, &t, &c)
        };
        let err = crate::kernel::finite_diff_check(eval, &tensors, &analytic, 1e-5).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }
}
