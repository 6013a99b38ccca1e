//! Reverse-mode differentiation over a recorded primitive graph.
//!
//! The tape is define-by-run: every primitive call computes its forward value
//! immediately (through the functions in [`super::ops`]) and records the
//! operation. [`Tape::backward`] then walks the record once in reverse and
//! accumulates gradients by the chain rule. This is deliberately not a general
//! autodiff engine; the op set is exactly what the dilution pipeline needs.

use std::collections::HashMap;

use super::ops;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValueId(usize);

#[derive(Debug)]
enum Op {
    Const,
    Add(ValueId, ValueId),
    Scale(ValueId, f64),
    AddConst(ValueId),
    MatVec(ValueId, ValueId),
    Dot(ValueId, ValueId),
    ConvexMix {
        a: ValueId,
        b: ValueId,
        alpha: ValueId,
    },
    MeanPool(Vec<ValueId>),
    Relu(ValueId),
    Sigmoid(ValueId),
    LogSoftmax(ValueId),
    Pick(ValueId, usize),
    Row(ValueId, usize),
    Sum(Vec<ValueId>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients keyed by parameter name after a backward pass.
///
/// Every parameter registered on the tape is present; parameters that never
/// influenced the loss map to all-zero tensors of their own shape.
#[derive(Debug, Clone)]
pub struct Gradients {
    map: HashMap<String, Tensor>,
}

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.map.get(name)
    }

    pub fn expect(&self, name: &str) -> Result<&Tensor> {
        self.map
            .get(name)
            .ok_or_else(|| Error::Contract(format!("no gradient recorded for {name:?}")))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// A single-use record of one forward computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(String, ValueId)>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> ValueId {
        let id = ValueId(self.nodes.len());
        self.nodes.push(Node { value, op });
        id
    }

    /// Records a leaf that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> ValueId {
        self.push(value, Op::Const)
    }

    /// Records a trainable leaf under a unique name.
    pub fn param(&mut self, name: &str, value: &Tensor) -> Result<ValueId> {
        if self.params.iter().any(|(n, _)| n == name) {
            return Err(Error::Contract(format!(
                "parameter {name:?} registered twice"
            )));
        }
        let id = self.push(value.clone(), Op::Const);
        self.params.push((name.to_string(), id));
        Ok(id)
    }

    pub fn value(&self, id: ValueId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn scalar_value(&self, id: ValueId) -> Result<f64> {
        self.nodes[id.0].value.scalar_value()
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let v = ops::add(self.value(a), self.value(b))?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn scale(&mut self, a: ValueId, c: f64) -> Result<ValueId> {
        let v = ops::scale(self.value(a), c)?;
        Ok(self.push(v, Op::Scale(a, c)))
    }

    pub fn add_const(&mut self, a: ValueId, c: f64) -> Result<ValueId> {
        let v = ops::add_const(self.value(a), c)?;
        Ok(self.push(v, Op::AddConst(a)))
    }

    pub fn matvec(&mut self, m: ValueId, v: ValueId) -> Result<ValueId> {
        let out = ops::matvec(self.value(m), self.value(v))?;
        Ok(self.push(out, Op::MatVec(m, v)))
    }

    pub fn dot(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let out = ops::dot(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Dot(a, b)))
    }

    /// `(1 - alpha) * a + alpha * b` with a scalar-node mixing weight.
    pub fn convex_mix(&mut self, a: ValueId, b: ValueId, alpha: ValueId) -> Result<ValueId> {
        let w = self.scalar_value(alpha)?;
        let out = ops::convex_mix(self.value(a), self.value(b), w)?;
        Ok(self.push(out, Op::ConvexMix { a, b, alpha }))
    }

    pub fn mean_pool(&mut self, seq: &[ValueId]) -> Result<ValueId> {
        let tensors: Vec<&Tensor> = seq.iter().map(|&id| self.value(id)).collect();
        let out = ops::mean_pool(&tensors)?;
        Ok(self.push(out, Op::MeanPool(seq.to_vec())))
    }

    pub fn relu(&mut self, a: ValueId) -> Result<ValueId> {
        let out = ops::relu(self.value(a))?;
        Ok(self.push(out, Op::Relu(a)))
    }

    pub fn sigmoid(&mut self, a: ValueId) -> Result<ValueId> {
        let out = ops::sigmoid(self.value(a))?;
        Ok(self.push(out, Op::Sigmoid(a)))
    }

    pub fn log_softmax(&mut self, a: ValueId) -> Result<ValueId> {
        let out = ops::log_softmax(self.value(a))?;
        Ok(self.push(out, Op::LogSoftmax(a)))
    }

    pub fn pick(&mut self, v: ValueId, i: usize) -> Result<ValueId> {
        let out = ops::pick(self.value(v), i)?;
        Ok(self.push(out, Op::Pick(v, i)))
    }

    pub fn row(&mut self, m: ValueId, i: usize) -> Result<ValueId> {
        let out = ops::row(self.value(m), i)?;
        Ok(self.push(out, Op::Row(m, i)))
    }

    pub fn sum(&mut self, xs: &[ValueId]) -> Result<ValueId> {
        let tensors: Vec<&Tensor> = xs.iter().map(|&id| self.value(id)).collect();
        let out = ops::sum(&tensors)?;
        Ok(self.push(out, Op::Sum(xs.to_vec())))
    }

    /// Runs the reverse sweep from a scalar loss and consumes the tape.
    pub fn backward(self, loss: ValueId) -> Result<Gradients> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::Contract("loss node is not on this tape".into()));
        }
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }

        let mut slots: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        slots[loss.0] = Some(Tensor::new(
            self.nodes[loss.0].value.shape().to_vec(),
            vec![1.0],
        )?);

        for i in (0..self.nodes.len()).rev() {
            if matches!(self.nodes[i].op, Op::Const) {
                continue;
            }
            let Some(g) = slots[i].take() else { continue };
            self.propagate(i, &g, &mut slots)?;
        }

        let mut map = HashMap::with_capacity(self.params.len());
        for (name, id) in &self.params {
            let grad = slots[id.0]
                .take()
                .unwrap_or_else(|| Tensor::zeros(self.nodes[id.0].value.shape().to_vec()));
            map.insert(name.clone(), grad);
        }
        Ok(Gradients { map })
    }

    fn propagate(&self, i: usize, g: &Tensor, slots: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[i];
        match &node.op {
            Op::Const => {}
            Op::Add(a, b) => {
                accum(slots, *a, g.clone())?;
                accum(slots, *b, g.clone())?;
            }
            Op::Scale(a, c) => {
                accum(slots, *a, raw_scale(g, *c))?;
            }
            Op::AddConst(a) => {
                accum(slots, *a, g.clone())?;
            }
            Op::MatVec(m, v) => {
                let mat = self.value(*m);
                let vec = self.value(*v);
                let (rows, cols) = (mat.rows(), mat.cols());
                let mut dm = vec![0.0; rows * cols];
                for r in 0..rows {
                    let gr = g.values()[r];
                    for c in 0..cols {
                        dm[r * cols + c] = gr * vec.values()[c];
                    }
                }
                accum(slots, *m, raw(vec![rows, cols], dm))?;
                let mut dv = vec![0.0; cols];
                for r in 0..rows {
                    let row = mat.row_slice(r)?;
                    let gr = g.values()[r];
                    for (c, w) in row.iter().enumerate() {
                        dv[c] += gr * w;
                    }
                }
                accum(slots, *v, raw(vec![cols], dv))?;
            }
            Op::Dot(a, b) => {
                let g0 = g.values()[0];
                accum(slots, *a, raw_scale(self.value(*b), g0))?;
                accum(slots, *b, raw_scale(self.value(*a), g0))?;
            }
            Op::ConvexMix { a, b, alpha } => {
                let w = self.value(*alpha).values()[0];
                accum(slots, *a, raw_scale(g, 1.0 - w))?;
                accum(slots, *b, raw_scale(g, w))?;
                let da: f64 = g
                    .values()
                    .iter()
                    .zip(self.value(*b).values().iter().zip(self.value(*a).values()))
                    .map(|(gc, (bc, ac))| gc * (bc - ac))
                    .sum();
                accum(
                    slots,
                    *alpha,
                    raw(self.value(*alpha).shape().to_vec(), vec![da]),
                )?;
            }
            Op::MeanPool(inputs) => {
                let share = raw_scale(g, 1.0 / inputs.len() as f64);
                for &input in inputs {
                    accum(slots, input, share.clone())?;
                }
            }
            Op::Relu(a) => {
                let mask: Vec<f64> = self
                    .value(*a)
                    .values()
                    .iter()
                    .zip(g.values())
                    .map(|(&x, &gc)| if x > 0.0 { gc } else { 0.0 })
                    .collect();
                accum(slots, *a, raw(g.shape().to_vec(), mask))?;
            }
            Op::Sigmoid(a) => {
                let dv: Vec<f64> = node
                    .value
                    .values()
                    .iter()
                    .zip(g.values())
                    .map(|(&s, &gc)| gc * s * (1.0 - s))
                    .collect();
                accum(slots, *a, raw(g.shape().to_vec(), dv))?;
            }
            Op::LogSoftmax(a) => {
                let probs = ops::softmax_values(self.value(*a));
                let gsum: f64 = g.values().iter().sum();
                let dv: Vec<f64> = g
                    .values()
                    .iter()
                    .zip(probs)
                    .map(|(&gc, p)| gc - p * gsum)
                    .collect();
                accum(slots, *a, raw(g.shape().to_vec(), dv))?;
            }
            Op::Pick(v, idx) => {
                let len = self.value(*v).len();
                let mut dv = vec![0.0; len];
                dv[*idx] = g.values()[0];
                accum(slots, *v, raw(vec![len], dv))?;
            }
            Op::Row(m, idx) => {
                let mat = self.value(*m);
                let slot = slots[m.0]
                    .get_or_insert_with(|| Tensor::zeros(mat.shape().to_vec()));
                slot.accumulate_row(*idx, g.values())?;
            }
            Op::Sum(inputs) => {
                for &input in inputs {
                    accum(slots, input, g.clone())?;
                }
            }
        }
        Ok(())
    }
}

// Gradient tensors skip the finiteness guard; an overflow is caught when the
// optimizer feeds them back through checked constructors.
fn raw(shape: Vec<usize>, values: Vec<f64>) -> Tensor {
    Tensor::raw(shape, values)
}

fn raw_scale(t: &Tensor, c: f64) -> Tensor {
    raw(
        t.shape().to_vec(),
        t.values().iter().map(|v| v * c).collect(),
    )
}

fn accum(slots: &mut [Option<Tensor>], id: ValueId, delta: Tensor) -> Result<()> {
    match &mut slots[id.0] {
        Some(t) => t.accumulate(&delta),
        slot @ None => {
            *slot = Some(delta);
            Ok(())
        }
    }
}
