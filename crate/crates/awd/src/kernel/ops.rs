//! Forward semantics of the graph primitives.
//!
//! These are plain functions over [`Tensor`]s. The tape records the same
//! functions, so eager evaluation and taped evaluation cannot diverge.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Elementwise sum of two same-shaped tensors.
pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    a.same_shape(b)?;
    Tensor::new(
        a.shape().to_vec(),
        a.values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| x + y)
            .collect(),
    )
}

/// Multiply every element by a constant.
pub fn scale(a: &Tensor, c: f64) -> Result<Tensor> {
    a.map(|v| v * c)
}

/// Add a constant to every element.
pub fn add_const(a: &Tensor, c: f64) -> Result<Tensor> {
    a.map(|v| v + c)
}

/// Matrix-vector product: `m` is `[rows, cols]`, `v` is `[cols]`.
pub fn matvec(m: &Tensor, v: &Tensor) -> Result<Tensor> {
    if m.shape().len() != 2 || v.shape().len() != 1 || m.cols() != v.len() {
        return Err(Error::ShapeMismatch {
            left: m.shape().to_vec(),
            right: v.shape().to_vec(),
        });
    }
    let mut out = Vec::with_capacity(m.rows());
    for i in 0..m.rows() {
        let row = m.row_slice(i)?;
        out.push(row.iter().zip(v.values()).map(|(a, b)| a * b).sum());
    }
    Tensor::vector(out)
}

/// Inner product of two equal-length vectors; yields a scalar.
pub fn dot(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape().len() != 1 || b.shape().len() != 1 {
        return Err(Error::Contract(format!(
            "dot expects vectors, got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    a.same_shape(b)?;
    Tensor::scalar(
        a.values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| x * y)
            .sum(),
    )
}

/// Convex mixture `(1 - alpha) * a + alpha * b`, coordinate-wise.
pub fn convex_mix(a: &Tensor, b: &Tensor, alpha: f64) -> Result<Tensor> {
    a.same_shape(b)?;
    Tensor::new(
        a.shape().to_vec(),
        a.values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| (1.0 - alpha) * x + alpha * y)
            .collect(),
    )
}

/// Coordinate-wise mean of a non-empty sequence of same-shaped vectors.
pub fn mean_pool(seq: &[&Tensor]) -> Result<Tensor> {
    let first = seq
        .first()
        .ok_or_else(|| Error::Contract("mean_pool of empty sequence".into()))?;
    let n = seq.len() as f64;
    let mut acc = vec![0.0; first.len()];
    for t in seq {
        first.same_shape(t)?;
        for (a, v) in acc.iter_mut().zip(t.values()) {
            *a += v;
        }
    }
    Tensor::new(first.shape().to_vec(), acc.into_iter().map(|v| v / n).collect())
}

/// Elementwise `max(x, 0)`.
pub fn relu(a: &Tensor) -> Result<Tensor> {
    a.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Elementwise logistic function, computed without overflow on either tail.
pub fn sigmoid(a: &Tensor) -> Result<Tensor> {
    a.map(sigmoid_scalar)
}

pub(crate) fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Log of the softmax of a vector of scores, max-shifted for stability.
pub fn log_softmax(v: &Tensor) -> Result<Tensor> {
    if v.shape().len() != 1 || v.is_empty() {
        return Err(Error::Contract(format!(
            "log_softmax expects a non-empty vector, got {:?}",
            v.shape()
        )));
    }
    let max = v.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max
        + v.values()
            .iter()
            .map(|x| (x - max).exp())
            .sum::<f64>()
            .ln();
    v.map(|x| x - lse)
}

/// Softmax probabilities; shares the shifted formulation of [`log_softmax`].
pub(crate) fn softmax_values(v: &Tensor) -> Vec<f64> {
    let max = v.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.values().iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// One coordinate of a vector, as a scalar.
pub fn pick(v: &Tensor, i: usize) -> Result<Tensor> {
    if v.shape().len() != 1 {
        return Err(Error::Contract(format!(
            "pick expects a vector, got {:?}",
            v.shape()
        )));
    }
    if i >= v.len() {
        return Err(Error::Lookup { id: i, size: v.len() });
    }
    Tensor::scalar(v.values()[i])
}

/// One row of a matrix, as a vector.
pub fn row(m: &Tensor, i: usize) -> Result<Tensor> {
    Tensor::vector(m.row_slice(i)?.to_vec())
}

/// Sum of a non-empty list of same-shaped tensors.
pub fn sum(xs: &[&Tensor]) -> Result<Tensor> {
    let first = xs
        .first()
        .ok_or_else(|| Error::Contract("sum of empty list".into()))?;
    let mut acc = first.values().to_vec();
    for t in &xs[1..] {
        first.same_shape(t)?;
        for (a, v) in acc.iter_mut().zip(t.values()) {
            *a += v;
        }
    }
    Tensor::new(first.shape().to_vec(), acc)
}
