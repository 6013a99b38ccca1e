//! Dense 64-bit float tensors.
//!
//! Values are stored row-major. Construction rejects NaN and infinity so a
//! diverging computation fails loudly instead of propagating garbage.

use crate::error::{Error, Result};
use serde::de::{Deserialize, Deserializer};
use serde::ser::{Serialize, SerializeStruct, Serializer};

/// An immutable dense tensor of `f64` values.
///
/// A scalar has the empty shape `[]`, a vector `[n]`, a matrix `[rows, cols]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, checking that the value count matches the shape and
    /// that every value is finite.
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if values.len() != expected {
            return Err(Error::Contract(format!(
                "tensor of shape {:?} needs {} values, got {}",
                shape,
                expected,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "tensor of shape {shape:?} (value {bad})"
            )));
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            values: vec![0.0; n],
        }
    }

    pub fn scalar(v: f64) -> Result<Self> {
        Self::new(vec![], vec![v])
    }

    pub fn vector(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(vec![n], values)
    }

    pub fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], values)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// True when the tensor holds exactly one value.
    pub fn is_scalar(&self) -> bool {
        self.values.len() == 1
    }

    /// The single value of a scalar tensor.
    pub fn scalar_value(&self) -> Result<f64> {
        if self.is_scalar() {
            Ok(self.values[0])
        } else {
            Err(Error::Contract(format!(
                "expected scalar, got shape {:?}",
                self.shape
            )))
        }
    }

    /// Number of rows of a matrix.
    pub fn rows(&self) -> usize {
        if self.shape.len() == 2 {
            self.shape[0]
        } else {
            0
        }
    }

    /// Number of columns of a matrix.
    pub fn cols(&self) -> usize {
        if self.shape.len() == 2 {
            self.shape[1]
        } else {
            0
        }
    }

    /// A row slice of a rank-2 tensor.
    pub fn row_slice(&self, i: usize) -> Result<&[f64]> {
        if self.shape.len() != 2 {
            return Err(Error::Contract(format!(
                "row access on shape {:?}",
                self.shape
            )));
        }
        let (rows, cols) = (self.shape[0], self.shape[1]);
        if i >= rows {
            return Err(Error::Lookup { id: i, size: rows });
        }
        Ok(&self.values[i * cols..(i + 1) * cols])
    }

    /// Copy with one flat coordinate replaced; used by finite differencing.
    pub fn with_value(&self, flat_idx: usize, v: f64) -> Result<Self> {
        if flat_idx >= self.values.len() {
            return Err(Error::Contract(format!(
                "index {flat_idx} out of range for {} values",
                self.values.len()
            )));
        }
        let mut values = self.values.clone();
        values[flat_idx] = v;
        Self::new(self.shape.clone(), values)
    }

    /// Elementwise map; the result is re-validated.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.shape.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    /// Crate-internal constructor without the finiteness guard. Gradient
    /// accumulation uses it so an overflow surfaces at the next checked
    /// construction (optimizer update) instead of mid-sweep.
    pub(crate) fn raw(shape: Vec<usize>, values: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        Self { shape, values }
    }

    pub(crate) fn same_shape(&self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(())
    }

    /// In-place accumulation used by gradient aggregation. Shapes must match.
    pub(crate) fn accumulate(&mut self, other: &Tensor) -> Result<()> {
        self.same_shape(other)?;
        for (a, b) in self.values.iter_mut().zip(other.values.iter()) {
            *a += b;
        }
        Ok(())
    }

    /// In-place scatter-add into one row of a rank-2 tensor.
    pub(crate) fn accumulate_row(&mut self, i: usize, delta: &[f64]) -> Result<()> {
        let cols = self.cols();
        if delta.len() != cols || self.shape.len() != 2 {
            return Err(Error::ShapeMismatch {
                left: self.shape.clone(),
                right: vec![delta.len()],
            });
        }
        let start = i * cols;
        for (a, b) in self.values[start..start + cols].iter_mut().zip(delta) {
            *a += b;
        }
        Ok(())
    }
}

// Checkpoint format stores a tensor as {"shape": [...], "data": [...]}.
impl Serialize for Tensor {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("Tensor", 2)?;
        s.serialize_field("shape", &self.shape)?;
        s.serialize_field("data", &self.values)?;
        s.end()
    }
}

impl<'de> Deserialize<'de> for Tensor {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(serde::Deserialize)]
        struct Raw {
            shape: Vec<usize>,
            data: Vec<f64>,
        }
        let raw = Raw::deserialize(deserializer)?;
        Tensor::new(raw.shape, raw.data).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_nan_and_inf() {
        assert!(Tensor::vector(vec![0.0, f64::NAN]).is_err());
        assert!(Tensor::vector(vec![f64::INFINITY]).is_err());
        assert!(Tensor::vector(vec![1.0, -2.0]).is_ok());
    }

    #[test]
    fn rejects_length_mismatch() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn scalar_round_trip() {
        let t = Tensor::scalar(1.5).unwrap();
        assert!(t.is_scalar());
        assert_eq!(t.scalar_value().unwrap(), 1.5);
        assert_eq!(t.shape(), &[] as &[usize]);
    }

    #[test]
    fn row_slice_bounds() {
        let m = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(m.row_slice(1).unwrap(), &[4.0, 5.0, 6.0]);
        assert!(m.row_slice(2).is_err());
    }

    #[test]
    fn serde_round_trip_validates() {
        let t = Tensor::matrix(1, 2, vec![0.25, -0.5]).unwrap();
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(json, r#"{"shape":[1,2],"data":[0.25,-0.5]}"#);
        let back: Tensor = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
        // Malformed document: length does not match the shape.
        let bad: std::result::Result<Tensor, _> =
            serde_json::from_str(r#"{"shape":[3],"data":[1.0]}"#);
        assert!(bad.is_err());
    }
}
