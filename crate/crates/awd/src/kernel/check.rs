//! Central-difference gradient verification.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Compares analytic gradients against central finite differences.
///
/// `f` evaluates the scalar objective at an arbitrary parameter point and must
/// be deterministic. `analytic` holds one gradient tensor per parameter, shape
/// for shape. Returns the maximum over all coordinates of
/// `|analytic - numeric| / max(1, |analytic|)`.
pub fn finite_diff_check<F>(
    f: F,
    params: &[Tensor],
    analytic: &[Tensor],
    eps: f64,
) -> Result<f64>
where
    F: Fn(&[Tensor]) -> Result<f64>,
{
    if !eps.is_finite() || eps <= 0.0 {
        return Err(Error::Contract(format!(
            "finite_diff_check needs eps > 0, got {eps}"
        )));
    }
    if params.len() != analytic.len() {
        return Err(Error::Contract(format!(
            "{} parameter tensors but {} gradient tensors",
            params.len(),
            analytic.len()
        )));
    }

    let mut worst = 0.0f64;
    for (pi, (param, grad)) in params.iter().zip(analytic).enumerate() {
        param.same_shape(grad)?;
        for i in 0..param.len() {
            let base = param.values()[i];
            let mut probe = params.to_vec();
            probe[pi] = param.with_value(i, base + eps)?;
            let up = f(&probe)?;
            probe[pi] = param.with_value(i, base - eps)?;
            let down = f(&probe)?;
            let numeric = (up - down) / (2.0 * eps);
            let a = grad.values()[i];
            let err = (a - numeric).abs() / f64::max(1.0, a.abs());
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
