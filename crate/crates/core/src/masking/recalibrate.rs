use super::ddc::realized_drop_rate;
use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::network::Activation;

/// `(1 - mask) ⊙ weights`.
pub fn masked_weights(weights: &Matrix, mask: &Matrix) -> Result<Matrix> {
    if weights.shape() != mask.shape() {
        return Err(Error::Shape {
            op: "masked_weights",
            left: weights.shape(),
            right: mask.shape(),
        });
    }
    let mut out = weights.clone();
    for (w, &m) in out.as_mut_slice().iter_mut().zip(mask.as_slice()) {
        if m == 1.0 {
            *w = 0.0;
        }
    }
    Ok(out)
}

/// Output rescale `1 / (1 - r)` for a realized drop rate `r`.
pub fn keep_scale(drop_rate: f64) -> Result<f64> {
    if drop_rate >= 1.0 {
        return Err(Error::DegenerateMask);
    }
    Ok(1.0 / (1.0 - drop_rate))
}

/// One layer of the training-time masked forward pass:
/// `f(((1 - M) ⊙ W) x / (1 - r))` with `r` the realized drop rate of `mask`.
///
/// Inference must use the plain `f(W x)` instead.
pub fn recalibrated_forward(
    weights: &Matrix,
    mask: &Matrix,
    input: &[f64],
    activation: Activation,
) -> Result<Vec<f64>> {
    if weights.cols() != input.len() {
        return Err(Error::Shape {
            op: "recalibrated_forward",
            left: weights.shape(),
            right: (input.len(), 1),
        });
    }
    let r = realized_drop_rate(mask)?;
    let scale = keep_scale(r)?;
    let effective = masked_weights(weights, mask)?;
    let out: Vec<f64> = (0..effective.rows())
        .map(|i| {
            let pre: f64 = effective.row_slice(i).iter().zip(input).map(|(w, x)| w * x).sum();
            activation.apply(pre * scale)
        })
        .collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("recalibrated_forward"));
    }
    Ok(out)
}
