//! Fixed-rate DropConnect, Dropout and the Standout approximation.

use super::ddc::sample_outcome;
use super::policy::MaskOutcome;
use crate::error::{Error, Result};
use crate::math::{sigmoid, Matrix, Rng};

fn check_p(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Domain(format!("p = {p} outside [0, 1]")))
    }
}

/// i.i.d. Bernoulli(p) edge mask of shape `rows x cols` (1 = dropped).
pub fn dropconnect_mask(rows: usize, cols: usize, p: f64, rng: &mut Rng) -> Result<MaskOutcome> {
    check_p(p)?;
    sample_outcome(Matrix::filled(rows, cols, p), rng)
}

/// Per-neuron mask as an `n_units x 1` column (1 = dropped).
pub fn dropout_mask(n_units: usize, p: f64, rng: &mut Rng) -> Result<MaskOutcome> {
    check_p(p)?;
    sample_outcome(Matrix::filled(n_units, 1, p), rng)
}

/// Inverted-dropout output multipliers for a sampled unit mask.
///
/// Kept units are scaled by `1 / (1 - p)` using the nominal `p`; dropped units
/// get 0. With `p = 1` every unit is dropped and the output is forced to zero.
pub fn inverted_dropout_scale(mask: &Matrix, p: f64) -> Matrix {
    let keep_scale = if p < 1.0 { 1.0 / (1.0 - p) } else { 0.0 };
    mask.map(|m| if m == 1.0 { 0.0 } else { keep_scale })
}

/// Standout keep probability `sigmoid(alpha * a + beta)` for a unit whose
/// weighted input is `a`.
#[inline]
pub fn standout_keep_prob(activation_input: f64, alpha: f64, beta: f64) -> f64 {
    sigmoid(alpha * activation_input + beta)
}

/// Per-output-unit Standout drop probabilities `1 - sigmoid(alpha * (w_j . x) + beta)`.
///
/// This is the one-line belief-network approximation that reuses the layer's
/// own weights; no separate belief network is learned.
pub fn standout_drop_probs(weights: &Matrix, input: &[f64], alpha: f64, beta: f64) -> Result<Vec<f64>> {
    if weights.cols() != input.len() {
        return Err(Error::Shape {
            op: "standout_drop_probs",
            left: weights.shape(),
            right: (input.len(), 1),
        });
    }
    Ok((0..weights.rows())
        .map(|j| {
            let a: f64 = weights.row_slice(j).iter().zip(input).map(|(w, x)| w * x).sum();
            1.0 - standout_keep_prob(a, alpha, beta)
        })
        .collect())
}
