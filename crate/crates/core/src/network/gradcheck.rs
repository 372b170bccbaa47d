//! Central finite-difference check of [`backward`](super::backward).

use super::backward::backward;
use super::forward::{forward_with_masks, LayerMask};
use super::layer::Network;
use crate::error::Result;
use crate::math::Matrix;

/// Relative error `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
}

/// Compares backprop against central differences of the loss for every
/// weight and bias, with `masks` held fixed.
///
/// `floor` keeps the relative error finite for entries whose true gradient
/// is (near) zero.
pub fn check_gradients(net: &Network, x: &Matrix, target: &Matrix, masks: &[LayerMask], eps: f64, floor: f64) -> Result<GradCheck> {
    let loss_at = |n: &Network| -> Result<f64> {
        let trace = forward_with_masks(n, x, masks.to_vec())?;
        n.loss.value(&trace.output, target)
    };
    let trace = forward_with_masks(net, x, masks.to_vec())?;
    let grads = backward(net, &trace, target)?;

    let mut probe = net.clone();
    let mut report = GradCheck {
        max_relative_error: 0.0,
        max_abs_error: 0.0,
        checked: 0,
    };
    let mut record = |analytic: f64, numeric: f64| {
        report.max_relative_error = report.max_relative_error.max(relative_error(analytic, numeric, floor));
        report.max_abs_error = report.max_abs_error.max((analytic - numeric).abs());
        report.checked += 1;
    };

    for l in 0..net.n_layers() {
        for k in 0..net.layers()[l].weights.len() {
            let orig = net.layers()[l].weights.as_slice()[k];
            probe.layers_mut()[l].weights.as_mut_slice()[k] = orig + eps;
            let up = loss_at(&probe)?;
            probe.layers_mut()[l].weights.as_mut_slice()[k] = orig - eps;
            let down = loss_at(&probe)?;
            probe.layers_mut()[l].weights.as_mut_slice()[k] = orig;
            record(grads.layers[l].weights.as_slice()[k], (up - down) / (2.0 * eps));
        }
        let n_bias = net.layers()[l].bias.as_ref().map_or(0, Vec::len);
        for k in 0..n_bias {
            let orig = net.layers()[l].bias.as_ref().unwrap()[k];
            let set = |p: &mut Network, v: f64| p.layers_mut()[l].bias.as_mut().unwrap()[k] = v;
            set(&mut probe, orig + eps);
            let up = loss_at(&probe)?;
            set(&mut probe, orig - eps);
            let down = loss_at(&probe)?;
            set(&mut probe, orig);
            let analytic = grads.layers[l].bias.as_ref().expect("bias gradient")[k];
            record(analytic, (up - down) / (2.0 * eps));
        }
    }
    Ok(report)
}
