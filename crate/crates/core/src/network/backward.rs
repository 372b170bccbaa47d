use super::forward::{LayerMask, Trace};
use super::layer::Network;
use crate::error::{Error, Result};
use crate::masking::{keep_scale, masked_weights};
use crate::math::{matmul, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Matrix,
    pub bias: Option<Vec<f64>>,
}

/// Gradients of the batch-mean loss for every layer, plus the loss itself.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
    pub loss: f64,
}

fn check_trace(net: &Network, trace: &Trace) -> Result<()> {
    if trace.layers.len() != net.n_layers() {
        return Err(Error::Consistency(format!(
            "trace has {} layers, network has {}",
            trace.layers.len(),
            net.n_layers()
        )));
    }
    for (l, (layer, rec)) in net.layers().iter().zip(&trace.layers).enumerate() {
        let batch = rec.input.rows();
        if rec.input.cols() != layer.n_in() || rec.pre_activation.shape() != (batch, layer.n_out()) {
            return Err(Error::Consistency(format!("layer {l} record does not match its weights")));
        }
        if let LayerMask::Edge { mask, .. } = &rec.mask {
            if mask.shape() != layer.weights.shape() {
                return Err(Error::Consistency(format!("layer {l} edge mask has the wrong shape")));
            }
        }
    }
    Ok(())
}

/// Backpropagates the loss through the exact computation recorded in `trace`.
///
/// Gradients are taken with respect to the effective training-time function,
/// so masked edges get exactly zero gradient and kept edges carry the
/// `1 / (1 - r)` factor.
pub fn backward(net: &Network, trace: &Trace, target: &Matrix) -> Result<Gradients> {
    check_trace(net, trace)?;
    let (loss, mut upstream) = net.loss.evaluate(&trace.output, target)?;
    let mut layers = Vec::with_capacity(net.n_layers());

    for (l, (layer, rec)) in net.layers().iter().zip(&trace.layers).enumerate().rev() {
        // through the unit mask
        if let LayerMask::Unit { multipliers, .. } = &rec.mask {
            let n = upstream.cols();
            let per_example = multipliers.rows() != 1;
            for (i, row) in upstream.as_mut_slice().chunks_mut(n).enumerate() {
                let m = multipliers.row_slice(if per_example { i } else { 0 });
                row.iter_mut().zip(m).for_each(|(g, s)| *g *= s);
            }
        }
        // through the activation
        let mut delta = upstream;
        for ((d, &z), &a) in delta
            .as_mut_slice()
            .iter_mut()
            .zip(rec.pre_activation.as_slice())
            .zip(rec.activated.as_slice())
        {
            *d *= layer.activation.derivative(z, a);
        }

        let bias = layer.bias.as_ref().map(|_| {
            let n = delta.cols();
            let mut db = vec![0.0; n];
            for row in delta.as_slice().chunks(n) {
                db.iter_mut().zip(row).for_each(|(acc, v)| *acc += v);
            }
            db
        });

        let mut dw = matmul(&delta.transpose(), &rec.input)?;
        let (effective, scale) = match &rec.mask {
            LayerMask::Edge { mask, drop_rate } => {
                let scale = keep_scale(*drop_rate)?;
                for (g, &m) in dw.as_mut_slice().iter_mut().zip(mask.as_slice()) {
                    *g = if m == 1.0 { 0.0 } else { *g * scale };
                }
                (Some(masked_weights(&layer.weights, mask)?), scale)
            }
            _ => (None, 1.0),
        };

        upstream = if l > 0 {
            let w = effective.as_ref().unwrap_or(&layer.weights);
            let mut dx = matmul(&delta, w)?;
            if scale != 1.0 {
                dx.as_mut_slice().iter_mut().for_each(|v| *v *= scale);
            }
            dx
        } else {
            Matrix::zeros(1, 1)
        };

        layers.push(LayerGradient { weights: dw, bias });
    }
    layers.reverse();
    Ok(Gradients { layers, loss })
}

/// In-place gradient descent step `W <- W - lr * G` (biases likewise).
///
/// Nothing is modified if any gradient is non-finite or the update would
/// produce a non-finite weight.
pub fn sgd_step(net: &mut Network, grads: &Gradients, lr: f64) -> Result<()> {
    if grads.layers.len() != net.n_layers() {
        return Err(Error::Consistency("gradient count does not match layers".into()));
    }
    let mut updated = Vec::with_capacity(net.n_layers());
    for (layer, g) in net.layers().iter().zip(&grads.layers) {
        if g.weights.shape() != layer.weights.shape() {
            return Err(Error::Shape {
                op: "sgd_step",
                left: layer.weights.shape(),
                right: g.weights.shape(),
            });
        }
        if !g.weights.is_finite() || g.bias.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        let mut w = layer.weights.clone();
        w.as_mut_slice()
            .iter_mut()
            .zip(g.weights.as_slice())
            .for_each(|(w, g)| *w -= lr * g);
        w.check_finite("sgd_step")?;
        let b = match (&layer.bias, &g.bias) {
            (Some(b), Some(gb)) => {
                let nb: Vec<f64> = b.iter().zip(gb).map(|(b, g)| b - lr * g).collect();
                if nb.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("sgd_step"));
                }
                Some(nb)
            }
            (None, _) => None,
            (Some(_), None) => return Err(Error::Consistency("missing bias gradient".into())),
        };
        updated.push((w, b));
    }
    for (layer, (w, b)) in net.layers_mut().iter_mut().zip(updated) {
        layer.weights = w;
        layer.bias = b;
    }
    Ok(())
}
