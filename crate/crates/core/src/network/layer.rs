use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{matmul, sigmoid, Matrix, Rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative at pre-activation `z` whose activated value is `a`.
    #[inline]
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Squared error summed over outputs, averaged over the batch.
    Mse,
    /// Softmax over the network output followed by cross-entropy, averaged over the batch.
    SoftmaxCrossEntropy,
}

impl Loss {
    /// Batch-mean loss and its gradient with respect to the network output.
    pub fn evaluate(self, output: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
        if output.shape() != target.shape() {
            return Err(Error::Shape {
                op: "loss",
                left: output.shape(),
                right: target.shape(),
            });
        }
        let batch = output.rows() as f64;
        let mut grad = Matrix::zeros(output.rows(), output.cols());
        let mut total = 0.0;
        match self {
            Loss::Mse => {
                for (g, (y, t)) in grad
                    .as_mut_slice()
                    .iter_mut()
                    .zip(output.as_slice().iter().zip(target.as_slice()))
                {
                    let d = y - t;
                    total += d * d;
                    *g = 2.0 * d / batch;
                }
            }
            Loss::SoftmaxCrossEntropy => {
                let k = output.cols();
                for i in 0..output.rows() {
                    let logits = output.row_slice(i);
                    let targets = target.row_slice(i);
                    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let sum_exp: f64 = logits.iter().map(|l| (l - max).exp()).sum();
                    let log_z = max + sum_exp.ln();
                    let row = &mut grad.as_mut_slice()[i * k..(i + 1) * k];
                    for j in 0..k {
                        let log_p = logits[j] - log_z;
                        total -= targets[j] * log_p;
                        row[j] = (log_p.exp() - targets[j]) / batch;
                    }
                }
            }
        }
        let loss = total / batch;
        if !loss.is_finite() {
            return Err(Error::NonFinite("loss"));
        }
        Ok((loss, grad))
    }

    pub fn value(self, output: &Matrix, target: &Matrix) -> Result<f64> {
        self.evaluate(output, target).map(|(l, _)| l)
    }
}

/// Fully connected layer: `weights` is `n_out x n_in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Option<Vec<f64>>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Option<Vec<f64>>, activation: Activation) -> Result<Self> {
        if let Some(b) = &bias {
            if b.len() != weights.rows() {
                return Err(Error::Shape {
                    op: "DenseLayer::new",
                    left: weights.shape(),
                    right: (b.len(), 1),
                });
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("bias"));
            }
        }
        weights.check_finite("weights")?;
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    pub fn n_in(&self) -> usize {
        self.weights.cols()
    }

    pub fn n_out(&self) -> usize {
        self.weights.rows()
    }

    /// Glorot-uniform weights in `±sqrt(6 / (n_in + n_out))`, zero bias.
    pub fn glorot(n_in: usize, n_out: usize, activation: Activation, bias: bool, rng: &mut Rng) -> Self {
        let limit = (6.0 / (n_in + n_out) as f64).sqrt();
        let weights = Matrix::from_fn(n_out, n_in, |_, _| rng.uniform_range(-limit, limit));
        Self {
            weights,
            bias: bias.then(|| vec![0.0; n_out]),
            activation,
        }
    }
}

/// `x * W^T * scale + b` for a batch `x` (`batch x n_in`).
pub(crate) fn affine(x: &Matrix, weights: &Matrix, scale: f64, bias: Option<&[f64]>) -> Result<Matrix> {
    if x.cols() != weights.cols() {
        return Err(Error::Shape {
            op: "layer input",
            left: x.shape(),
            right: weights.shape(),
        });
    }
    let mut z = matmul(x, &weights.transpose())?;
    if scale != 1.0 {
        z.as_mut_slice().iter_mut().for_each(|v| *v *= scale);
    }
    if let Some(b) = bias {
        let n_out = b.len();
        for row in z.as_mut_slice().chunks_mut(n_out) {
            for (v, bj) in row.iter_mut().zip(b) {
                *v += bj;
            }
        }
    }
    z.check_finite("affine")?;
    Ok(z)
}

/// Ordered stack of dense layers plus the training loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    layers: Vec<DenseLayer>,
    pub loss: Loss,
}

impl Network {
    pub fn new(layers: Vec<DenseLayer>, loss: Loss) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Domain("network needs at least one layer".into()));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[1].n_in() != pair[0].n_out() {
                return Err(Error::Domain(format!(
                    "layer {} expects {} inputs but layer {} produces {}",
                    l + 1,
                    pair[1].n_in(),
                    l,
                    pair[0].n_out()
                )));
            }
        }
        Ok(Self { layers, loss })
    }

    /// Multilayer perceptron with Glorot-initialized layers.
    ///
    /// `dims = [n_in, h1, ..., n_out]`; every layer but the last uses `hidden`.
    /// Layer `l` draws from the `Init` stream `l` of `seed`.
    pub fn mlp(dims: &[usize], hidden: Activation, output: Activation, bias: bool, loss: Loss, seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Domain(format!("invalid layer sizes {dims:?}")));
        }
        let n_layers = dims.len() - 1;
        let layers = (0..n_layers)
            .map(|l| {
                let act = if l + 1 == n_layers { output } else { hidden };
                let mut rng = Rng::stream(seed, Stream::Init, l as u64);
                DenseLayer::glorot(dims[l], dims[l + 1], act, bias, &mut rng)
            })
            .collect();
        Self::new(layers, loss)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].n_out()
    }

    /// Plain forward pass on a single example: no masks, no rescaling.
    pub fn forward_infer(&self, x: &[f64]) -> Result<Vec<f64>> {
        let batch = Matrix::row(x)?;
        Ok(self.infer_batch(&batch)?.into_vec())
    }

    /// Plain forward pass on a `batch x n_in` matrix.
    pub fn infer_batch(&self, x: &Matrix) -> Result<Matrix> {
        let mut h = x.clone();
        for layer in &self.layers {
            let z = affine(&h, &layer.weights, 1.0, layer.bias.as_deref())?;
            h = z.map(|v| layer.activation.apply(v));
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_layer_passes_input_through() {
        let layer = DenseLayer::new(Matrix::identity(3), None, Activation::Identity).unwrap();
        let net = Network::new(vec![layer], Loss::Mse).unwrap();
        assert_eq!(net.forward_infer(&[1.0, -2.0, 3.5]).unwrap(), vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn relu_clamps() {
        let layer = DenseLayer::new(Matrix::row(&[-1.0]).unwrap(), None, Activation::Relu).unwrap();
        let net = Network::new(vec![layer], Loss::Mse).unwrap();
        assert_eq!(net.forward_infer(&[5.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn two_layer_matches_explicit_composition() {
        let net = Network::mlp(&[4, 3, 2], Activation::Sigmoid, Activation::Identity, true, Loss::Mse, 8).unwrap();
        let x = [0.3, -0.2, 0.9, 1.1];
        let l0 = &net.layers()[0];
        let l1 = &net.layers()[1];
        let h = matmul(&l0.weights, &Matrix::column(&x).unwrap()).unwrap();
        let h: Vec<f64> = h
            .as_slice()
            .iter()
            .zip(l0.bias.as_ref().unwrap())
            .map(|(v, b)| sigmoid(v + b))
            .collect();
        let y = matmul(&l1.weights, &Matrix::column(&h).unwrap()).unwrap();
        let out = net.forward_infer(&x).unwrap();
        for (a, b) in out.iter().zip(y.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn chain_mismatch_rejected() {
        let a = DenseLayer::new(Matrix::zeros(3, 2), None, Activation::Relu).unwrap();
        let b = DenseLayer::new(Matrix::zeros(1, 4), None, Activation::Relu).unwrap();
        assert!(Network::new(vec![a, b], Loss::Mse).is_err());
        assert!(Network::new(vec![], Loss::Mse).is_err());
    }

    #[test]
    fn glorot_bounds() {
        let net = Network::mlp(&[10, 6], Activation::Relu, Activation::Relu, false, Loss::Mse, 1).unwrap();
        let limit = (6.0f64 / 16.0).sqrt();
        assert!(net.layers()[0].weights.max_abs() <= limit);
        assert!(net.layers()[0].bias.is_none());
    }

    #[test]
    fn softmax_cross_entropy_values() {
        let out = Matrix::row(&[0.0, 0.0]).unwrap();
        let t = Matrix::row(&[1.0, 0.0]).unwrap();
        let (l, g) = Loss::SoftmaxCrossEntropy.evaluate(&out, &t).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
        assert_eq!(g.as_slice(), &[-0.5, 0.5]);
        // large logits stay finite
        let out = Matrix::row(&[1000.0, -1000.0]).unwrap();
        assert!(Loss::SoftmaxCrossEntropy.value(&out, &t).unwrap() < 1e-12);
    }

    #[test]
    fn mse_is_batch_mean() {
        let out = Matrix::column(&[1.0, 3.0]).unwrap();
        let t = Matrix::column(&[0.0, 0.0]).unwrap();
        let (l, g) = Loss::Mse.evaluate(&out, &t).unwrap();
        assert_eq!(l, 5.0);
        assert_eq!(g.as_slice(), &[1.0, 3.0]);
    }
}
