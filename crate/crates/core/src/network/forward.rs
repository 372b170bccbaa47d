//! Training-time forward passes.

use log::debug;
use serde::{Deserialize, Serialize};

use super::cache::GradientCache;
use super::layer::{affine, DenseLayer, Network};
use crate::error::{Error, Result};
use crate::masking::{
    dropconnect_mask, dropout_mask, generate_variant_mask, inverted_dropout_scale, keep_scale,
    masked_weights, sample_outcome, standout_keep_prob, DropKind, DropPolicy, MaskOutcome, ScoreSource,
};
use crate::math::{Matrix, Rng, Stream};

/// Resamples allowed when every edge of a layer comes up dropped.
pub const MAX_RESAMPLES: usize = 8;

/// Which layers a drop policy touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskScope {
    /// Every layer, including the output layer.
    All,
    /// Every layer except the output layer.
    #[default]
    Hidden,
}

impl MaskScope {
    pub fn includes(self, layer: usize, n_layers: usize) -> bool {
        match self {
            MaskScope::All => true,
            MaskScope::Hidden => layer + 1 < n_layers,
        }
    }
}

/// The mask applied to one layer for one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerMask {
    None,
    /// Edge mask (1 = dropped); the pre-activation is rescaled by `1 / (1 - drop_rate)`.
    Edge { mask: Matrix, drop_rate: f64 },
    /// Per-unit output multipliers, either one row broadcast over the batch or
    /// one row per example.
    Unit { multipliers: Matrix, drop_rate: f64 },
}

impl LayerMask {
    /// Edge mask with its realized rate computed from the mask.
    pub fn edge(mask: Matrix) -> Result<Self> {
        let drop_rate = crate::masking::realized_drop_rate(&mask)?;
        Ok(LayerMask::Edge { mask, drop_rate })
    }

    pub fn drop_rate(&self) -> f64 {
        match self {
            LayerMask::None => 0.0,
            LayerMask::Edge { drop_rate, .. } | LayerMask::Unit { drop_rate, .. } => *drop_rate,
        }
    }
}

/// What backward needs from one layer of a forward pass.
#[derive(Debug, Clone)]
pub struct LayerRecord {
    pub input: Matrix,
    pub pre_activation: Matrix,
    pub activated: Matrix,
    pub mask: LayerMask,
}

/// Per-layer record of a training forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    pub layers: Vec<LayerRecord>,
    pub output: Matrix,
}

impl Trace {
    pub fn drop_rates(&self) -> Vec<f64> {
        self.layers.iter().map(|r| r.mask.drop_rate()).collect()
    }
}

fn apply_unit(activated: &Matrix, multipliers: &Matrix) -> Result<Matrix> {
    let (b, n) = activated.shape();
    if multipliers.cols() != n || (multipliers.rows() != 1 && multipliers.rows() != b) {
        return Err(Error::Shape {
            op: "unit mask",
            left: activated.shape(),
            right: multipliers.shape(),
        });
    }
    let mut out = activated.clone();
    for (i, row) in out.as_mut_slice().chunks_mut(n).enumerate() {
        let m = multipliers.row_slice(if multipliers.rows() == 1 { 0 } else { i });
        for (v, s) in row.iter_mut().zip(m) {
            *v *= s;
        }
    }
    Ok(out)
}

/// Linear part (without bias) and the bias-added pre-activation for an edge mask.
fn masked_affine(layer: &DenseLayer, x: &Matrix, mask: &LayerMask) -> Result<Matrix> {
    match mask {
        LayerMask::Edge { mask, drop_rate } => {
            let effective = masked_weights(&layer.weights, mask)?;
            affine(x, &effective, keep_scale(*drop_rate)?, layer.bias.as_deref())
        }
        _ => affine(x, &layer.weights, 1.0, layer.bias.as_deref()),
    }
}

fn finish_layer(layer: &DenseLayer, input: Matrix, pre_activation: Matrix, mask: LayerMask) -> Result<(LayerRecord, Matrix)> {
    let activated = pre_activation.map(|z| layer.activation.apply(z));
    let out = match &mask {
        LayerMask::Unit { multipliers, .. } => apply_unit(&activated, multipliers)?,
        _ => activated.clone(),
    };
    Ok((
        LayerRecord {
            input,
            pre_activation,
            activated,
            mask,
        },
        out,
    ))
}

/// Forward pass with caller-supplied masks, one per layer.
pub fn forward_with_masks(net: &Network, x: &Matrix, masks: Vec<LayerMask>) -> Result<Trace> {
    if masks.len() != net.n_layers() {
        return Err(Error::Consistency(format!(
            "{} masks for {} layers",
            masks.len(),
            net.n_layers()
        )));
    }
    let mut h = x.clone();
    let mut records = Vec::with_capacity(masks.len());
    for (layer, mask) in net.layers().iter().zip(masks) {
        if let LayerMask::Edge { mask: m, .. } = &mask {
            if m.shape() != layer.weights.shape() {
                return Err(Error::Shape {
                    op: "edge mask",
                    left: layer.weights.shape(),
                    right: m.shape(),
                });
            }
        }
        let z = masked_affine(layer, &h, &mask)?;
        let (record, out) = finish_layer(layer, h, z, mask)?;
        records.push(record);
        h = out;
    }
    Ok(Trace {
        layers: records,
        output: h,
    })
}

/// Counters for the all-dropped fallback.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskStats {
    pub resamples: u64,
    pub fallbacks: u64,
}

/// Mutable state a training run threads through its forward passes: the
/// gradient cache and one mask stream per layer.
#[derive(Debug, Clone)]
pub struct MaskState {
    pub cache: GradientCache,
    rngs: Vec<Rng>,
    consumed_staleness: Vec<Option<usize>>,
    pub stats: MaskStats,
}

impl MaskState {
    /// Layer `l` draws masks from `derive_seed(seed, Stream::Mask, l)`.
    pub fn new(net: &Network, cache: GradientCache, seed: u64) -> Self {
        Self {
            cache,
            rngs: (0..net.n_layers())
                .map(|l| Rng::stream(seed, Stream::Mask, l as u64))
                .collect(),
            consumed_staleness: vec![None; net.n_layers()],
            stats: MaskStats::default(),
        }
    }

    /// Cache staleness observed the last time `layer` built a gradient-driven mask.
    pub fn consumed_staleness(&self, layer: usize) -> Option<usize> {
        self.consumed_staleness[layer]
    }

    fn edge_outcome(&mut self, l: usize, layer: &DenseLayer, policy: &DropPolicy) -> Result<MaskOutcome> {
        let rng = &mut self.rngs[l];
        let first = match policy.kind.score_rule() {
            Some((source, direction)) => {
                let scores = match source {
                    ScoreSource::Gradient => {
                        let g = self.cache.gradient(l);
                        if g.shape() != layer.weights.shape() {
                            return Err(Error::Shape {
                                op: "cached gradient",
                                left: layer.weights.shape(),
                                right: g.shape(),
                            });
                        }
                        self.consumed_staleness[l] = Some(self.cache.staleness(l));
                        g
                    }
                    ScoreSource::Parameter => &layer.weights,
                };
                generate_variant_mask(scores, direction, policy, rng)?
            }
            None => dropconnect_mask(layer.n_out(), layer.n_in(), policy.p, rng)?,
        };
        if first.drop_rate < 1.0 {
            return Ok(first);
        }
        let probs = first.probs;
        for _ in 0..MAX_RESAMPLES {
            self.stats.resamples += 1;
            let again = sample_outcome(probs.clone(), rng)?;
            if again.drop_rate < 1.0 {
                return Ok(again);
            }
        }
        self.stats.fallbacks += 1;
        debug!("layer {l}: all edges dropped after {MAX_RESAMPLES} resamples, using empty mask");
        Ok(MaskOutcome {
            mask: Matrix::zeros(layer.n_out(), layer.n_in()),
            drop_rate: 0.0,
            probs,
        })
    }
}

/// Training forward pass under `policy`.
///
/// Edge strategies sample one mask per layer for the whole batch (score-driven
/// ones read the gradient cache or the weights); Dropout samples one unit mask
/// per batch; Standout samples per example from its keep probabilities.
/// `NoDrop` reduces to the plain forward pass.
pub fn forward_train(net: &Network, x: &Matrix, policy: &DropPolicy, scope: MaskScope, state: &mut MaskState) -> Result<Trace> {
    policy.validate()?;
    if x.cols() != net.input_dim() {
        return Err(Error::Shape {
            op: "forward_train input",
            left: x.shape(),
            right: (net.input_dim(), 1),
        });
    }
    state.cache.tick();
    let n_layers = net.n_layers();
    let mut h = x.clone();
    let mut records = Vec::with_capacity(n_layers);
    for (l, layer) in net.layers().iter().enumerate() {
        let active = policy.kind != DropKind::NoDrop && scope.includes(l, n_layers);
        let (z, mask) = if active && policy.kind.is_edge_strategy() {
            let outcome = state.edge_outcome(l, layer, policy)?;
            let mask = LayerMask::Edge {
                mask: outcome.mask,
                drop_rate: outcome.drop_rate,
            };
            (masked_affine(layer, &h, &mask)?, mask)
        } else if active && policy.kind == DropKind::Dropout {
            let outcome = dropout_mask(layer.n_out(), policy.p, &mut state.rngs[l])?;
            let multipliers = inverted_dropout_scale(&outcome.mask, policy.p).transpose();
            let z = affine(&h, &layer.weights, 1.0, layer.bias.as_deref())?;
            (
                z,
                LayerMask::Unit {
                    multipliers,
                    drop_rate: outcome.drop_rate,
                },
            )
        } else if active && policy.kind == DropKind::Standout {
            let linear = affine(&h, &layer.weights, 1.0, None)?;
            let rng = &mut state.rngs[l];
            let multipliers = linear.map(|a| {
                if rng.uniform() < standout_keep_prob(a, policy.alpha, policy.beta) {
                    1.0
                } else {
                    0.0
                }
            });
            let drop_rate = 1.0 - multipliers.mean();
            let z = match &layer.bias {
                Some(b) => {
                    let mut z = linear;
                    for row in z.as_mut_slice().chunks_mut(b.len()) {
                        row.iter_mut().zip(b).for_each(|(v, bj)| *v += bj);
                    }
                    z
                }
                None => linear,
            };
            (z, LayerMask::Unit { multipliers, drop_rate })
        } else {
            (masked_affine(layer, &h, &LayerMask::None)?, LayerMask::None)
        };
        let (record, out) = finish_layer(layer, h, z, mask)?;
        records.push(record);
        h = out;
    }
    Ok(Trace {
        layers: records,
        output: h,
    })
}

/// Inference under a policy's test-time rule.
///
/// Every strategy uses the plain unmasked forward pass except Standout, which
/// multiplies each masked unit's output by its keep probability.
pub fn infer_with_policy(net: &Network, x: &Matrix, policy: &DropPolicy, scope: MaskScope) -> Result<Matrix> {
    if policy.kind != DropKind::Standout {
        return net.infer_batch(x);
    }
    let n_layers = net.n_layers();
    let mut h = x.clone();
    for (l, layer) in net.layers().iter().enumerate() {
        let linear = affine(&h, &layer.weights, 1.0, None)?;
        let mut out = linear.clone();
        if let Some(b) = &layer.bias {
            for row in out.as_mut_slice().chunks_mut(b.len()) {
                row.iter_mut().zip(b).for_each(|(v, bj)| *v += bj);
            }
        }
        let mut out = out.map(|z| layer.activation.apply(z));
        if scope.includes(l, n_layers) {
            for (v, a) in out.as_mut_slice().iter_mut().zip(linear.as_slice()) {
                *v *= standout_keep_prob(*a, policy.alpha, policy.beta);
            }
        }
        h = out;
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Activation, CacheMode, Loss};

    fn state(net: &Network, seed: u64) -> MaskState {
        MaskState::new(net, GradientCache::new(net, CacheMode::Raw), seed)
    }

    fn small_net() -> Network {
        Network::mlp(&[5, 4, 3], Activation::Relu, Activation::Identity, true, Loss::Mse, 2).unwrap()
    }

    #[test]
    fn no_drop_equals_inference_bitwise() {
        let net = small_net();
        let x = Matrix::from_fn(6, 5, |i, j| (i as f64 - j as f64) * 0.3);
        let trace = forward_train(&net, &x, &DropPolicy::no_drop(), MaskScope::All, &mut state(&net, 1)).unwrap();
        assert_eq!(trace.output, net.infer_batch(&x).unwrap());
    }

    #[test]
    fn ddc_first_iteration_is_uniform() {
        let net = small_net();
        let x = Matrix::from_fn(2, 5, |i, j| (i + j) as f64);
        let policy = DropPolicy::ddc(0.1, 0.4);
        let mut st = state(&net, 3);
        for l in 0..net.n_layers() {
            let outcome = st.edge_outcome(l, &net.layers()[l], &policy).unwrap();
            assert!(outcome.probs.as_slice().iter().all(|&p| p == 0.1 + 0.5 * 0.4));
        }
        forward_train(&net, &x, &policy, MaskScope::All, &mut st).unwrap();
    }

    #[test]
    fn scalar_layer_hand_arithmetic() {
        let layer = DenseLayer::new(Matrix::row(&[3.0]).unwrap(), None, Activation::Identity).unwrap();
        let net = Network::new(vec![layer], Loss::Mse).unwrap();
        let x = Matrix::row(&[2.0]).unwrap();
        let trace = forward_with_masks(&net, &x, vec![LayerMask::edge(Matrix::zeros(1, 1)).unwrap()]).unwrap();
        assert_eq!(trace.output.as_slice(), &[6.0]);
    }

    #[test]
    fn dropout_masks_whole_units() {
        let net = small_net();
        let x = Matrix::from_fn(8, 5, |i, j| 1.0 + (i * j) as f64);
        let mut st = state(&net, 11);
        let trace = forward_train(&net, &x, &DropPolicy::dropout(1.0), MaskScope::Hidden, &mut st).unwrap();
        // every hidden unit dropped: layer 0 output is zero, so the net output is the output bias
        assert!(trace.layers[1].input.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(trace.layers[0].mask.drop_rate(), 1.0);
        assert!(matches!(trace.layers[1].mask, LayerMask::None));
    }

    #[test]
    fn all_dropped_edge_mask_falls_back() {
        let net = small_net();
        let x = Matrix::from_fn(1, 5, |_, j| j as f64);
        let mut st = state(&net, 0);
        let trace = forward_train(&net, &x, &DropPolicy::drop_connect(1.0), MaskScope::All, &mut st).unwrap();
        assert_eq!(st.stats.fallbacks, 2);
        assert_eq!(st.stats.resamples, 2 * MAX_RESAMPLES as u64);
        assert_eq!(trace.output, net.infer_batch(&x).unwrap());
    }

    #[test]
    fn standout_inference_scales_by_keep_probability() {
        let layer = DenseLayer::new(Matrix::row(&[1.0, 1.0]).unwrap(), None, Activation::Identity).unwrap();
        let net = Network::new(vec![layer], Loss::Mse).unwrap();
        let x = Matrix::row(&[1.0, 1.0]).unwrap();
        let y = infer_with_policy(&net, &x, &DropPolicy::standout(1.0, 0.0), MaskScope::All).unwrap();
        let keep = 1.0 / (1.0 + (-2.0f64).exp());
        assert!((y.get(0, 0) - 2.0 * keep).abs() < 1e-15);
        let y = infer_with_policy(&net, &x, &DropPolicy::ddc(0.2, 0.2), MaskScope::All).unwrap();
        assert_eq!(y.get(0, 0), 2.0);
    }

    #[test]
    fn mask_count_must_match_layers() {
        let net = small_net();
        let x = Matrix::zeros(1, 5);
        assert!(forward_with_masks(&net, &x, vec![LayerMask::None]).is_err());
    }
}
