use crate::error::{Error, Result};
use crate::masking::{DropKind, DropPolicy};
use crate::math::{Rng, Stream};
use crate::network::{backward, forward_train, Dataset, GradientCache, MaskState, Network, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    /// Mean realized drop rate of each layer (0 for layers outside the mask scope).
    pub per_layer: Vec<f64>,
    /// Mean over the masked layers.
    pub mean: f64,
    pub batches: usize,
}

/// Measures the drop rate a policy actually realizes on `net`.
///
/// Runs `n_batches` training forward passes with backward passes feeding the
/// gradient cache, but never updates the weights. Batch size, mask scope,
/// cache mode and seed come from `cfg`; `cfg.policy` is ignored.
pub fn calibrate_drop_rate(policy: &DropPolicy, net: &Network, data: &Dataset, n_batches: usize, cfg: &TrainConfig) -> Result<Calibration> {
    if n_batches == 0 {
        return Err(Error::Config("n_batches must be >= 1".into()));
    }
    if data.is_empty() || cfg.batch_size == 0 {
        return Err(Error::Domain("calibration needs data and a positive batch size".into()));
    }
    policy.validate()?;
    let n = data.len();
    let batch = cfg.batch_size.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = Rng::stream(cfg.seed, Stream::Shuffle, 0);
    rng.shuffle(&mut order);
    let mut state = MaskState::new(net, GradientCache::new(net, cfg.cache_mode), cfg.seed);
    let n_layers = net.n_layers();
    let mut sums = vec![0.0; n_layers];
    let mut cursor = 0;
    for _ in 0..n_batches {
        if cursor + batch > n {
            rng.shuffle(&mut order);
            cursor = 0;
        }
        let part = data.gather(&order[cursor..cursor + batch]);
        cursor += batch;
        let trace = forward_train(net, &part.inputs, policy, cfg.mask_scope, &mut state)?;
        let grads = backward(net, &trace, &part.targets)?;
        state.cache.refresh(&grads)?;
        sums.iter_mut().zip(trace.drop_rates()).for_each(|(s, r)| *s += r);
    }
    let per_layer: Vec<f64> = sums.iter().map(|s| s / n_batches as f64).collect();
    let masked: Vec<usize> = (0..n_layers)
        .filter(|&l| policy.kind != DropKind::NoDrop && cfg.mask_scope.includes(l, n_layers))
        .collect();
    let mean = if masked.is_empty() {
        0.0
    } else {
        masked.iter().map(|&l| per_layer[l]).sum::<f64>() / masked.len() as f64
    };
    Ok(Calibration {
        per_layer,
        mean,
        batches: n_batches,
    })
}
