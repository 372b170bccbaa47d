use serde::{Deserialize, Serialize};

use super::backward::{backward, sgd_step};
use super::cache::{CacheMode, GradientCache};
use super::forward::{forward_train, infer_with_policy, MaskScope, MaskState, MaskStats};
use super::layer::Network;
use crate::error::{Error, Result};
use crate::masking::DropPolicy;
use crate::math::{Matrix, Rng, Stream};

/// Inputs (`n x d`) paired with targets (`n x k`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Matrix,
    pub targets: Matrix,
}

impl Dataset {
    pub fn new(inputs: Matrix, targets: Matrix) -> Result<Self> {
        if inputs.rows() != targets.rows() {
            return Err(Error::Domain(format!(
                "{} inputs but {} targets",
                inputs.rows(),
                targets.rows()
            )));
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Rows `indices` gathered into a new dataset.
    pub fn gather(&self, indices: &[usize]) -> Dataset {
        let pick = |m: &Matrix| {
            let mut data = Vec::with_capacity(indices.len() * m.cols());
            for &i in indices {
                data.extend_from_slice(m.row_slice(i));
            }
            Matrix::from_vec(indices.len(), m.cols(), data).expect("gathered rows are finite")
        };
        Dataset {
            inputs: pick(&self.inputs),
            targets: pick(&self.targets),
        }
    }
}

fn default_batch() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub policy: DropPolicy,
    #[serde(default)]
    pub seed: u64,
    /// Epochs at which parameters are snapshotted; `0` means before training.
    #[serde(default)]
    pub record_epochs: Vec<usize>,
    #[serde(default)]
    pub cache_mode: CacheMode,
    #[serde(default)]
    pub mask_scope: MaskScope,
}

impl TrainConfig {
    pub fn new(learning_rate: f64, epochs: usize, batch_size: usize) -> Self {
        Self {
            learning_rate,
            epochs,
            batch_size,
            policy: DropPolicy::no_drop(),
            seed: 0,
            record_epochs: Vec::new(),
            cache_mode: CacheMode::Raw,
            mask_scope: MaskScope::Hidden,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if let Some(e) = self.record_epochs.iter().find(|&&e| e > self.epochs) {
            return Err(Error::Config(format!(
                "record epoch {e} is past the last epoch {}",
                self.epochs
            )));
        }
        self.policy.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean masked mini-batch loss during the epoch (absent for epoch 0).
    pub train_loss: Option<f64>,
    /// Loss of the current parameters on the full training set under the policy's inference rule.
    pub eval_loss: f64,
    /// Mean realized drop rate over masked layers and batches.
    pub mean_drop_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub epoch: usize,
    pub weights: Vec<Matrix>,
    pub biases: Vec<Option<Vec<f64>>>,
    pub eval_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub snapshots: Vec<Snapshot>,
    pub mask_stats: MaskStats,
}

impl History {
    pub fn eval_loss(&self, epoch: usize) -> Option<f64> {
        self.epochs.iter().find(|r| r.epoch == epoch).map(|r| r.eval_loss)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    pub history: History,
}

/// Called after every epoch (and once for epoch 0).
pub struct EpochView<'a> {
    pub epoch: usize,
    pub network: &'a Network,
    pub record: &'a EpochRecord,
}

pub fn train(net: Network, data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_observed(net, data, cfg, |_| Ok(()))
}

/// Mini-batch SGD under the configured drop policy.
///
/// Masks for iteration `t` are generated from gradients cached after
/// iteration `t - 1`. Batches are drawn in an order shuffled each epoch from
/// the `Shuffle` stream of `cfg.seed`, except for full-batch training where
/// the data order is kept.
pub fn train_observed(
    mut net: Network,
    data: &Dataset,
    cfg: &TrainConfig,
    mut observer: impl FnMut(&EpochView<'_>) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Domain("empty training set".into()));
    }
    if data.inputs.cols() != net.input_dim() || data.targets.cols() != net.output_dim() {
        return Err(Error::Shape {
            op: "train data",
            left: (net.input_dim(), net.output_dim()),
            right: (data.inputs.cols(), data.targets.cols()),
        });
    }
    let n = data.len();
    let batch = cfg.batch_size.min(n);
    let mut state = MaskState::new(&net, GradientCache::new(&net, cfg.cache_mode), cfg.seed);
    let mut order_rng = Rng::stream(cfg.seed, Stream::Shuffle, 0);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = History::default();

    let eval = |net: &Network| -> Result<f64> {
        let out = infer_with_policy(net, &data.inputs, &cfg.policy, cfg.mask_scope)?;
        net.loss.value(&out, &data.targets)
    };
    let snapshot = |net: &Network, epoch: usize, eval_loss: f64| Snapshot {
        epoch,
        weights: net.layers().iter().map(|l| l.weights.clone()).collect(),
        biases: net.layers().iter().map(|l| l.bias.clone()).collect(),
        eval_loss,
    };

    let start = EpochRecord {
        epoch: 0,
        train_loss: None,
        eval_loss: eval(&net)?,
        mean_drop_rate: 0.0,
    };
    if cfg.record_epochs.contains(&0) {
        history.snapshots.push(snapshot(&net, 0, start.eval_loss));
    }
    observer(&EpochView {
        epoch: 0,
        network: &net,
        record: &start,
    })?;
    history.epochs.push(start);

    let masked_layers: Vec<usize> = (0..net.n_layers())
        .filter(|&l| cfg.mask_scope.includes(l, net.n_layers()))
        .collect();

    for epoch in 1..=cfg.epochs {
        if batch < n {
            order_rng.shuffle(&mut order);
        }
        let mut loss_sum = 0.0;
        let mut rate_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(batch) {
            let gathered;
            let part = if chunk.len() == n {
                data
            } else {
                gathered = data.gather(chunk);
                &gathered
            };
            let trace = forward_train(&net, &part.inputs, &cfg.policy, cfg.mask_scope, &mut state)?;
            let grads = backward(&net, &trace, &part.targets)?;
            state.cache.refresh(&grads)?;
            sgd_step(&mut net, &grads, cfg.learning_rate)?;
            loss_sum += grads.loss;
            if !masked_layers.is_empty() {
                let rates = trace.drop_rates();
                rate_sum += masked_layers.iter().map(|&l| rates[l]).sum::<f64>() / masked_layers.len() as f64;
            }
            batches += 1;
        }
        let record = EpochRecord {
            epoch,
            train_loss: Some(loss_sum / batches as f64),
            eval_loss: eval(&net)?,
            mean_drop_rate: rate_sum / batches as f64,
        };
        if cfg.record_epochs.contains(&epoch) {
            history.snapshots.push(snapshot(&net, epoch, record.eval_loss));
        }
        observer(&EpochView {
            epoch,
            network: &net,
            record: &record,
        })?;
        history.epochs.push(record);
    }
    history.mask_stats = state.stats;
    Ok(TrainOutcome { network: net, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Activation, DenseLayer, Loss};

    fn linear_data(n: usize, seed: u64) -> Dataset {
        let mut rng = Rng::new(seed);
        let x = Matrix::from_fn(n, 2, |_, _| rng.normal());
        let y = Matrix::from_fn(n, 1, |i, _| 2.0 * x.get(i, 0) - 3.0 * x.get(i, 1) + 0.1 * rng.normal());
        Dataset::new(x, y).unwrap()
    }

    fn linear_net() -> Network {
        let layer = DenseLayer::new(Matrix::row(&[0.0, 0.0]).unwrap(), None, Activation::Identity).unwrap();
        Network::new(vec![layer], Loss::Mse).unwrap()
    }

    #[test]
    fn zero_epochs_rejected() {
        let cfg = TrainConfig::new(0.1, 0, 8);
        assert!(matches!(train(linear_net(), &linear_data(10, 0), &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn zero_learning_rate_keeps_network() {
        let net = linear_net();
        let cfg = TrainConfig::new(0.0, 1, 4);
        let out = train(net.clone(), &linear_data(10, 0), &cfg).unwrap();
        assert_eq!(out.network, net);
    }

    #[test]
    fn least_squares_is_recovered() {
        let data = linear_data(500, 3);
        let cfg = TrainConfig::new(0.05, 60, 25);
        let out = train(linear_net(), &data, &cfg).unwrap();
        // normal equations on the same sample
        let (mut sxx, mut sxy) = ([[0.0; 2]; 2], [0.0; 2]);
        for i in 0..data.len() {
            let x = data.inputs.row_slice(i);
            let y = data.targets.get(i, 0);
            for a in 0..2 {
                sxy[a] += x[a] * y;
                for b in 0..2 {
                    sxx[a][b] += x[a] * x[b];
                }
            }
        }
        let det = sxx[0][0] * sxx[1][1] - sxx[0][1] * sxx[1][0];
        let w0 = (sxx[1][1] * sxy[0] - sxx[0][1] * sxy[1]) / det;
        let w1 = (sxx[0][0] * sxy[1] - sxx[1][0] * sxy[0]) / det;
        let w = &out.network.layers()[0].weights;
        assert!((w.get(0, 0) - w0).abs() < 0.02, "{} vs {w0}", w.get(0, 0));
        assert!((w.get(0, 1) - w1).abs() < 0.02, "{} vs {w1}", w.get(0, 1));
    }

    #[test]
    fn identical_configs_give_identical_histories() {
        let data = linear_data(64, 1);
        let mut cfg = TrainConfig::new(0.05, 5, 16);
        cfg.policy = DropPolicy::ddc(0.2, 0.5);
        cfg.mask_scope = MaskScope::All;
        cfg.record_epochs = vec![0, 2, 5];
        let a = train(linear_net(), &data, &cfg).unwrap();
        let b = train(linear_net(), &data, &cfg).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.network, b.network);
        assert_eq!(a.history.snapshots.len(), 3);
        assert_eq!(a.history.epochs.len(), 6);
    }

    #[test]
    fn record_epoch_past_end_rejected() {
        let mut cfg = TrainConfig::new(0.1, 3, 4);
        cfg.record_epochs = vec![4];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn cached_gradient_is_one_iteration_old() {
        let data = linear_data(32, 9);
        let net = linear_net();
        let policy = DropPolicy::ddc(0.1, 0.5);
        let mut state = MaskState::new(&net, GradientCache::new(&net, CacheMode::Raw), 4);
        let mut net = net;
        let mut previous: Option<Matrix> = None;
        for step in 0..6 {
            let used = state.cache.gradient(0).clone();
            let trace = forward_train(&net, &data.inputs, &policy, MaskScope::All, &mut state).unwrap();
            if step == 0 {
                assert_eq!(used, Matrix::zeros(1, 2));
            } else {
                assert_eq!(state.consumed_staleness(0), Some(1));
                assert_eq!(Some(used), previous);
            }
            let grads = backward(&net, &trace, &data.targets).unwrap();
            state.cache.refresh(&grads).unwrap();
            previous = Some(grads.layers[0].weights.clone());
            sgd_step(&mut net, &grads, 0.05).unwrap();
        }
    }

    #[test]
    fn ema_cache_smooths() {
        let net = linear_net();
        let mut cache = GradientCache::new(&net, CacheMode::Ema);
        let g = |v: f64| super::super::backward::Gradients {
            layers: vec![super::super::backward::LayerGradient {
                weights: Matrix::row(&[v, v]).unwrap(),
                bias: None,
            }],
            loss: 0.0,
        };
        cache.refresh(&g(1.0)).unwrap();
        assert_eq!(cache.gradient(0).get(0, 0), 1.0);
        cache.refresh(&g(0.0)).unwrap();
        assert!((cache.gradient(0).get(0, 0) - 0.9).abs() < 1e-15);
    }
}
