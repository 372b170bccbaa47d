//! Two-feature linear regression used to visualize how each drop strategy
//! moves `(w1, w2)` across the loss surface.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masking::DropPolicy;
use crate::math::{Matrix, Rng, Stream};
use crate::network::{train, Activation, Dataset, DenseLayer, History, Loss, MaskScope, MaskStats, Network, TrainConfig};

/// Epochs always captured by [`run_trajectory`].
pub const SHOWCASE_EPOCHS: [usize; 4] = [0, 7, 13, 19];

/// The two initial points shown for the linear regressor.
pub const SHOWCASE_INITS: [(f64, f64); 2] = [(11.5, -10.0), (9.0, -10.5)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    pub true_w1: f64,
    pub true_w2: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_samples: 10_000,
            true_w1: 1.0,
            true_w2: 1.0,
            noise_std: 1.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 2 {
            return Err(Error::Config(format!("n_samples must be >= 2, got {}", self.n_samples)));
        }
        if !(self.noise_std > 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config(format!("noise_std must be > 0, got {}", self.noise_std)));
        }
        if !self.true_w1.is_finite() || !self.true_w2.is_finite() {
            return Err(Error::Config("true weights must be finite".into()));
        }
        Ok(())
    }

    /// Full-batch training defaults for this dataset: lr 0.05, 20 epochs,
    /// every layer masked.
    pub fn default_train_config(&self) -> TrainConfig {
        let mut cfg = TrainConfig::new(0.05, 20, self.n_samples);
        cfg.mask_scope = MaskScope::All;
        cfg.seed = self.seed;
        cfg
    }
}

/// `y = w1 x1 + w2 x2 + xi` with `x1, x2 ~ N(0, 1)` and `xi ~ N(0, noise_std^2)`.
///
/// Rows are drawn in order `x1, x2, xi` from the `Data` stream of `spec.seed`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let n = spec.n_samples;
    let mut rng = Rng::stream(spec.seed, Stream::Data, 0);
    let mut xs = Vec::with_capacity(2 * n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x1 = rng.normal();
        let x2 = rng.normal();
        let xi = spec.noise_std * rng.normal();
        xs.push(x1);
        xs.push(x2);
        ys.push(spec.true_w1 * x1 + spec.true_w2 * x2 + xi);
    }
    Dataset::new(Matrix::from_vec(n, 2, xs)?, Matrix::from_vec(n, 1, ys)?)
}

fn check_regression_data(data: &Dataset) -> Result<()> {
    if data.inputs.cols() != 2 || data.targets.cols() != 1 {
        return Err(Error::Shape {
            op: "two-feature regression data",
            left: data.inputs.shape(),
            right: data.targets.shape(),
        });
    }
    Ok(())
}

/// Mean squared error of the predictor `w1 x1 + w2 x2`.
pub fn regression_mse(data: &Dataset, w1: f64, w2: f64) -> f64 {
    let x = data.inputs.as_slice();
    let y = data.targets.as_slice();
    let total: f64 = x
        .chunks(2)
        .zip(y)
        .map(|(x, y)| {
            let d = w1 * x[0] + w2 * x[1] - y;
            d * d
        })
        .sum();
    total / data.len() as f64
}

/// Ordinary least-squares fit via the 2x2 normal equations.
pub fn least_squares(data: &Dataset) -> Result<(f64, f64)> {
    check_regression_data(data)?;
    let (mut s11, mut s12, mut s22, mut s1y, mut s2y) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (x, &y) in data.inputs.as_slice().chunks(2).zip(data.targets.as_slice()) {
        s11 += x[0] * x[0];
        s12 += x[0] * x[1];
        s22 += x[1] * x[1];
        s1y += x[0] * y;
        s2y += x[1] * y;
    }
    let det = s11 * s22 - s12 * s12;
    if det.abs() < 1e-12 * (s11 * s22).max(1.0) {
        return Err(Error::Domain("features are collinear".into()));
    }
    Ok(((s22 * s1y - s12 * s2y) / det, (s11 * s2y - s12 * s1y) / det))
}

/// MSE evaluated on a regular grid; `values[i][j]` is the loss at `(w1[i], w2[j])`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrid {
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl LossGrid {
    /// Grid point with the lowest loss.
    pub fn argmin(&self) -> (usize, usize) {
        let mut best = (0, 0);
        for (i, row) in self.values.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v < self.values[best.0][best.1] {
                    best = (i, j);
                }
            }
        }
        best
    }

    /// CSV with header `w1,w2,loss`, one row per grid point.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["w1", "w2", "loss"])?;
        for (i, row) in self.values.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                w.write_record([self.w1[i].to_string(), self.w2[j].to_string(), v.to_string()])?;
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
        .collect()
}

pub fn loss_grid(data: &Dataset, w1_range: (f64, f64), w2_range: (f64, f64), resolution: usize) -> Result<LossGrid> {
    check_regression_data(data)?;
    if resolution < 2 {
        return Err(Error::Domain(format!("resolution must be >= 2, got {resolution}")));
    }
    for (name, (lo, hi)) in [("w1", w1_range), ("w2", w2_range)] {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Domain(format!("{name} range [{lo}, {hi}] is degenerate")));
        }
    }
    let w1 = linspace(w1_range.0, w1_range.1, resolution);
    let w2 = linspace(w2_range.0, w2_range.1, resolution);
    let values = w1
        .par_iter()
        .map(|&a| w2.iter().map(|&b| regression_mse(data, a, b)).collect())
        .collect();
    Ok(LossGrid { w1, w2, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub epoch: usize,
    pub w1: f64,
    pub w2: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    pub fn at(&self, epoch: usize) -> Option<&TrajectoryPoint> {
        self.points.iter().find(|p| p.epoch == epoch)
    }

    /// CSV with header `epoch,w1,w2,loss`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "w1", "w2", "loss"])?;
        for p in &self.points {
            w.write_record([p.epoch.to_string(), p.w1.to_string(), p.w2.to_string(), p.loss.to_string()])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Single identity-activation layer with weights `[[w1, w2]]`, no bias, MSE loss.
pub fn regressor(init: (f64, f64)) -> Result<Network> {
    let layer = DenseLayer::new(Matrix::row(&[init.0, init.1])?, None, Activation::Identity)?;
    Network::new(vec![layer], Loss::Mse)
}

/// Trains the regressor and returns the trajectory plus the full history.
pub fn run_trajectory_with_history(
    spec: &SyntheticSpec,
    init: (f64, f64),
    policy: &DropPolicy,
    cfg: &TrainConfig,
) -> Result<(Trajectory, History)> {
    let data = generate_synthetic(spec)?;
    let mut cfg = cfg.clone();
    cfg.policy = policy.clone();
    cfg.mask_scope = MaskScope::All;
    if let Some(e) = cfg.record_epochs.iter().find(|&&e| e > cfg.epochs) {
        return Err(Error::Config(format!("record epoch {e} is past the last epoch {}", cfg.epochs)));
    }
    let mut epochs: Vec<usize> = SHOWCASE_EPOCHS
        .iter()
        .copied()
        .filter(|&e| e <= cfg.epochs)
        .chain(cfg.record_epochs.iter().copied())
        .collect();
    epochs.sort_unstable();
    epochs.dedup();
    cfg.record_epochs = epochs;

    let outcome = train(regressor(init)?, &data, &cfg)?;
    let points = outcome
        .history
        .snapshots
        .iter()
        .map(|s| TrajectoryPoint {
            epoch: s.epoch,
            w1: s.weights[0].get(0, 0),
            w2: s.weights[0].get(0, 1),
            loss: s.eval_loss,
        })
        .collect();
    Ok((Trajectory { points }, outcome.history))
}

/// Trains the two-parameter regressor from `init` under `policy` and records
/// `(w1, w2, loss)` at epochs 0, 7, 13, 19 and any `cfg.record_epochs`.
///
/// `policy` replaces `cfg.policy`; the layer is always masked.
pub fn run_trajectory(spec: &SyntheticSpec, init: (f64, f64), policy: &DropPolicy, cfg: &TrainConfig) -> Result<Trajectory> {
    run_trajectory_with_history(spec, init, policy, cfg).map(|(t, _)| t)
}

/// Mean full-data loss per epoch for each labelled policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyLossTable {
    pub labels: Vec<String>,
    pub epochs: Vec<usize>,
    /// `mean_loss[k][e]` for policy `k` at `epochs[e]`.
    pub mean_loss: Vec<Vec<f64>>,
    /// Number of runs averaged per cell.
    pub runs: usize,
}

impl PolicyLossTable {
    pub fn loss(&self, label: &str, epoch: usize) -> Option<f64> {
        let k = self.labels.iter().position(|l| l == label)?;
        let e = self.epochs.iter().position(|&x| x == epoch)?;
        Some(self.mean_loss[k][e])
    }

    /// CSV with header `policy,epoch,mean_loss`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["policy", "epoch", "mean_loss"])?;
        for (label, row) in self.labels.iter().zip(&self.mean_loss) {
            for (epoch, v) in self.epochs.iter().zip(row) {
                w.write_record([label.clone(), epoch.to_string(), v.to_string()])?;
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Data and mask seeds for repetition `i`: `spec.seed + i` and `cfg.seed + i`.
pub fn repetition_seeds(spec: &SyntheticSpec, cfg: &TrainConfig, i: usize) -> (SyntheticSpec, TrainConfig) {
    let mut spec = spec.clone();
    let mut cfg = cfg.clone();
    spec.seed = spec.seed.wrapping_add(i as u64);
    cfg.seed = cfg.seed.wrapping_add(i as u64);
    (spec, cfg)
}

/// One `(policy, init, seed)` run of a policy comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRun {
    pub policy: usize,
    pub init: usize,
    pub seed_index: usize,
    pub trajectory: Trajectory,
    /// Full-data loss after each epoch, starting with epoch 0.
    pub losses: Vec<f64>,
    pub mask_stats: MaskStats,
}

/// Runs every `(policy, init, seed)` combination, in that nesting order.
pub fn run_policy_grid(
    spec: &SyntheticSpec,
    inits: &[(f64, f64)],
    policies: &[(String, DropPolicy)],
    cfg: &TrainConfig,
    n_seeds: usize,
) -> Result<Vec<SyntheticRun>> {
    if n_seeds == 0 {
        return Err(Error::Config("n_seeds must be >= 1".into()));
    }
    if inits.is_empty() || policies.is_empty() {
        return Err(Error::Config("need at least one init and one policy".into()));
    }
    let jobs: Vec<(usize, usize, usize)> = (0..policies.len())
        .flat_map(|k| (0..inits.len()).flat_map(move |a| (0..n_seeds).map(move |s| (k, a, s))))
        .collect();
    jobs.par_iter()
        .map(|&(k, a, s)| {
            let (spec, cfg) = repetition_seeds(spec, cfg, s);
            let (trajectory, history) = run_trajectory_with_history(&spec, inits[a], &policies[k].1, &cfg)?;
            Ok(SyntheticRun {
                policy: k,
                init: a,
                seed_index: s,
                trajectory,
                losses: history.epochs.iter().map(|r| r.eval_loss).collect(),
                mask_stats: history.mask_stats,
            })
        })
        .collect()
}

impl PolicyLossTable {
    /// Averages the runs of each policy epoch by epoch.
    pub fn from_runs(labels: &[String], runs: &[SyntheticRun]) -> Result<Self> {
        let n_epochs = runs.first().map_or(0, |r| r.losses.len());
        let mut sums = vec![vec![0.0; n_epochs]; labels.len()];
        let mut counts = vec![0usize; labels.len()];
        for run in runs {
            if run.losses.len() != n_epochs || run.policy >= labels.len() {
                return Err(Error::Consistency("runs have mismatched epoch counts or policies".into()));
            }
            sums[run.policy].iter_mut().zip(&run.losses).for_each(|(s, l)| *s += l);
            counts[run.policy] += 1;
        }
        let runs_per_policy = counts.first().copied().unwrap_or(0);
        if counts.iter().any(|&c| c != runs_per_policy || c == 0) {
            return Err(Error::Consistency("every policy needs the same positive number of runs".into()));
        }
        Ok(Self {
            labels: labels.to_vec(),
            epochs: (0..n_epochs).collect(),
            mean_loss: sums
                .into_iter()
                .map(|row| row.into_iter().map(|s| s / runs_per_policy as f64).collect())
                .collect(),
            runs: runs_per_policy,
        })
    }
}

/// Averages each policy's per-epoch loss over every `(init, seed)` pair.
pub fn compare_policies_on_synthetic(
    spec: &SyntheticSpec,
    inits: &[(f64, f64)],
    policies: &[(String, DropPolicy)],
    cfg: &TrainConfig,
    n_seeds: usize,
) -> Result<PolicyLossTable> {
    let runs = run_policy_grid(spec, inits, policies, cfg, n_seeds)?;
    let labels: Vec<String> = policies.iter().map(|(l, _)| l.clone()).collect();
    PolicyLossTable::from_runs(&labels, &runs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            n_samples: n,
            true_w1: 11.5,
            true_w2: -10.0,
            noise_std: 1.0,
            seed,
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(generate_synthetic(&SyntheticSpec { n_samples: 1, ..spec(1, 0) }).is_err());
        assert!(generate_synthetic(&SyntheticSpec { noise_std: 0.0, ..spec(10, 0) }).is_err());
    }

    #[test]
    fn near_noise_free_residuals_vanish() {
        let s = SyntheticSpec { noise_std: 1e-9, ..spec(500, 1) };
        let data = generate_synthetic(&s).unwrap();
        assert!(regression_mse(&data, 11.5, -10.0) < 1e-15);
    }

    #[test]
    fn least_squares_recovers_truth() {
        let data = generate_synthetic(&spec(10_000, 4)).unwrap();
        let (a, b) = least_squares(&data).unwrap();
        assert!((a - 11.5).abs() < 0.05 && (b + 10.0).abs() < 0.05, "{a} {b}");
    }

    #[test]
    fn seeds_control_samples() {
        let a = generate_synthetic(&spec(50, 1)).unwrap();
        let b = generate_synthetic(&spec(50, 1)).unwrap();
        let c = generate_synthetic(&spec(50, 2)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn residual_variance_matches_noise() {
        let s = SyntheticSpec { noise_std: 1.7, ..spec(20_000, 9) };
        let data = generate_synthetic(&s).unwrap();
        let var = regression_mse(&data, s.true_w1, s.true_w2) / (1.7 * 1.7);
        assert!((0.9..=1.1).contains(&var), "{var}");
    }

    #[test]
    fn grid_minimum_near_least_squares() {
        let data = generate_synthetic(&spec(2_000, 3)).unwrap();
        let (a, b) = least_squares(&data).unwrap();
        let grid = loss_grid(&data, (9.0, 14.0), (-12.5, -7.5), 41).unwrap();
        let (i, j) = grid.argmin();
        let cell = 5.0 / 40.0;
        assert!((grid.w1[i] - a).abs() <= cell && (grid.w2[j] - b).abs() <= cell);
        // loss at the truth is the noise floor
        let truth = regression_mse(&data, 11.5, -10.0);
        assert!((truth - 1.0).abs() < 0.1);
        // symmetric offsets around the optimum give near-symmetric losses
        let (l, r) = (regression_mse(&data, a - 1.0, b), regression_mse(&data, a + 1.0, b));
        assert!((l - r).abs() < 1e-9 * l.max(1.0), "{l} {r}");
    }

    #[test]
    fn grid_validation() {
        let data = generate_synthetic(&spec(10, 0)).unwrap();
        assert!(loss_grid(&data, (0.0, 1.0), (0.0, 1.0), 1).is_err());
        assert!(loss_grid(&data, (1.0, 1.0), (0.0, 1.0), 3).is_err());
    }

    #[test]
    fn grid_csv_header() {
        let data = generate_synthetic(&spec(10, 0)).unwrap();
        let grid = loss_grid(&data, (0.0, 1.0), (0.0, 1.0), 2).unwrap();
        let mut buf = Vec::new();
        grid.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("w1,w2,loss\n"));
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn zero_learning_rate_trajectory_is_constant() {
        let s = spec(200, 0);
        let mut cfg = s.default_train_config();
        cfg.learning_rate = 0.0;
        let t = run_trajectory(&s, (9.0, -10.5), &DropPolicy::ddc(0.1, 0.5), &cfg).unwrap();
        assert_eq!(t.points.iter().map(|p| p.epoch).collect::<Vec<_>>(), vec![0, 7, 13, 19]);
        assert!(t.points.iter().all(|p| p.w1 == 9.0 && p.w2 == -10.5));
    }

    #[test]
    fn no_drop_endpoint_reaches_least_squares() {
        let s = spec(1_000, 5);
        let data = generate_synthetic(&s).unwrap();
        let (a, b) = least_squares(&data).unwrap();
        let mut cfg = s.default_train_config();
        cfg.epochs = 200;
        cfg.learning_rate = 0.1;
        let t = run_trajectory(&s, (0.0, 0.0), &DropPolicy::no_drop(), &cfg).unwrap();
        let end = t.points.last().unwrap();
        assert_eq!(end.epoch, 19);
        let mut cfg2 = cfg.clone();
        cfg2.record_epochs = vec![200];
        let t = run_trajectory(&s, (0.0, 0.0), &DropPolicy::no_drop(), &cfg2).unwrap();
        let end = t.at(200).unwrap();
        assert!((end.w1 - a).abs() < 1e-6 && (end.w2 - b).abs() < 1e-6);
        // nothing beats the noise floor by more than sampling error
        assert!(t.points.iter().all(|p| p.loss >= regression_mse(&data, a, b) - 1e-12));
    }

    #[test]
    fn trajectory_is_reproducible_and_csv_has_header() {
        let s = spec(300, 8);
        let cfg = s.default_train_config();
        let p = DropPolicy::ddc(0.1, 0.5);
        let a = run_trajectory(&s, (11.5, -10.0), &p, &cfg).unwrap();
        let b = run_trajectory(&s, (11.5, -10.0), &p, &cfg).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("epoch,w1,w2,loss\n"));
    }

    #[test]
    fn single_run_table_equals_trajectory() {
        let s = spec(300, 2);
        let cfg = s.default_train_config();
        let p = DropPolicy::ddc(0.1, 0.5);
        let table = compare_policies_on_synthetic(&s, &[(9.0, -10.5)], &[("ddc".into(), p.clone())], &cfg, 1).unwrap();
        let t = run_trajectory(&s, (9.0, -10.5), &p, &cfg).unwrap();
        for point in &t.points {
            assert_eq!(table.loss("ddc", point.epoch), Some(point.loss));
        }
        assert!(compare_policies_on_synthetic(&s, &[(0.0, 0.0)], &[("a".into(), p)], &cfg, 0).is_err());
    }
}
