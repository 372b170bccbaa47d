use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::compare::{best_index, compare_oriented, ComparisonSymbol, RunStats};
use super::config::{DataSource, ExperimentConfig, ExperimentKind, MnistSource};
use crate::data_io::{split, subsample, LabeledDataset, Standardizer, MNIST_FILES};
use crate::error::{Error, Result};
use crate::masking::DropKind;
use crate::math::Matrix;
use crate::network::{infer_with_policy, train_observed, Activation, Dataset, Loss, MaskScope, MaskStats, Network};
use crate::synthetic::{
    generate_synthetic, loss_grid, repetition_seeds, run_policy_grid, PolicyLossTable, SyntheticRun, SyntheticSpec,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyResult {
    pub label: String,
    pub kind: DropKind,
    pub stats: RunStats,
    /// Against the first `no_drop` policy; absent for that row itself.
    pub symbol: Option<ComparisonSymbol>,
    pub best: bool,
    pub mask_stats: MaskStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub tool: String,
    pub version: String,
    pub experiment: ExperimentKind,
    pub master_seed: u64,
    pub metric: String,
    pub higher_is_better: bool,
    pub results: Vec<PolicyResult>,
    /// Output files relative to the output directory.
    pub files: Vec<String>,
    pub config: ExperimentConfig,
}

impl ExperimentReport {
    pub fn result(&self, label: &str) -> Option<&PolicyResult> {
        self.results.iter().find(|r| r.label == label)
    }
}

struct Writer {
    root: PathBuf,
    files: Vec<String>,
}

impl Writer {
    fn new(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.files.push(rel.to_string());
        Ok(())
    }

    fn csv(&mut self, rel: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(rel, &buf)
    }
}

fn summarize(cfg: &ExperimentConfig, raw: Vec<Vec<f64>>, mask_stats: Vec<MaskStats>, higher_is_better: bool) -> Result<Vec<PolicyResult>> {
    let stats = cfg
        .policies
        .iter()
        .zip(raw)
        .map(|(p, values)| RunStats::from_runs(p.label.clone(), values, cfg.std_convention))
        .collect::<Result<Vec<_>>>()?;
    let baseline = cfg.policies.iter().position(|p| p.policy.kind == DropKind::NoDrop);
    let best = best_index(&stats, higher_is_better);
    Ok(cfg
        .policies
        .iter()
        .zip(stats.iter())
        .zip(mask_stats)
        .enumerate()
        .map(|(i, ((p, s), m))| PolicyResult {
            label: p.label.clone(),
            kind: p.policy.kind,
            symbol: baseline
                .filter(|&b| b != i)
                .map(|b| compare_oriented(&stats[b], s, higher_is_better)),
            best: Some(i) == best,
            stats: s.clone(),
            mask_stats: m,
        })
        .collect())
}

fn summary_csv(results: &[PolicyResult], out: &mut Vec<u8>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["label", "kind", "mean", "std", "n", "symbol", "best"])?;
    for r in results {
        w.write_record([
            r.label.clone(),
            r.kind.name().to_string(),
            r.stats.mean.to_string(),
            r.stats.std.to_string(),
            r.stats.n.to_string(),
            r.symbol.map_or(String::new(), |s| s.glyph().to_string()),
            r.best.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Runs the configured experiment and writes its CSV files and `report.json`
/// into `cfg.output_dir`.
///
/// Repetition `i` of every policy uses seeds `seed + i`. Outputs depend only
/// on the config, so re-running it reproduces every file byte for byte.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    if let DataSource::Mnist(src) = &cfg.data {
        for name in MNIST_FILES {
            let p = src.dir.join(name);
            if !p.is_file() {
                return Err(Error::io(
                    &p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "MNIST file not found"),
                ));
            }
        }
    }
    let mut writer = Writer::new(&cfg.output_dir)?;
    let (metric, higher_is_better, results) = match (&cfg.data, cfg.experiment) {
        (DataSource::Synthetic(spec), kind) if kind != ExperimentKind::MnistMlp => run_synthetic(cfg, spec, &mut writer)?,
        (DataSource::Mnist(src), ExperimentKind::MnistMlp) => run_mnist(cfg, src, &mut writer)?,
        _ => return Err(Error::Config("data source does not match experiment".into())),
    };

    let mut summary = Vec::new();
    summary_csv(&results, &mut summary)?;
    writer.write("summary.csv", &summary)?;
    let mut report = ExperimentReport {
        tool: "dynadrop".into(),
        version: VERSION.into(),
        experiment: cfg.experiment,
        master_seed: cfg.train.seed,
        metric,
        higher_is_better,
        results,
        files: Vec::new(),
        config: cfg.clone(),
    };
    report.files = writer.files.clone();
    report.files.push("report.json".into());
    let json = serde_json::to_string_pretty(&report)?;
    writer.write("report.json", json.as_bytes())?;
    Ok(report)
}

fn run_synthetic(cfg: &ExperimentConfig, spec: &SyntheticSpec, writer: &mut Writer) -> Result<(String, bool, Vec<PolicyResult>)> {
    let policies: Vec<(String, _)> = cfg.policies.iter().map(|p| (p.label.clone(), p.policy.clone())).collect();
    info!(
        "{}: {} policies x {} inits x {} repetitions",
        cfg.experiment.name(),
        policies.len(),
        cfg.inits.len(),
        cfg.repetitions
    );
    let runs: Vec<SyntheticRun> = run_policy_grid(spec, &cfg.inits, &policies, &cfg.train, cfg.repetitions)?;

    for run in &runs {
        let rel = format!(
            "trajectories/{}_init{}_seed{}.csv",
            policies[run.policy].0, run.init, run.seed_index
        );
        writer.csv(&rel, |buf| run.trajectory.write_csv(buf))?;
    }
    if let Some(grid) = &cfg.grid {
        for i in 0..cfg.repetitions {
            let (spec_i, _) = repetition_seeds(spec, &cfg.train, i);
            let data = generate_synthetic(&spec_i)?;
            let g = loss_grid(&data, grid.w1_range, grid.w2_range, grid.resolution)?;
            writer.csv(&format!("grids/grid_seed{i}.csv"), |buf| g.write_csv(buf))?;
        }
    }
    let labels: Vec<String> = policies.iter().map(|(l, _)| l.clone()).collect();
    let table = PolicyLossTable::from_runs(&labels, &runs)?;
    writer.csv("policy_losses.csv", |buf| table.write_csv(buf))?;

    let epoch = match cfg.experiment {
        ExperimentKind::SyntheticCompare => cfg.eval_epoch,
        _ => cfg.train.epochs,
    };
    let mut raw = vec![Vec::new(); policies.len()];
    let mut stats = vec![MaskStats::default(); policies.len()];
    for run in &runs {
        raw[run.policy].push(run.losses[epoch]);
        stats[run.policy].resamples += run.mask_stats.resamples;
        stats[run.policy].fallbacks += run.mask_stats.fallbacks;
    }
    let results = summarize(cfg, raw, stats, false)?;
    Ok((format!("loss_at_epoch_{epoch}"), false, results))
}

/// Train, validation and test parts of an MNIST run.
#[derive(Debug, Clone)]
pub struct MnistData {
    pub train: Dataset,
    pub validation: Option<(Matrix, Vec<usize>)>,
    pub test: (Matrix, Vec<usize>),
}

fn features(d: &LabeledDataset, standardizer: Option<&Standardizer>) -> Result<Matrix> {
    let mut m = d.to_training()?.inputs;
    if let Some(s) = standardizer {
        s.apply(&mut m)?;
    }
    Ok(m)
}

/// Loads and prepares MNIST as described by `src`.
pub fn load_mnist(src: &MnistSource) -> Result<MnistData> {
    let path = |name: &str| src.dir.join(name);
    let full = LabeledDataset::from_idx_files(&path(MNIST_FILES[0]), &path(MNIST_FILES[1]), 10)?;
    let drawn = if src.subsample == 0 || src.subsample >= full.len() {
        full
    } else {
        subsample(&full, src.subsample, src.seed, src.stratified)?
    };
    let (train, val, test) = split(&drawn, src.split, src.seed)?;
    let mut train_set = train.to_training()?;
    let standardizer = src.standardize.then(|| Standardizer::fit(&train_set.inputs));
    if let Some(s) = &standardizer {
        s.apply(&mut train_set.inputs)?;
    }
    let validation = if val.is_empty() {
        None
    } else {
        Some((features(&val, standardizer.as_ref())?, val.labels().to_vec()))
    };
    let test = if src.official_test {
        let t = LabeledDataset::from_idx_files(&path(MNIST_FILES[2]), &path(MNIST_FILES[3]), 10)?;
        (features(&t, standardizer.as_ref())?, t.labels().to_vec())
    } else {
        (features(&test, standardizer.as_ref())?, test.labels().to_vec())
    };
    Ok(MnistData {
        train: train_set,
        validation,
        test,
    })
}

/// Percentage of rows whose arg-max output matches the label.
pub fn accuracy(net: &Network, x: &Matrix, labels: &[usize], policy: &crate::masking::DropPolicy, scope: MaskScope) -> Result<f64> {
    let out = infer_with_policy(net, x, policy, scope)?;
    let k = out.cols();
    let correct = out
        .as_slice()
        .chunks(k)
        .zip(labels)
        .filter(|(row, &label)| {
            let mut best = 0;
            for j in 1..k {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best == label
        })
        .count();
    Ok(100.0 * correct as f64 / labels.len().max(1) as f64)
}

fn run_mnist(cfg: &ExperimentConfig, src: &MnistSource, writer: &mut Writer) -> Result<(String, bool, Vec<PolicyResult>)> {
    let data = load_mnist(src)?;
    let mut dims = vec![data.train.inputs.cols()];
    dims.extend(&cfg.hidden);
    dims.push(10);
    info!("mnist_mlp: {} training rows, layers {:?}", data.train.len(), dims);

    let jobs: Vec<(usize, usize)> = (0..cfg.policies.len())
        .flat_map(|k| (0..cfg.repetitions).map(move |i| (k, i)))
        .collect();
    let outcomes = jobs
        .par_iter()
        .map(|&(k, i)| {
            let labelled = &cfg.policies[k];
            let run = || -> Result<(f64, MaskStats, Vec<u8>)> {
                let mut train = cfg.train.clone();
                train.policy = labelled.policy.clone();
                train.seed = cfg.train.seed.wrapping_add(i as u64);
                let net = Network::mlp(&dims, Activation::Relu, Activation::Identity, true, Loss::SoftmaxCrossEntropy, train.seed)?;
                let mut log = csv::Writer::from_writer(Vec::new());
                log.write_record(["epoch", "train_loss", "eval_loss", "val_accuracy", "mean_drop_rate"])?;
                let outcome = train_observed(net, &data.train, &train, |view| {
                    let val = match &data.validation {
                        Some((x, y)) => accuracy(view.network, x, y, &train.policy, train.mask_scope)?.to_string(),
                        None => String::new(),
                    };
                    log.write_record([
                        view.epoch.to_string(),
                        view.record.train_loss.map_or(String::new(), |l| l.to_string()),
                        view.record.eval_loss.to_string(),
                        val,
                        view.record.mean_drop_rate.to_string(),
                    ])?;
                    Ok(())
                })?;
                let acc = accuracy(&outcome.network, &data.test.0, &data.test.1, &train.policy, train.mask_scope)?;
                let bytes = log.into_inner().map_err(|e| Error::Csv(e.into_error().into()))?;
                Ok((acc, outcome.history.mask_stats, bytes))
            };
            run().map_err(|e| Error::Run {
                label: labelled.label.clone(),
                repetition: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut raw = vec![Vec::new(); cfg.policies.len()];
    let mut stats = vec![MaskStats::default(); cfg.policies.len()];
    for (&(k, i), (acc, m, log)) in jobs.iter().zip(outcomes) {
        raw[k].push(acc);
        stats[k].resamples += m.resamples;
        stats[k].fallbacks += m.fallbacks;
        writer.write(&format!("runs/{}_rep{i}.csv", cfg.policies[k].label), &log)?;
    }
    let results = summarize(cfg, raw, stats, true)?;
    Ok(("test_accuracy_percent".into(), true, results))
}
