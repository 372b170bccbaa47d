use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::compare::StdConvention;
use crate::error::{Error, Result};
use crate::masking::{DropKind, DropPolicy};
use crate::network::{MaskScope, TrainConfig};
use crate::synthetic::{SyntheticSpec, SHOWCASE_INITS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    SyntheticTrajectory,
    SyntheticCompare,
    MnistMlp,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::SyntheticTrajectory => "synthetic_trajectory",
            ExperimentKind::SyntheticCompare => "synthetic_compare",
            ExperimentKind::MnistMlp => "mnist_mlp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPolicy {
    pub label: String,
    pub policy: DropPolicy,
}

impl LabeledPolicy {
    pub fn new(label: impl Into<String>, policy: DropPolicy) -> Self {
        Self {
            label: label.into(),
            policy,
        }
    }
}

fn default_subsample() -> usize {
    10_000
}

fn default_true() -> bool {
    true
}

fn default_fractions() -> (f64, f64, f64) {
    (0.8, 0.1, 0.1)
}

/// MNIST files are looked up by their standard names inside `dir`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnistSource {
    pub dir: PathBuf,
    /// Rows drawn from the training file; `0` keeps all of them.
    #[serde(default = "default_subsample")]
    pub subsample: usize,
    #[serde(default = "default_true")]
    pub stratified: bool,
    /// Train/validation/test fractions of the drawn rows.
    #[serde(default = "default_fractions")]
    pub split: (f64, f64, f64),
    /// Score on the official test file rather than the split's test part.
    #[serde(default = "default_true")]
    pub official_test: bool,
    #[serde(default)]
    pub standardize: bool,
    #[serde(default)]
    pub seed: u64,
}

impl MnistSource {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            subsample: default_subsample(),
            stratified: true,
            split: default_fractions(),
            official_test: true,
            standardize: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Mnist(MnistSource),
}

/// Loss-surface grid written next to synthetic trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub w1_range: (f64, f64),
    pub w2_range: (f64, f64),
    pub resolution: usize,
}

fn default_repetitions() -> usize {
    5
}

fn default_hidden() -> Vec<usize> {
    vec![256]
}

fn default_eval_epoch() -> usize {
    19
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub policies: Vec<LabeledPolicy>,
    pub train: TrainConfig,
    pub data: DataSource,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    pub output_dir: PathBuf,
    /// Initial `(w1, w2)` points for the synthetic experiments.
    #[serde(default)]
    pub inits: Vec<(f64, f64)>,
    /// Hidden layer sizes of the MNIST perceptron.
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    /// Epoch whose loss summarizes a synthetic run.
    #[serde(default = "default_eval_epoch")]
    pub eval_epoch: usize,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub std_convention: StdConvention,
}

/// The eight strategies with the rates used for the synthetic regressor.
pub fn synthetic_policies() -> Vec<LabeledPolicy> {
    vec![
        LabeledPolicy::new("no_drop", DropPolicy::no_drop()),
        LabeledPolicy::new("ddc", DropPolicy::ddc(0.1, 0.5)),
        LabeledPolicy::new("dropout", DropPolicy::dropout(0.3)),
        LabeledPolicy::new("dropconnect", DropPolicy::drop_connect(0.3)),
        LabeledPolicy::new("standout", DropPolicy::standout(1.0, 0.0)),
        LabeledPolicy::new("drop_small_parameter", DropPolicy::scored(DropKind::DropSmallParameter, 0.1, 0.5)),
        LabeledPolicy::new("drop_big_parameter", DropPolicy::scored(DropKind::DropBigParameter, 0.1, 0.5)),
        LabeledPolicy::new("drop_big_gradient", DropPolicy::scored(DropKind::DropBigGradient, 0.1, 0.5)),
    ]
}

/// The eight strategies at rates suited to a 784-256-10 perceptron.
pub fn mnist_policies() -> Vec<LabeledPolicy> {
    vec![
        LabeledPolicy::new("no_drop", DropPolicy::no_drop()),
        LabeledPolicy::new("ddc", DropPolicy::ddc(0.1, 0.3)),
        LabeledPolicy::new("dropout", DropPolicy::dropout(0.2)),
        LabeledPolicy::new("dropconnect", DropPolicy::drop_connect(0.2)),
        LabeledPolicy::new("standout", DropPolicy::standout(1.0, 0.0)),
        LabeledPolicy::new("drop_small_parameter", DropPolicy::scored(DropKind::DropSmallParameter, 0.1, 0.3)),
        LabeledPolicy::new("drop_big_parameter", DropPolicy::scored(DropKind::DropBigParameter, 0.1, 0.3)),
        LabeledPolicy::new("drop_big_gradient", DropPolicy::scored(DropKind::DropBigGradient, 0.1, 0.3)),
    ]
}

impl ExperimentConfig {
    /// Built-in defaults for each experiment.
    pub fn default_for(kind: ExperimentKind) -> Self {
        match kind {
            ExperimentKind::SyntheticTrajectory | ExperimentKind::SyntheticCompare => {
                let spec = SyntheticSpec::default();
                let mut train = spec.default_train_config();
                let compare = kind == ExperimentKind::SyntheticCompare;
                if !compare {
                    train.record_epochs = (0..=train.epochs).collect();
                }
                Self {
                    experiment: kind,
                    policies: synthetic_policies(),
                    train,
                    data: DataSource::Synthetic(spec),
                    repetitions: if compare { 20 } else { 1 },
                    output_dir: PathBuf::from(format!("out/{}", kind.name())),
                    inits: SHOWCASE_INITS.to_vec(),
                    hidden: default_hidden(),
                    eval_epoch: default_eval_epoch(),
                    grid: (!compare).then(|| GridSpec {
                        w1_range: (-2.0, 14.0),
                        w2_range: (-12.0, 4.0),
                        resolution: 81,
                    }),
                    std_convention: StdConvention::Sample,
                }
            }
            ExperimentKind::MnistMlp => {
                let mut train = TrainConfig::new(0.1, 10, 64);
                train.mask_scope = MaskScope::Hidden;
                Self {
                    experiment: kind,
                    policies: mnist_policies(),
                    train,
                    data: DataSource::Mnist(MnistSource::new(
                        std::env::var_os("DDC_MNIST_DIR").map_or_else(|| PathBuf::from("data/mnist"), PathBuf::from),
                    )),
                    repetitions: 5,
                    output_dir: PathBuf::from("out/mnist_mlp"),
                    inits: Vec::new(),
                    hidden: default_hidden(),
                    eval_epoch: default_eval_epoch(),
                    grid: None,
                    std_convention: StdConvention::Sample,
                }
            }
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Checks everything that can be checked before training starts.
    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be >= 1".into()));
        }
        if self.policies.is_empty() {
            return Err(Error::Config("at least one policy is required".into()));
        }
        let mut labels = BTreeSet::new();
        for p in &self.policies {
            if p.label.is_empty() || !p.label.chars().all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c)) {
                return Err(Error::Config(format!(
                    "policy label `{}` must be non-empty and use only letters, digits, `_`, `-` or `.`",
                    p.label
                )));
            }
            if !labels.insert(p.label.as_str()) {
                return Err(Error::Config(format!("duplicate policy label `{}`", p.label)));
            }
            p.policy
                .validate()
                .map_err(|e| Error::Config(format!("policy `{}`: {e}", p.label)))?;
        }
        self.train.validate()?;
        match (&self.data, self.experiment) {
            (DataSource::Synthetic(spec), ExperimentKind::SyntheticTrajectory | ExperimentKind::SyntheticCompare) => {
                spec.validate()?;
                if self.inits.is_empty() {
                    return Err(Error::Config("synthetic experiments need at least one init".into()));
                }
                if self.inits.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
                    return Err(Error::Config("inits must be finite".into()));
                }
                if self.experiment == ExperimentKind::SyntheticCompare && self.eval_epoch > self.train.epochs {
                    return Err(Error::Config(format!(
                        "eval_epoch {} is past the last epoch {}",
                        self.eval_epoch, self.train.epochs
                    )));
                }
                if let Some(g) = &self.grid {
                    if g.resolution < 2 || !(g.w1_range.0 < g.w1_range.1) || !(g.w2_range.0 < g.w2_range.1) {
                        return Err(Error::Config("grid needs resolution >= 2 and increasing ranges".into()));
                    }
                }
            }
            (DataSource::Mnist(src), ExperimentKind::MnistMlp) => {
                let (a, b, c) = src.split;
                if [a, b, c].iter().any(|f| !(f.is_finite() && *f >= 0.0)) || a <= 0.0 || a + b + c > 1.0 + 1e-12 {
                    return Err(Error::Config(format!("invalid split fractions {:?}", src.split)));
                }
                if !src.official_test && c <= 0.0 {
                    return Err(Error::Config("no test data: enable official_test or give the split a test fraction".into()));
                }
                if self.hidden.contains(&0) {
                    return Err(Error::Config("hidden layer sizes must be positive".into()));
                }
            }
            _ => {
                return Err(Error::Config(format!(
                    "data source does not match experiment {}",
                    self.experiment.name()
                )))
            }
        }
        Ok(())
    }
}
