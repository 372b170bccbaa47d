use std::fs::File;
use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dynadrop::harness::{
    calibrate_drop_rate, label_stats_csv, load_mnist, published_csv, run_experiment, write_labeled_rows, DataSource,
    ExperimentConfig, ExperimentKind, ExperimentReport, LabeledPolicy, StdConvention,
};
use dynadrop::masking::DropPolicy;
use dynadrop::network::{Activation, Loss, Network};
use dynadrop::synthetic::{generate_synthetic, regressor};
use dynadrop::{Error, Result};

/// Gradient-driven DropConnect experiments.
#[derive(Parser)]
#[command(name = "ddc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Trajectories of the two-weight regressor on its loss surface.
    SyntheticTrajectory(RunArgs),
    /// Mean loss of every policy on the synthetic regressor over repeated seeds.
    SyntheticCompare(RunArgs),
    /// Multilayer perceptron on an MNIST subset.
    Mnist(RunArgs),
    /// Measure the drop rate each policy realizes, without updating weights.
    Calibrate(CalibrateArgs),
    /// Label `mean,std` rows against the first row of their group.
    CompareTable(TableArgs),
    /// Print the built-in config of an experiment as JSON.
    DefaultConfig {
        #[arg(value_enum)]
        experiment: Experiment,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Experiment {
    SyntheticTrajectory,
    SyntheticCompare,
    Mnist,
}

impl From<Experiment> for ExperimentKind {
    fn from(e: Experiment) -> Self {
        match e {
            Experiment::SyntheticTrajectory => ExperimentKind::SyntheticTrajectory,
            Experiment::SyntheticCompare => ExperimentKind::SyntheticCompare,
            Experiment::Mnist => ExperimentKind::MnistMlp,
        }
    }
}

#[derive(Args)]
struct Overrides {
    /// JSON config file; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Policy as `[label=]kind[:key=value,...]`, e.g. `ddc:p=0.1,p_g=0.5`. Repeatable; replaces the config's list.
    #[arg(long = "policy")]
    policies: Vec<String>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Directory holding the four MNIST IDX files.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Use the population (n) denominator for std.
    #[arg(long)]
    population_std: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Which model and data to calibrate on.
    #[arg(long, value_enum, default_value = "synthetic-compare")]
    experiment: Experiment,
    #[arg(long, default_value_t = 50)]
    batches: usize,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct TableArgs {
    /// CSV with columns `method,mean,std` and optionally `group`; `-` reads stdin.
    #[arg(required_unless_present = "published")]
    input: Option<PathBuf>,
    /// Use the built-in published accuracy tables instead of a file.
    #[arg(long, conflicts_with = "input")]
    published: bool,
    /// Smaller means are better (losses).
    #[arg(long)]
    lower_is_better: bool,
}

fn parse_policy(arg: &str) -> Result<LabeledPolicy> {
    let colon = arg.find(':').unwrap_or(arg.len());
    let (label, spec) = match arg.find('=') {
        Some(eq) if eq < colon => (arg[..eq].to_string(), &arg[eq + 1..]),
        _ => (arg.split(':').next().unwrap_or(arg).to_string(), arg),
    };
    Ok(LabeledPolicy::new(label, DropPolicy::parse_shorthand(spec)?))
}

fn build_config(kind: ExperimentKind, o: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = match &o.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default_for(kind),
    };
    if cfg.experiment != kind {
        return Err(Error::Config(format!(
            "config is for `{}`, not `{}`",
            cfg.experiment.name(),
            kind.name()
        )));
    }
    if let Some(seed) = o.seed {
        cfg.train.seed = seed;
        match &mut cfg.data {
            DataSource::Synthetic(spec) => spec.seed = seed,
            DataSource::Mnist(src) => src.seed = seed,
        }
    }
    if let Some(out) = &o.out {
        cfg.output_dir = out.clone();
    }
    if !o.policies.is_empty() {
        cfg.policies = o.policies.iter().map(|p| parse_policy(p)).collect::<Result<_>>()?;
    }
    if let Some(r) = o.repetitions {
        cfg.repetitions = r;
    }
    if let Some(e) = o.epochs {
        cfg.train.epochs = e;
        match cfg.experiment {
            ExperimentKind::SyntheticTrajectory => cfg.train.record_epochs = (0..=e).collect(),
            ExperimentKind::SyntheticCompare => cfg.eval_epoch = cfg.eval_epoch.min(e),
            ExperimentKind::MnistMlp => {}
        }
        cfg.train.record_epochs.retain(|&r| r <= e);
    }
    if let Some(lr) = o.lr {
        cfg.train.learning_rate = lr;
    }
    if let Some(b) = o.batch_size {
        cfg.train.batch_size = b;
    }
    if let Some(dir) = &o.data_dir {
        match &mut cfg.data {
            DataSource::Mnist(src) => src.dir = dir.clone(),
            DataSource::Synthetic(_) => return Err(Error::Config("--data-dir only applies to mnist".into())),
        }
    }
    if o.population_std {
        cfg.std_convention = StdConvention::Population;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_report(report: &ExperimentReport) {
    println!("{} ({}, {})", report.experiment.name(), report.metric, report.config.output_dir.display());
    for r in &report.results {
        let symbol = r.symbol.map_or("", |s| s.glyph());
        let best = if r.best { " *" } else { "" };
        println!("  {:<24} {:>12.4} ± {:<10.4} {}{}", r.label, r.stats.mean, r.stats.std, symbol, best);
    }
}

fn calibrate(args: &CalibrateArgs) -> Result<()> {
    let kind = ExperimentKind::from(args.experiment);
    let cfg = build_config(kind, &args.overrides)?;
    let (net, data) = match &cfg.data {
        DataSource::Synthetic(spec) => {
            let init = cfg.inits.first().copied().unwrap_or((0.0, 0.0));
            (regressor(init)?, generate_synthetic(spec)?)
        }
        DataSource::Mnist(src) => {
            let data = load_mnist(src)?;
            let mut dims = vec![data.train.inputs.cols()];
            dims.extend(&cfg.hidden);
            dims.push(10);
            let net = Network::mlp(&dims, Activation::Relu, Activation::Identity, true, Loss::SoftmaxCrossEntropy, cfg.train.seed)?;
            (net, data.train)
        }
    };
    println!("policy,mean_drop_rate,per_layer");
    for p in &cfg.policies {
        let c = calibrate_drop_rate(&p.policy, &net, &data, args.batches, &cfg.train)?;
        let layers: Vec<String> = c.per_layer.iter().map(|r| format!("{r:.4}")).collect();
        println!("{},{:.4},{}", p.label, c.mean, layers.join(";"));
    }
    Ok(())
}

fn compare_table(args: &TableArgs) -> Result<()> {
    let rows = if args.published {
        label_stats_csv(published_csv().as_bytes(), !args.lower_is_better)?
    } else {
        match args.input.as_deref() {
            Some(p) if p.as_os_str() == "-" => label_stats_csv(io::stdin().lock(), !args.lower_is_better)?,
            Some(p) => label_stats_csv(File::open(p).map_err(|e| Error::Io { path: p.to_path_buf(), source: e })?, !args.lower_is_better)?,
            None => return Err(Error::Config("no input table".into())),
        }
    };
    write_labeled_rows(&rows, io::stdout().lock())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SyntheticTrajectory(a) => print_report(&run_experiment(&build_config(ExperimentKind::SyntheticTrajectory, &a.overrides)?)?),
        Command::SyntheticCompare(a) => print_report(&run_experiment(&build_config(ExperimentKind::SyntheticCompare, &a.overrides)?)?),
        Command::Mnist(a) => print_report(&run_experiment(&build_config(ExperimentKind::MnistMlp, &a.overrides)?)?),
        Command::Calibrate(a) => calibrate(&a)?,
        Command::CompareTable(a) => compare_table(&a)?,
        Command::DefaultConfig { experiment } => println!("{}", ExperimentConfig::default_for(experiment.into()).to_json()?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.category().exit_code() as u8)
        }
    }
}
