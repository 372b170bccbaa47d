//! Experiment configuration, repeated seeded runs, `mean ± std` reporting and
//! the symbol rule used to compare each method against the no-drop baseline.

mod calibrate;
mod compare;
mod config;
mod published;
mod run;
mod table;

pub use calibrate::{calibrate_drop_rate, Calibration};
pub use compare::{best_index, compare, compare_oriented, ComparisonSymbol, RunStats, StdConvention};
pub use config::{
    mnist_policies, synthetic_policies, DataSource, ExperimentConfig, ExperimentKind, GridSpec, LabeledPolicy, MnistSource,
};
pub use published::{check_published_symbols, published_cells, PublishedCell, SymbolMismatch, BASELINE_METHOD};
pub use run::{accuracy, load_mnist, run_experiment, ExperimentReport, MnistData, PolicyResult, VERSION};
pub use table::{label_stats_csv, published_csv, write_labeled_rows, LabeledRow};
