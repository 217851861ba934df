//! Experiment harness: paired-contrast dataset generation, measurement
//! simulation, grid search on a validation image, test-set reconstruction
//! and reporting. Every stage is deterministic given its seeds.

pub mod config;
pub mod dataset;
pub mod pgm;
pub mod report;
pub mod runner;
pub mod selfcheck;

pub use config::{ExperimentConfig, PriorKind, PriorLatentSource};
pub use dataset::{gen_dataset, Dataset, DatasetSpec, Sample};
pub use report::{aggregate, read_metrics, report, Aggregate, Summary};
pub use runner::{
    grid_search, measure, reconstruct, run_suite, tune_and_run, GridReport, MetricsRow, SuiteOutput, Tuning,
};
pub use selfcheck::{self_check, SelfCheckReport};
