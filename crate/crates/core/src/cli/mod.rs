//! Experiment runner behind the `mirrorvt` binary.

pub mod config;
pub mod experiment;
pub mod grid;

pub use config::{ConfigPairs, ExperimentConfig, Scenario};
pub use experiment::{prepare, run_experiment, run_experiment_in, simulate, stream_rng, Prepared, RunReport};
pub use grid::{run_grid, write_standard_grid, GridReport, SummaryRow};
