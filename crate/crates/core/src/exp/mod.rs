//! Experiment orchestration: declarative configs, deterministic metrics
//! files, convergence detection, plot emission, and schedule verification.

mod config;
mod convergence;
mod gradcheck;
mod metrics;
mod plot;
mod run;
mod sweep;

pub use config::{load_config, ByzConfig, EnvConfig, ExperimentConfig, RunConfig, TrainConfig};
pub use convergence::{detect_convergence, ConvergenceReport, CHAIN_DEFAULT_THRESHOLD, MINIPONG_DEFAULT_THRESHOLD};
pub use gradcheck::{grad_check, GradCheckReport};
pub use metrics::{read_episodes_csv, write_flips_csv, CsvSink};
pub use plot::emit_plot;
pub use run::{run_experiment, run_experiment_routed, RunArtifacts};
pub use sweep::{fraction_to_periods, sweep, SweepRow};
