//! Execute one configured experiment and persist its metrics.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::a2c::{Trainer, TrainerSetup, TrainSummary};
use crate::error::Result;
use crate::exp::config::{EnvConfig, ExperimentConfig};
use crate::exp::convergence::{
    detect_convergence, ConvergenceReport, CHAIN_DEFAULT_THRESHOLD, MINIPONG_DEFAULT_THRESHOLD,
};
use crate::exp::metrics::{write_flips_csv, CsvSink};

/// Paths of everything a run writes.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub episodes_csv: PathBuf,
    pub updates_csv: PathBuf,
    pub flips_csv: PathBuf,
    pub report_json: PathBuf,
    pub summary: TrainSummary,
}

#[derive(Serialize)]
struct RunReport<'a> {
    run_id: &'a str,
    code_version: &'a str,
    converged: bool,
    first_converged_update: Option<u64>,
    first_converged_episode: Option<u64>,
    final_ma: f64,
    threshold: f64,
    window: usize,
    episodes: u64,
    updates: u64,
    total_env_steps: u64,
    config: &'a ExperimentConfig,
}

/// Threshold used when the config does not pin one.
pub fn default_threshold(env: &EnvConfig) -> f64 {
    match env {
        EnvConfig::Chain(_) => CHAIN_DEFAULT_THRESHOLD,
        EnvConfig::Minipong(_) => MINIPONG_DEFAULT_THRESHOLD,
    }
}

/// Run an experiment with the byzantine module routed (the normal path).
pub fn run_experiment(config: &ExperimentConfig) -> Result<(RunArtifacts, ConvergenceReport)> {
    run_experiment_routed(config, true)
}

/// Run with the byzantine module either routed or bypassed entirely.
///
/// With an empty byzantine set the two paths must produce bit-identical
/// training trajectories; the bypass exists so that non-interference is
/// testable.
pub fn run_experiment_routed(
    config: &ExperimentConfig,
    route_byzantine: bool,
) -> Result<(RunArtifacts, ConvergenceReport)> {
    config.validate()?;
    let out_dir = Path::new(&config.run.out_dir).to_path_buf();
    std::fs::create_dir_all(&out_dir)?;

    let episodes_csv = out_dir.join("episodes.csv");
    let updates_csv = out_dir.join("updates.csv");
    let flips_csv = out_dir.join("flips.csv");
    let report_json = out_dir.join("report.json");

    let schedule = config.byzantine.to_schedule();
    let mut trainer = Trainer::new(TrainerSetup {
        env: config.env.build()?,
        hp: config.train.to_hyperparams(),
        schedule: route_byzantine.then(|| schedule.clone()),
        master_seed: config.run.master_seed,
        parallel: config.run.parallel,
        fault_dump_dir: Some(out_dir.clone()),
        optimizer: config.train.optimizer,
        separate_networks: config.train.separate_networks,
    })?;

    let mut sink = CsvSink::create(&episodes_csv, &updates_csv)?;
    let outcome = trainer.run(&mut sink);
    sink.flush()?; // fault exits still leave the partial metrics behind
    let summary = outcome?;

    if route_byzantine {
        write_flips_csv(&flips_csv, &trainer.ledger(), &schedule)?;
    }

    let threshold = config
        .run
        .convergence_threshold
        .unwrap_or_else(|| default_threshold(&config.env));
    let report = detect_convergence(&sink.episodes, config.run.convergence_window, threshold);

    let payload = RunReport {
        run_id: &config.run.run_id,
        code_version: env!("CARGO_PKG_VERSION"),
        converged: report.converged,
        first_converged_update: report.first_converged_update,
        first_converged_episode: report.first_converged_episode,
        final_ma: report.final_ma,
        threshold: report.threshold,
        window: report.window,
        episodes: summary.episodes,
        updates: summary.updates,
        total_env_steps: summary.total_env_steps,
        config,
    };
    std::fs::write(&report_json, serde_json::to_string_pretty(&payload).map_err(std::io::Error::other)?)?;

    Ok((
        RunArtifacts { out_dir, episodes_csv, updates_csv, flips_csv, report_json, summary },
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exp::config::ExperimentConfig;

    fn tiny_chain_config(dir: &Path) -> ExperimentConfig {
        let toml = format!(
            r#"
[env]
kind = "chain"

[train]
num_workers = 4
n_steps = 5
total_env_steps = 2000
optimizer = "rmsprop"
lr = 0.01

[run]
master_seed = 1
out_dir = "{}"
run_id = "tiny"
"#,
            dir.display()
        );
        ExperimentConfig::from_toml_str(&toml).unwrap()
    }

    #[test]
    fn rerun_produces_identical_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_chain_config(&dir.path().join("a"));
        let (first, _) = run_experiment(&config).unwrap();
        let episodes_a = std::fs::read(&first.episodes_csv).unwrap();
        let updates_a = std::fs::read(&first.updates_csv).unwrap();
        let flips_a = std::fs::read(&first.flips_csv).unwrap();
        let (second, _) = run_experiment(&config).unwrap();
        assert_eq!(episodes_a, std::fs::read(&second.episodes_csv).unwrap());
        assert_eq!(updates_a, std::fs::read(&second.updates_csv).unwrap());
        assert_eq!(flips_a, std::fs::read(&second.flips_csv).unwrap());
    }

    #[test]
    fn report_json_echoes_config_and_version() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_chain_config(dir.path());
        let (artifacts, _) = run_experiment(&config).unwrap();
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&artifacts.report_json).unwrap()).unwrap();
        assert_eq!(report["run_id"], "tiny");
        assert_eq!(report["config"]["train"]["num_workers"], 4);
        assert!(report["code_version"].is_string());
        assert_eq!(report["threshold"], 0.95);
    }

    #[test]
    fn bypassed_and_routed_clean_runs_are_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = tiny_chain_config(&dir.path().join("routed"));
        config.train.total_env_steps = 1000;
        let (routed, _) = run_experiment_routed(&config, true).unwrap();
        let mut bypass_config = config.clone();
        bypass_config.run.out_dir = dir.path().join("bypassed").display().to_string();
        let (bypassed, _) = run_experiment_routed(&bypass_config, false).unwrap();
        assert_eq!(
            std::fs::read(&routed.episodes_csv).unwrap(),
            std::fs::read(&bypassed.episodes_csv).unwrap()
        );
        assert_eq!(
            std::fs::read(&routed.updates_csv).unwrap(),
            std::fs::read(&bypassed.updates_csv).unwrap()
        );
        assert!(!bypassed.flips_csv.exists());
    }
}
