//! Opposite-action fault injection with exact fraction accounting.
//!
//! A schedule names the byzantine workers and two periods: a byzantine
//! window opens every `update_period`-th update, and within windows every
//! `step_period`-th active step is flipped to the environment's opposite
//! action. Each byzantine worker therefore executes a wrong action on a
//! `1/(update_period·step_period)` fraction of its steps, which is exactly
//! the per-agent fraction the degradation experiments sweep.
//!
//! Step selection uses a per-worker counter that persists across updates, so
//! the achieved fraction is exact up to edge effects regardless of how the
//! rollout length aligns with the periods. A Bernoulli variant is available
//! behind `stochastic_steps`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::envsim::EnvSpec;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Whether the learner sees the fault.
///
/// `Actuation` (default): the environment executes the flipped action but the
/// learner trains on the action it sampled — a malfunctioning actuator the
/// worker cannot observe. `Observed`: the learner trains on the executed
/// action — corrupted experience reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FaultMode {
    #[default]
    Actuation,
    Observed,
}

/// Which workers misbehave, and how often.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ByzantineSchedule {
    /// Worker ids in the byzantine set B.
    pub byzantine: BTreeSet<usize>,
    /// A byzantine window opens once every u updates.
    pub update_period: u64,
    /// One of every m active steps is flipped.
    pub step_period: u64,
    pub fault_mode: FaultMode,
    /// Replace the deterministic step counter with Bernoulli(1/m) draws.
    pub stochastic_steps: bool,
}

impl ByzantineSchedule {
    /// Schedule with no byzantine workers.
    pub fn clean() -> Self {
        ByzantineSchedule {
            byzantine: BTreeSet::new(),
            update_period: 1,
            step_period: 1,
            fault_mode: FaultMode::Actuation,
            stochastic_steps: false,
        }
    }

    pub fn validate(&self, num_workers: usize) -> Result<()> {
        if self.update_period < 1 || self.step_period < 1 {
            return Err(Error::Config(format!(
                "update_period and step_period must be ≥ 1, got u={} m={}",
                self.update_period, self.step_period
            )));
        }
        if let Some(&w) = self.byzantine.iter().find(|&&w| w >= num_workers) {
            return Err(Error::Config(format!(
                "byzantine worker {w} out of range for {num_workers} workers"
            )));
        }
        Ok(())
    }

    /// Per-agent wrong-action fraction 1/(u·m).
    pub fn per_agent_fraction(&self) -> f64 {
        1.0 / (self.update_period as f64 * self.step_period as f64)
    }
}

/// (per-agent, system-wide) expected wrong-action fractions.
pub fn expected_fractions(schedule: &ByzantineSchedule, num_workers: usize) -> (f64, f64) {
    let per_agent = schedule.per_agent_fraction();
    let system = schedule.byzantine.len() as f64 / num_workers as f64 * per_agent;
    (per_agent, system)
}

/// Flip bookkeeping for one worker. Counters persist across updates.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerFlipState {
    pub total_actions: u64,
    pub flipped_actions: u64,
    pub active_step_counter: u64,
}

impl WorkerFlipState {
    pub fn empirical_fraction(&self) -> f64 {
        if self.total_actions == 0 {
            0.0
        } else {
            self.flipped_actions as f64 / self.total_actions as f64
        }
    }
}

/// Per-worker flip ledger for a whole run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlipLedger {
    workers: Vec<WorkerFlipState>,
}

impl FlipLedger {
    pub fn new(num_workers: usize) -> Self {
        FlipLedger { workers: vec![WorkerFlipState::default(); num_workers] }
    }

    pub fn from_states(workers: Vec<WorkerFlipState>) -> Self {
        FlipLedger { workers }
    }

    pub fn worker(&self, id: usize) -> &WorkerFlipState {
        &self.workers[id]
    }

    pub fn worker_mut(&mut self, id: usize) -> &mut WorkerFlipState {
        &mut self.workers[id]
    }

    pub fn num_workers(&self) -> usize {
        self.workers.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &WorkerFlipState)> {
        self.workers.iter().enumerate()
    }
}

/// Decide whether this worker's current action is flipped.
///
/// Always counts the action in the ledger. For byzantine workers inside an
/// active window the persistent counter advances and every `step_period`-th
/// active step flips (or a Bernoulli draw decides, in stochastic mode). The
/// generator is consulted only in that case, so inactive workers never
/// perturb any value stream.
pub fn should_flip(
    schedule: &ByzantineSchedule,
    state: &mut WorkerFlipState,
    worker: usize,
    update_idx: u64,
    rng: &mut SplitMix64,
) -> bool {
    state.total_actions += 1;
    if !schedule.byzantine.contains(&worker) {
        return false;
    }
    if update_idx % schedule.update_period != 0 {
        return false;
    }
    let flip = if schedule.stochastic_steps {
        state.active_step_counter += 1;
        rng.next_f64() < 1.0 / schedule.step_period as f64
    } else {
        let c = state.active_step_counter;
        state.active_step_counter += 1;
        c % schedule.step_period == 0
    };
    if flip {
        state.flipped_actions += 1;
    }
    flip
}

/// Replace a sampled action with its environment-defined opposite when the
/// flip decision says so.
pub fn apply(env_spec: &EnvSpec, sampled: usize, flip: bool) -> Result<usize> {
    if sampled >= env_spec.action_cardinality {
        return Err(Error::Contract(format!(
            "sampled action {sampled} out of range for cardinality {}",
            env_spec.action_cardinality
        )));
    }
    if flip {
        env_spec.opposite_action(sampled)
    } else {
        Ok(sampled)
    }
}

/// One row of the empirical-fraction audit table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlipAudit {
    pub worker_id: usize,
    pub total_actions: u64,
    pub flipped_actions: u64,
    pub empirical_fraction: f64,
    pub expected_fraction: f64,
}

/// Check the ledger against the schedule: byzantine workers must sit within
/// `tol` of 1/(u·m) and everyone else must have exactly zero flips.
pub fn verify_empirical(
    ledger: &FlipLedger,
    schedule: &ByzantineSchedule,
    tol: f64,
) -> Result<Vec<FlipAudit>> {
    let per_agent = schedule.per_agent_fraction();
    let mut rows = Vec::with_capacity(ledger.num_workers());
    let mut offenders = Vec::new();
    for (id, state) in ledger.iter() {
        let is_byz = schedule.byzantine.contains(&id);
        let expected = if is_byz { per_agent } else { 0.0 };
        let empirical = state.empirical_fraction();
        let ok = if is_byz {
            (empirical - expected).abs() <= tol
        } else {
            state.flipped_actions == 0
        };
        if !ok {
            offenders.push(format!("worker {id}: empirical {empirical:.6} vs expected {expected:.6}"));
        }
        rows.push(FlipAudit {
            worker_id: id,
            total_actions: state.total_actions,
            flipped_actions: state.flipped_actions,
            empirical_fraction: empirical,
            expected_fraction: expected,
        });
    }
    if offenders.is_empty() {
        Ok(rows)
    } else {
        Err(Error::Audit(offenders.join("; ")))
    }
}
