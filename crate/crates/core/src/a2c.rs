//! Synchronous multi-worker advantage actor-critic.
//!
//! Each update: every worker rolls its own environment forward `n_steps`
//! steps under the shared policy (optionally through the byzantine action
//! filter), the segments meet at a barrier, one-step TD advantages are
//! computed from the stored critic values, and a single optimizer step is
//! applied to the shared parameters. Workers own their environments and
//! generators, so segments may run serially or in parallel with bit-identical
//! results; the merge order is always worker-major.

use rayon::prelude::*;
use serde::Serialize;

use crate::actorcritic::{sample_action, PolicyNet};
use crate::byzantine::{apply, should_flip, ByzantineSchedule, FaultMode, FlipLedger, WorkerFlipState};
use crate::diffmath::{DenseArray, Graph, Optimizer};
use crate::envsim::DeskEnv;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, SplitMix64};

/// Training hyperparameters with the canonical defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Hyperparams {
    pub lr: f64,
    pub gamma: f64,
    pub n_steps: usize,
    pub num_workers: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub total_env_steps: u64,
    pub hidden: usize,
    /// Conventional n-step bootstrapped targets instead of the literal
    /// one-step TD advantage.
    pub n_step_returns: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            lr: 7e-4,
            gamma: 0.99,
            n_steps: 5,
            num_workers: 16,
            value_coef: 0.5,
            entropy_coef: 0.01,
            total_env_steps: 1_000_000,
            hidden: 64,
            n_step_returns: false,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        if self.num_workers < 1 || self.n_steps < 1 {
            return Err(Error::Config("num_workers and n_steps must be ≥ 1".into()));
        }
        if self.hidden < 1 {
            return Err(Error::Config("hidden width must be ≥ 1".into()));
        }
        if !(self.value_coef >= 0.0) || !(self.entropy_coef >= 0.0) {
            return Err(Error::Config("value_coef and entropy_coef must be ≥ 0".into()));
        }
        if self.total_env_steps < 1 {
            return Err(Error::Config("total_env_steps must be ≥ 1".into()));
        }
        Ok(())
    }

    /// Environment steps consumed per update.
    pub fn steps_per_update(&self) -> u64 {
        (self.num_workers * self.n_steps) as u64
    }
}

/// One environment step as the learner stores it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Transition {
    pub obs: Vec<f64>,
    /// Action drawn from the policy.
    pub sampled_action: usize,
    /// Action the environment received (differs only under a byzantine flip).
    pub executed_action: usize,
    pub reward: f64,
    pub terminal: bool,
    /// Critic value V(obs) at collection time.
    pub value: f64,
    /// log p(sampled_action | obs) at collection time.
    pub log_prob: f64,
}

/// All workers' segments for one update, worker-major.
#[derive(Debug, Clone, Serialize)]
pub struct RolloutBatch {
    pub transitions: Vec<Vec<Transition>>,
    /// Bootstrap V(s_{t+n}) per worker, zero when the last transition is
    /// terminal.
    pub next_values: Vec<f64>,
    pub update_index: u64,
}

impl RolloutBatch {
    pub fn total_transitions(&self) -> usize {
        self.transitions.iter().map(|t| t.len()).sum()
    }
}

/// One finished episode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeRecord {
    pub episode_global_idx: u64,
    pub worker_id: usize,
    pub update_idx_at_end: u64,
    pub episode_return: f64,
    pub length: u64,
}

/// Per-update loss terms, as logged to updates.csv.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpdateRecord {
    pub update_idx: u64,
    pub total_env_steps: u64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub grad_norm: f64,
}

/// Receives training metrics as they are produced.
pub trait MetricsSink {
    fn on_episode(&mut self, record: &EpisodeRecord);
    fn on_update(&mut self, record: &UpdateRecord);
}

/// Collects everything in memory; used by tests and the convergence detector.
#[derive(Debug, Default)]
pub struct VecSink {
    pub episodes: Vec<EpisodeRecord>,
    pub updates: Vec<UpdateRecord>,
}

impl MetricsSink for VecSink {
    fn on_episode(&mut self, record: &EpisodeRecord) {
        self.episodes.push(record.clone());
    }
    fn on_update(&mut self, record: &UpdateRecord) {
        self.updates.push(record.clone());
    }
}

/// One rollout worker: an environment plus its private generators and flip
/// counters. No state is shared between workers.
#[derive(Debug, Clone)]
pub struct Worker {
    pub id: usize,
    env: DeskEnv,
    obs: Vec<f64>,
    env_seed: u64,
    episode_idx: u64,
    sample_rng: SplitMix64,
    sched_rng: SplitMix64,
    episode_return: f64,
    episode_len: u64,
    pub flip: WorkerFlipState,
}

impl Worker {
    /// Seed split: the per-worker seed from the config rule is divided into
    /// env / sampling / schedule streams.
    pub fn new(id: usize, mut env: DeskEnv, worker_seed: u64) -> Self {
        let env_seed = derive_seed(worker_seed, 1);
        let obs = env.reset(derive_seed(env_seed, 0));
        Worker {
            id,
            env,
            obs,
            env_seed,
            episode_idx: 0,
            sample_rng: SplitMix64::new(derive_seed(worker_seed, 2)),
            sched_rng: SplitMix64::new(derive_seed(worker_seed, 3)),
            episode_return: 0.0,
            episode_len: 0,
            flip: WorkerFlipState::default(),
        }
    }

    /// Steps taken in the episode currently in progress.
    pub fn in_progress_steps(&self) -> u64 {
        self.episode_len
    }

    fn segment(
        &mut self,
        net: &PolicyNet,
        schedule: Option<&ByzantineSchedule>,
        n_steps: usize,
        update_idx: u64,
    ) -> Result<(Vec<Transition>, f64, Vec<(usize, f64, u64)>)> {
        let env_spec = self.env.spec();
        let mut transitions = Vec::with_capacity(n_steps);
        let mut episode_ends = Vec::new();
        for _ in 0..n_steps {
            let obs_arr = DenseArray::matrix(1, env_spec.obs_dim, self.obs.clone())?;
            let (log_probs, values) = net.forward(&obs_arr)?;
            let sample = sample_action(&log_probs.row(0), values.item(), &mut self.sample_rng);
            let flip = match schedule {
                Some(s) => should_flip(s, &mut self.flip, self.id, update_idx, &mut self.sched_rng),
                None => false,
            };
            let executed = apply(&env_spec, sample.action, flip)?;
            let outcome = self.env.step(executed)?;
            self.episode_return += outcome.reward;
            self.episode_len += 1;
            transitions.push(Transition {
                obs: std::mem::take(&mut self.obs),
                sampled_action: sample.action,
                executed_action: executed,
                reward: outcome.reward,
                terminal: outcome.terminal,
                value: sample.value,
                log_prob: sample.log_prob,
            });
            if outcome.terminal {
                episode_ends.push((self.id, self.episode_return, self.episode_len));
                self.episode_return = 0.0;
                self.episode_len = 0;
                self.episode_idx += 1;
                self.obs = self.env.reset(derive_seed(self.env_seed, self.episode_idx));
            } else {
                self.obs = outcome.observation;
            }
        }
        let next_value = if transitions.last().map(|t| t.terminal).unwrap_or(false) {
            0.0
        } else {
            let obs_arr = DenseArray::matrix(1, env_spec.obs_dim, self.obs.clone())?;
            net.forward(&obs_arr)?.1.item()
        };
        Ok((transitions, next_value, episode_ends))
    }
}

/// Roll every worker forward `n_steps` steps and meet at the barrier.
///
/// Returns the batch plus the episodes that ended during the rollout as
/// (worker_id, return, length), merged in worker order so serial and
/// parallel execution produce identical output.
pub fn collect_rollout(
    workers: &mut [Worker],
    net: &PolicyNet,
    schedule: Option<&ByzantineSchedule>,
    n_steps: usize,
    update_idx: u64,
    parallel: bool,
) -> Result<(RolloutBatch, Vec<(usize, f64, u64)>)> {
    let segments: Vec<Result<_>> = if parallel {
        workers
            .par_iter_mut()
            .map(|w| w.segment(net, schedule, n_steps, update_idx))
            .collect()
    } else {
        workers
            .iter_mut()
            .map(|w| w.segment(net, schedule, n_steps, update_idx))
            .collect()
    };

    let mut transitions = Vec::with_capacity(workers.len());
    let mut next_values = Vec::with_capacity(workers.len());
    let mut episode_ends = Vec::new();
    for segment in segments {
        let (trans, next_value, ends) = segment?;
        transitions.push(trans);
        next_values.push(next_value);
        episode_ends.extend(ends);
    }
    Ok((RolloutBatch { transitions, next_values, update_index: update_idx }, episode_ends))
}

/// One-step TD advantages: A_t = r_t + γ·V(s_{t+1}) − V(s_t), with the
/// bootstrap read from the next stored transition (or the batch edge value)
/// and forced to zero on terminal transitions. No gradient flows through
/// this computation.
pub fn compute_advantages(batch: &RolloutBatch, gamma: f64) -> Vec<Vec<f64>> {
    batch
        .transitions
        .iter()
        .zip(&batch.next_values)
        .map(|(segment, &edge_value)| {
            let n = segment.len();
            (0..n)
                .map(|k| {
                    let t = &segment[k];
                    let next_value = if t.terminal {
                        0.0
                    } else if k + 1 < n {
                        segment[k + 1].value
                    } else {
                        edge_value
                    };
                    t.reward + gamma * next_value - t.value
                })
                .collect()
        })
        .collect()
}

/// n-step bootstrapped returns R_t = r_t + γ·R_{t+1}, restarting at
/// terminals and closing each segment with the batch edge value.
pub fn compute_returns(batch: &RolloutBatch, gamma: f64) -> Vec<Vec<f64>> {
    batch
        .transitions
        .iter()
        .zip(&batch.next_values)
        .map(|(segment, &edge_value)| {
            let mut acc = edge_value;
            let mut returns = vec![0.0; segment.len()];
            for (k, t) in segment.iter().enumerate().rev() {
                if t.terminal {
                    acc = 0.0;
                }
                acc = t.reward + gamma * acc;
                returns[k] = acc;
            }
            returns
        })
        .collect()
}

/// (advantages, value targets) per the configured estimator. For the default
/// one-step estimator the target is r + γ·V(s_{t+1}) and the advantage is
/// target − V(s_t); with `n_step_returns` both come from [`compute_returns`].
pub fn compute_targets(batch: &RolloutBatch, hp: &Hyperparams) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    if hp.n_step_returns {
        let returns = compute_returns(batch, hp.gamma);
        let advantages = batch
            .transitions
            .iter()
            .zip(&returns)
            .map(|(segment, rets)| {
                segment.iter().zip(rets).map(|(t, r)| r - t.value).collect()
            })
            .collect();
        (advantages, returns)
    } else {
        let advantages = compute_advantages(batch, hp.gamma);
        let targets = batch
            .transitions
            .iter()
            .zip(&advantages)
            .map(|(segment, advs)| {
                segment.iter().zip(advs).map(|(t, a)| a + t.value).collect()
            })
            .collect();
        (advantages, targets)
    }
}

/// The assembled scalar loss with its reported components.
pub struct LossGraph {
    pub graph: Graph,
    pub root: crate::diffmath::NodeId,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

/// Surrogate loss −(1/B)·Σ A_t·log p(a_t|s_t) + c_v·mean((target − V)²)
/// − c_e·mean(H). Advantages and targets enter as constants; the trained
/// action is the sampled one under actuation faults and the executed one
/// under observed faults.
pub fn compute_loss(
    batch: &RolloutBatch,
    advantages: &[Vec<f64>],
    targets: &[Vec<f64>],
    net: &PolicyNet,
    hp: &Hyperparams,
    fault_mode: FaultMode,
) -> Result<LossGraph> {
    let total = batch.total_transitions();
    if total == 0 {
        return Err(Error::Contract("empty batch".into()));
    }
    let mut obs = Vec::with_capacity(total * net.obs_dim);
    let mut actions = Vec::with_capacity(total);
    let mut adv_flat = Vec::with_capacity(total);
    let mut target_flat = Vec::with_capacity(total);
    for (w, segment) in batch.transitions.iter().enumerate() {
        for (k, t) in segment.iter().enumerate() {
            obs.extend_from_slice(&t.obs);
            actions.push(match fault_mode {
                FaultMode::Actuation => t.sampled_action,
                FaultMode::Observed => t.executed_action,
            });
            adv_flat.push(advantages[w][k]);
            target_flat.push(targets[w][k]);
        }
    }
    let obs = DenseArray::matrix(total, net.obs_dim, obs)?;

    let mut g = Graph::new();
    let (log_probs, values) = net.forward_graph(&mut g, obs)?;

    // policy term: −(1/B)·Σ A_t·log p(a_t|s_t)
    let picked = g.pick_per_row(log_probs, actions)?;
    let weighted = g.dot_const(picked, DenseArray::vector(adv_flat))?;
    let policy = g.scale(weighted, -1.0 / total as f64)?;

    // value term: mean((target − V)²) with the target constant
    let neg_values = g.scale(values, -1.0)?;
    let target_arr = DenseArray::matrix(total, 1, target_flat)?;
    let residual = g.add_const(neg_values, &target_arr)?;
    let squared = g.mul_elem(residual, residual)?;
    let value_raw = g.mean_all(squared)?;
    let value_scaled = g.scale(value_raw, hp.value_coef)?;

    // entropy bonus: −c_e·mean(H) = (c_e/B)·ΣΣ p·log p
    let probs = g.exp(log_probs)?;
    let p_log_p = g.mul_elem(probs, log_probs)?;
    let p_log_p_sum = g.sum_all(p_log_p)?;
    let entropy_term = g.scale(p_log_p_sum, hp.entropy_coef / total as f64)?;

    let partial = g.add(policy, value_scaled)?;
    let root = g.add(partial, entropy_term)?;

    let policy_loss = g.value(policy).item();
    let value_loss = g.value(value_raw).item();
    let entropy = -g.value(p_log_p_sum).item() / total as f64;
    Ok(LossGraph { graph: g, root, policy_loss, value_loss, entropy })
}

/// Apply one shared update from a complete batch.
///
/// The barrier contract is checked first: every worker's segment must be
/// present and full-length. On success the parameter version has advanced by
/// one and all gradients are zeroed.
pub fn sync_update(
    net: &mut PolicyNet,
    batch: &RolloutBatch,
    hp: &Hyperparams,
    fault_mode: FaultMode,
    optimizer: &mut Optimizer,
) -> Result<UpdateRecord> {
    if batch.transitions.len() != hp.num_workers {
        return Err(Error::Barrier(format!(
            "batch holds {} worker segments, expected {}",
            batch.transitions.len(),
            hp.num_workers
        )));
    }
    if let Some((w, seg)) = batch.transitions.iter().enumerate().find(|(_, s)| s.len() != hp.n_steps) {
        return Err(Error::Barrier(format!(
            "worker {w} segment has {} transitions, expected {}",
            seg.len(),
            hp.n_steps
        )));
    }
    let (advantages, targets) = compute_targets(batch, hp);
    let mut loss = compute_loss(batch, &advantages, &targets, net, hp, fault_mode)?;
    loss.graph.backward(loss.root)?;
    loss.graph.scatter_grads(&mut net.params)?;
    let grad_norm = net.params.grad_norm();
    optimizer.step(&mut net.params, hp.lr)?;
    Ok(UpdateRecord {
        update_idx: batch.update_index,
        total_env_steps: 0, // filled by the trainer
        policy_loss: loss.policy_loss,
        value_loss: loss.value_loss,
        entropy: loss.entropy,
        grad_norm,
    })
}

/// End-of-run accounting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub updates: u64,
    pub episodes: u64,
    pub total_env_steps: u64,
}

/// Everything needed to construct a [`Trainer`].
pub struct TrainerSetup {
    /// Environment template; each worker gets a clone with its own seed.
    pub env: DeskEnv,
    pub hp: Hyperparams,
    /// `None` bypasses the byzantine module entirely; `Some` routes every
    /// action through it (possibly with an empty byzantine set).
    pub schedule: Option<ByzantineSchedule>,
    pub master_seed: u64,
    /// Run worker segments through the thread pool. Output is bit-identical
    /// to serial execution.
    pub parallel: bool,
    /// Where to dump the offending batch if the loss goes non-finite.
    pub fault_dump_dir: Option<std::path::PathBuf>,
    pub optimizer: crate::diffmath::OptimizerKind,
    pub separate_networks: bool,
}

/// Owns the shared network, the workers, and the update loop.
pub struct Trainer {
    net: PolicyNet,
    workers: Vec<Worker>,
    hp: Hyperparams,
    schedule: Option<ByzantineSchedule>,
    optimizer: Optimizer,
    parallel: bool,
    fault_dump_dir: Option<std::path::PathBuf>,
    update_idx: u64,
    total_env_steps: u64,
    episode_counter: u64,
}

/// Seed-splitting rule: worker w trains on master⊕(w+1); the network
/// initializer uses master⊕0x5EED.
pub fn worker_seed(master: u64, worker: usize) -> u64 {
    master ^ (worker as u64 + 1)
}

pub fn init_seed(master: u64) -> u64 {
    master ^ 0x5EED
}

impl Trainer {
    pub fn new(setup: TrainerSetup) -> Result<Self> {
        setup.hp.validate()?;
        if let Some(schedule) = &setup.schedule {
            schedule.validate(setup.hp.num_workers)?;
        }
        let env_spec = setup.env.spec();
        let net = PolicyNet::init(
            env_spec.obs_dim,
            setup.hp.hidden,
            env_spec.action_cardinality,
            init_seed(setup.master_seed),
            setup.separate_networks,
        )?;
        let workers = (0..setup.hp.num_workers)
            .map(|w| Worker::new(w, setup.env.clone(), worker_seed(setup.master_seed, w)))
            .collect();
        Ok(Trainer {
            net,
            workers,
            hp: setup.hp,
            schedule: setup.schedule,
            optimizer: Optimizer::from_kind(setup.optimizer),
            parallel: setup.parallel,
            fault_dump_dir: setup.fault_dump_dir,
            update_idx: 0,
            total_env_steps: 0,
            episode_counter: 0,
        })
    }

    pub fn net(&self) -> &PolicyNet {
        &self.net
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hp
    }

    pub fn fault_mode(&self) -> FaultMode {
        self.schedule.as_ref().map(|s| s.fault_mode).unwrap_or_default()
    }

    /// Snapshot of every worker's flip counters.
    pub fn ledger(&self) -> FlipLedger {
        FlipLedger::from_states(self.workers.iter().map(|w| w.flip.clone()).collect())
    }

    /// Steps inside episodes that have not finished yet.
    pub fn in_progress_steps(&self) -> u64 {
        self.workers.iter().map(|w| w.in_progress_steps()).sum()
    }

    pub fn updates_done(&self) -> u64 {
        self.update_idx
    }

    /// One collect → advantage → loss → update cycle.
    pub fn step_once(&mut self, sink: &mut dyn MetricsSink) -> Result<()> {
        let (batch, episode_ends) = collect_rollout(
            &mut self.workers,
            &self.net,
            self.schedule.as_ref(),
            self.hp.n_steps,
            self.update_idx,
            self.parallel,
        )?;
        self.total_env_steps += self.hp.steps_per_update();

        let fault_mode = self.fault_mode();
        let mut record = match sync_update(&mut self.net, &batch, &self.hp, fault_mode, &mut self.optimizer) {
            Ok(record) => record,
            Err(Error::Fault(message)) => return Err(self.dump_fault_batch(&batch, message)),
            Err(other) => return Err(other),
        };
        record.total_env_steps = self.total_env_steps;

        for (worker_id, episode_return, length) in episode_ends {
            let episode = EpisodeRecord {
                episode_global_idx: self.episode_counter,
                worker_id,
                update_idx_at_end: self.update_idx,
                episode_return,
                length,
            };
            self.episode_counter += 1;
            sink.on_episode(&episode);
        }
        sink.on_update(&record);
        self.update_idx += 1;
        Ok(())
    }

    fn dump_fault_batch(&self, batch: &RolloutBatch, message: String) -> Error {
        if let Some(dir) = &self.fault_dump_dir {
            let path = dir.join(format!("fault_batch_update_{}.json", self.update_idx));
            let dumped = std::fs::create_dir_all(dir)
                .and_then(|_| {
                    std::fs::write(&path, serde_json::to_string_pretty(batch).unwrap_or_default())
                })
                .is_ok();
            if dumped {
                return Error::FaultWithDump { update_idx: self.update_idx, dump_path: path };
            }
        }
        Error::Fault(format!("{message} (update {})", self.update_idx))
    }

    /// Run until the step budget is consumed.
    pub fn run(&mut self, sink: &mut dyn MetricsSink) -> Result<TrainSummary> {
        while self.total_env_steps < self.hp.total_env_steps {
            self.step_once(sink)?;
        }
        Ok(TrainSummary {
            updates: self.update_idx,
            episodes: self.episode_counter,
            total_env_steps: self.total_env_steps,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffmath::OptimizerKind;
    use crate::envsim::{ChainMdp, ChainMdpSpec, MiniPong, MiniPongSpec};
    use std::collections::BTreeSet;

    fn chain_env() -> DeskEnv {
        DeskEnv::Chain(ChainMdp::new(ChainMdpSpec::default()).unwrap())
    }

    fn pong_env() -> DeskEnv {
        DeskEnv::MiniPong(MiniPong::new(MiniPongSpec::default()).unwrap())
    }

    fn setup(env: DeskEnv, hp: Hyperparams) -> TrainerSetup {
        TrainerSetup {
            env,
            hp,
            schedule: None,
            master_seed: 1,
            parallel: false,
            fault_dump_dir: None,
            optimizer: OptimizerKind::Rmsprop,
            separate_networks: false,
        }
    }

    fn make_workers(env: DeskEnv, n: usize, master: u64) -> Vec<Worker> {
        (0..n).map(|w| Worker::new(w, env.clone(), worker_seed(master, w))).collect()
    }

    /// Hand-built single-worker batch for the advantage examples.
    fn batch_of(transitions: Vec<Transition>, edge_value: f64) -> RolloutBatch {
        RolloutBatch { transitions: vec![transitions], next_values: vec![edge_value], update_index: 0 }
    }

    fn transition(reward: f64, terminal: bool, value: f64) -> Transition {
        Transition {
            obs: vec![0.0],
            sampled_action: 0,
            executed_action: 0,
            reward,
            terminal,
            value,
            log_prob: -0.5,
        }
    }

    #[test]
    fn paper_default_batch_is_eighty_transitions() {
        let net = PolicyNet::init(9, 8, 2, 0, false).unwrap();
        let mut workers = make_workers(chain_env(), 16, 3);
        let (batch, _) = collect_rollout(&mut workers, &net, None, 5, 0, false).unwrap();
        assert_eq!(batch.total_transitions(), 80);
        assert_eq!(batch.transitions.len(), 16);
        assert_eq!(batch.next_values.len(), 16);
    }

    #[test]
    fn single_worker_single_step_batch() {
        let net = PolicyNet::init(9, 8, 2, 0, false).unwrap();
        let mut workers = make_workers(chain_env(), 1, 3);
        let (batch, _) = collect_rollout(&mut workers, &net, None, 1, 0, false).unwrap();
        assert_eq!(batch.total_transitions(), 1);
    }

    #[test]
    fn empty_byzantine_set_never_diverges_actions() {
        let net = PolicyNet::init(5, 8, 3, 0, false).unwrap();
        let schedule = ByzantineSchedule::clean();
        let mut workers = make_workers(pong_env(), 4, 9);
        for update in 0..5 {
            let (batch, _) =
                collect_rollout(&mut workers, &net, Some(&schedule), 5, update, false).unwrap();
            for segment in &batch.transitions {
                for t in segment {
                    assert_eq!(t.sampled_action, t.executed_action);
                }
            }
        }
    }

    #[test]
    fn advantage_zero_fixed_point() {
        let batch = batch_of(
            vec![transition(0.0, false, 0.7), transition(0.0, false, 0.7)],
            0.7,
        );
        let adv = compute_advantages(&batch, 1.0);
        assert_eq!(adv[0][0], 0.0);
        assert_eq!(adv[0][1], 0.0);
    }

    #[test]
    fn advantage_forced_arithmetic() {
        let batch = batch_of(
            vec![transition(1.0, false, 0.3), transition(0.0, false, 0.5)],
            0.0,
        );
        let adv = compute_advantages(&batch, 0.99);
        assert!((adv[0][0] - 1.195).abs() <= 1e-12, "{}", adv[0][0]);
    }

    #[test]
    fn terminal_zeroes_the_bootstrap_regardless_of_stored_values() {
        let batch = batch_of(
            vec![transition(-1.0, true, 0.2), transition(0.0, false, 0.9)],
            0.9,
        );
        let adv = compute_advantages(&batch, 0.99);
        assert!((adv[0][0] - (-1.2)).abs() <= 1e-12, "{}", adv[0][0]);
    }

    #[test]
    fn edge_bootstrap_uses_batch_next_value() {
        let batch = batch_of(vec![transition(0.5, false, 0.1)], 2.0);
        let adv = compute_advantages(&batch, 0.5);
        assert!((adv[0][0] - (0.5 + 0.5 * 2.0 - 0.1)).abs() < 1e-15);
    }

    #[test]
    fn n_step_returns_restart_at_terminals() {
        let batch = batch_of(
            vec![transition(1.0, false, 0.0), transition(2.0, true, 0.0), transition(4.0, false, 0.0)],
            8.0,
        );
        let returns = compute_returns(&batch, 0.5);
        // R2 = 4 + 0.5·8 = 8; R1 = 2 (terminal); R0 = 1 + 0.5·2 = 2
        assert_eq!(returns[0], vec![2.0, 2.0, 8.0]);
    }

    #[test]
    fn zero_advantages_and_coefs_give_zero_gradient() {
        let net = PolicyNet::init(9, 8, 2, 5, false).unwrap();
        let mut workers = make_workers(chain_env(), 2, 3);
        let (batch, _) = collect_rollout(&mut workers, &net, None, 3, 0, false).unwrap();
        let hp = Hyperparams { value_coef: 0.0, entropy_coef: 0.0, ..Default::default() };
        let zeros = vec![vec![0.0; 3]; 2];
        let mut loss =
            compute_loss(&batch, &zeros, &zeros, &net, &hp, FaultMode::Actuation).unwrap();
        loss.graph.backward(loss.root).unwrap();
        let mut probe = net.params.clone();
        probe.zero_grads();
        loss.graph.scatter_grads(&mut probe).unwrap();
        assert_eq!(probe.grad_norm(), 0.0);
    }

    #[test]
    fn entropy_term_prefers_high_entropy_policies() {
        // same zero-advantage batch, c_v = 0: the loss reduces to −c_e·H,
        // so the near-uniform initial policy must score lower than a
        // sharpened copy of it
        let net = PolicyNet::init(9, 8, 2, 5, false).unwrap();
        let mut sharp = net.clone();
        {
            // scale the actor head hard to peak the distribution
            let w = sharp.params.get("actor.w").unwrap().value.scale(40.0);
            let flat: Vec<f64> = sharp
                .params
                .iter()
                .map(|(name, p)| if name == "actor.w" { w.clone() } else { p.value.clone() })
                .flat_map(|a| a.data().to_vec())
                .collect();
            sharp.params.set_flat_values(&flat).unwrap();
        }
        let mut workers = make_workers(chain_env(), 2, 3);
        let (batch, _) = collect_rollout(&mut workers, &net, None, 3, 0, false).unwrap();
        let hp = Hyperparams { value_coef: 0.0, entropy_coef: 0.05, ..Default::default() };
        let zeros = vec![vec![0.0; 3]; 2];
        let uniform_loss =
            compute_loss(&batch, &zeros, &zeros, &net, &hp, FaultMode::Actuation).unwrap();
        let sharp_loss =
            compute_loss(&batch, &zeros, &zeros, &sharp, &hp, FaultMode::Actuation).unwrap();
        assert!(uniform_loss.entropy > sharp_loss.entropy);
        let u = uniform_loss.graph.value(uniform_loss.root).item();
        let s = sharp_loss.graph.value(sharp_loss.root).item();
        assert!(u < s, "higher entropy must mean lower loss: {u} vs {s}");
    }

    #[test]
    fn full_loss_gradient_matches_finite_differences() {
        let hp = Hyperparams {
            num_workers: 2,
            n_steps: 2,
            value_coef: 0.5,
            entropy_coef: 0.01,
            ..Default::default()
        };
        let net = PolicyNet::init(9, 6, 2, 11, false).unwrap();
        let mut workers = make_workers(chain_env(), 2, 7);
        let (batch, _) = collect_rollout(&mut workers, &net, None, 2, 0, false).unwrap();
        let (advantages, targets) = compute_targets(&batch, &hp);

        let mut loss =
            compute_loss(&batch, &advantages, &targets, &net, &hp, FaultMode::Actuation).unwrap();
        loss.graph.backward(loss.root).unwrap();
        let mut grads = net.params.clone();
        grads.zero_grads();
        loss.graph.scatter_grads(&mut grads).unwrap();
        let analytic: Vec<f64> =
            grads.iter().flat_map(|(_, p)| p.grad.data().iter().copied()).collect();

        let eval = |flat: &[f64]| -> f64 {
            let mut probe = net.clone();
            probe.params.set_flat_values(flat).unwrap();
            compute_loss(&batch, &advantages, &targets, &probe, &hp, FaultMode::Actuation)
                .unwrap()
                .graph
                .value(loss.root)
                .item()
        };
        // NOTE: eval rebuilds the same graph shape, so the root id is valid
        let base = net.params.flat_values();
        let h = 1e-5;
        let mut max_rel: f64 = 0.0;
        for (i, a) in analytic.iter().enumerate() {
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus[i] += h;
            minus[i] -= h;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-4);
            max_rel = max_rel.max(rel);
        }
        assert!(max_rel < 1e-4, "max rel err {max_rel}");
    }

    #[test]
    fn partial_batch_violates_the_barrier() {
        let hp = Hyperparams { num_workers: 16, n_steps: 5, ..Default::default() };
        let mut net = PolicyNet::init(9, 8, 2, 0, false).unwrap();
        let mut workers = make_workers(chain_env(), 15, 3); // one short
        let (batch, _) = collect_rollout(&mut workers, &net, None, 5, 0, false).unwrap();
        let mut opt = Optimizer::from_kind(OptimizerKind::Sgd);
        let err = sync_update(&mut net, &batch, &hp, FaultMode::Actuation, &mut opt).unwrap_err();
        assert!(matches!(err, Error::Barrier(_)), "{err}");
    }

    #[test]
    fn zero_lr_leaves_parameters_unchanged() {
        // lr = 0 is rejected at config level but the optimizer contract is
        // still identity-on-values; drive sgd_step directly
        let hp = Hyperparams { num_workers: 2, n_steps: 2, ..Default::default() };
        let mut net = PolicyNet::init(9, 8, 2, 0, false).unwrap();
        let before = net.params.flat_values();
        let mut workers = make_workers(chain_env(), 2, 3);
        let (batch, _) = collect_rollout(&mut workers, &net, None, 2, 0, false).unwrap();
        let (advantages, targets) = compute_targets(&batch, &hp);
        let mut loss =
            compute_loss(&batch, &advantages, &targets, &net, &hp, FaultMode::Actuation).unwrap();
        loss.graph.backward(loss.root).unwrap();
        loss.graph.scatter_grads(&mut net.params).unwrap();
        crate::diffmath::sgd_step(&mut net.params, 0.0).unwrap();
        assert_eq!(net.params.flat_values(), before);
        assert_eq!(net.params.version(), 1);
    }

    #[test]
    fn budget_of_160_steps_means_exactly_two_updates() {
        let hp = Hyperparams { total_env_steps: 160, ..Default::default() };
        let mut trainer = Trainer::new(setup(chain_env(), hp)).unwrap();
        let mut sink = VecSink::default();
        let summary = trainer.run(&mut sink).unwrap();
        assert_eq!(summary.updates, 2);
        assert_eq!(summary.total_env_steps, 160);
        assert_eq!(sink.updates.len(), 2);
    }

    #[test]
    fn identical_runs_produce_identical_update_reports() {
        let hp = Hyperparams { total_env_steps: 800, num_workers: 4, ..Default::default() };
        let run = || {
            let mut trainer = Trainer::new(setup(chain_env(), hp)).unwrap();
            let mut sink = VecSink::default();
            trainer.run(&mut sink).unwrap();
            sink.updates
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn parallel_and_serial_rollouts_are_bit_identical() {
        let hp = Hyperparams { total_env_steps: 1600, num_workers: 8, ..Default::default() };
        let run = |parallel: bool| {
            let mut s = setup(pong_env(), hp);
            s.parallel = parallel;
            let mut trainer = Trainer::new(s).unwrap();
            let mut sink = VecSink::default();
            trainer.run(&mut sink).unwrap();
            (sink.episodes, sink.updates, trainer.net.params.flat_values())
        };
        assert_eq!(run(false), run(true));
    }

    #[test]
    fn step_accounting_balances_exactly() {
        let hp = Hyperparams { total_env_steps: 2000, num_workers: 4, ..Default::default() };
        let mut trainer = Trainer::new(setup(pong_env(), hp)).unwrap();
        let mut sink = VecSink::default();
        let summary = trainer.run(&mut sink).unwrap();
        let finished: u64 = sink.episodes.iter().map(|e| e.length).sum();
        assert_eq!(
            finished + trainer.in_progress_steps(),
            summary.updates * hp.steps_per_update()
        );
    }

    #[test]
    fn policy_ascends_reward_on_the_bandit_chain() {
        // two-state chain: a one-step bandit where "right" pays 1
        let env = DeskEnv::Chain(
            ChainMdp::new(ChainMdpSpec { length: 2, start: 0, episode_cap: 50 }).unwrap(),
        );
        let hp = Hyperparams {
            num_workers: 4,
            n_steps: 5,
            lr: 0.02,
            total_env_steps: 200 * 4 * 5, // exactly 200 updates
            ..Default::default()
        };
        let mut trainer = Trainer::new(setup(env, hp)).unwrap();
        let mut sink = VecSink::default();
        trainer.run(&mut sink).unwrap();
        assert_eq!(trainer.updates_done(), 200);
        let obs = DenseArray::matrix(1, 2, vec![1.0, 0.0]).unwrap();
        let (lp, _) = trainer.net().forward(&obs).unwrap();
        let p_right = lp.at(0, 1).exp();
        assert!(p_right > 0.9, "p(right) = {p_right}");
    }

    #[test]
    fn byzantine_flips_show_up_in_executed_actions_only() {
        let net = PolicyNet::init(5, 8, 3, 0, false).unwrap();
        let schedule = ByzantineSchedule {
            byzantine: BTreeSet::from([0]),
            update_period: 1,
            step_period: 1,
            fault_mode: FaultMode::Actuation,
            stochastic_steps: false,
        };
        let mut workers = make_workers(pong_env(), 2, 5);
        let (batch, _) = collect_rollout(&mut workers, &net, Some(&schedule), 10, 0, false).unwrap();
        let spec = pong_env().spec();
        for t in &batch.transitions[0] {
            assert_eq!(t.executed_action, (spec.opposite_map)(t.sampled_action));
        }
        for t in &batch.transitions[1] {
            assert_eq!(t.executed_action, t.sampled_action);
        }
    }
}
