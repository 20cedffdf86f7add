//! Linear chain MDP: walk right to the goal.
//!
//! States 0..L-1 on a line, actions {0: left, 1: right}, moves clamped to the
//! line. Entering the last state pays +1 and ends the episode; everything
//! else pays 0. The optimum is analytic, which makes this the oracle
//! environment for convergence checks.

use serde::{Deserialize, Serialize};

use crate::envsim::{EnvSpec, StepOutcome};
use crate::error::{Error, Result};

pub const ACTION_LEFT: usize = 0;
pub const ACTION_RIGHT: usize = 1;

fn opposite(a: usize) -> usize {
    1 - a
}

/// Geometry of a chain environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainMdpSpec {
    pub length: usize,
    pub start: usize,
    pub episode_cap: usize,
}

impl Default for ChainMdpSpec {
    fn default() -> Self {
        let length = 9;
        ChainMdpSpec { length, start: length / 2, episode_cap: 50 }
    }
}

impl ChainMdpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.length < 2 {
            return Err(Error::Config(format!("chain length must be ≥ 2, got {}", self.length)));
        }
        if self.start >= self.length - 1 {
            return Err(Error::Config(format!(
                "chain start {} must lie in [0, {})",
                self.start,
                self.length - 1
            )));
        }
        if self.episode_cap == 0 {
            return Err(Error::Config("episode_cap must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn goal(&self) -> usize {
        self.length - 1
    }
}

#[derive(Debug, Clone)]
pub struct ChainMdp {
    spec: ChainMdpSpec,
    position: usize,
    steps: usize,
    done: bool,
}

impl ChainMdp {
    pub fn new(spec: ChainMdpSpec) -> Result<Self> {
        spec.validate()?;
        Ok(ChainMdp { spec, position: spec.start, steps: 0, done: true })
    }

    pub fn chain_spec(&self) -> &ChainMdpSpec {
        &self.spec
    }

    pub fn spec(&self) -> EnvSpec {
        EnvSpec {
            obs_dim: self.spec.length,
            action_cardinality: 2,
            opposite_map: opposite,
            episode_cap: self.spec.episode_cap,
        }
    }

    fn observe(&self) -> Vec<f64> {
        let mut obs = vec![0.0; self.spec.length];
        obs[self.position] = 1.0;
        obs
    }

    /// The initial state is fixed; the seed exists only for interface parity.
    pub fn reset(&mut self, _seed: u64) -> Vec<f64> {
        self.position = self.spec.start;
        self.steps = 0;
        self.done = false;
        self.observe()
    }

    pub fn step(&mut self, action: usize) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::Contract("step() after terminal; call reset() first".into()));
        }
        if action > 1 {
            return Err(Error::Contract(format!("chain action {action} out of range [0, 2)")));
        }
        self.position = match action {
            ACTION_LEFT => self.position.saturating_sub(1),
            _ => (self.position + 1).min(self.spec.goal()),
        };
        self.steps += 1;
        let reached_goal = self.position == self.spec.goal();
        let reward = if reached_goal { 1.0 } else { 0.0 };
        self.done = reached_goal || self.steps >= self.spec.episode_cap;
        Ok(StepOutcome { observation: self.observe(), reward, terminal: self.done })
    }
}
