//! Discrete-action desk environments.
//!
//! Two environments back the experiments: a one-dimensional [`ChainMdp`]
//! whose optimum is known exactly, and [`MiniPong`], a 2-D paddle game whose
//! episode returns occupy a ±`max_points` range. Both are fully deterministic
//! given a reset seed, and both define an involutive opposite-action map used
//! by the fault injector.

mod chain;
mod minipong;
mod value_iteration;

pub use chain::{ChainMdp, ChainMdpSpec};
pub use minipong::{MiniPong, MiniPongSpec};
pub use value_iteration::value_iteration;

use crate::error::{Error, Result};

/// Static description of an environment's interface.
#[derive(Debug, Clone, Copy)]
pub struct EnvSpec {
    pub obs_dim: usize,
    pub action_cardinality: usize,
    /// Involutive worst-case wrong-action map.
    pub opposite_map: fn(usize) -> usize,
    pub episode_cap: usize,
}

impl EnvSpec {
    /// Opposite of an action, with a range check.
    pub fn opposite_action(&self, action: usize) -> Result<usize> {
        if action >= self.action_cardinality {
            return Err(Error::Contract(format!(
                "action {action} out of range for cardinality {}",
                self.action_cardinality
            )));
        }
        Ok((self.opposite_map)(action))
    }
}

/// Result of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
}

/// Either of the two built-in environments, owned by exactly one worker.
#[derive(Debug, Clone)]
pub enum DeskEnv {
    Chain(ChainMdp),
    MiniPong(MiniPong),
}

impl DeskEnv {
    pub fn spec(&self) -> EnvSpec {
        match self {
            DeskEnv::Chain(e) => e.spec(),
            DeskEnv::MiniPong(e) => e.spec(),
        }
    }

    pub fn reset(&mut self, seed: u64) -> Vec<f64> {
        match self {
            DeskEnv::Chain(e) => e.reset(seed),
            DeskEnv::MiniPong(e) => e.reset(seed),
        }
    }

    pub fn step(&mut self, action: usize) -> Result<StepOutcome> {
        match self {
            DeskEnv::Chain(e) => e.step(action),
            DeskEnv::MiniPong(e) => e.step(action),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn opposite_maps_are_involutions_for_every_registered_env() {
        let specs = [
            DeskEnv::Chain(ChainMdp::new(ChainMdpSpec::default()).unwrap()).spec(),
            DeskEnv::MiniPong(MiniPong::new(MiniPongSpec::default()).unwrap()).spec(),
        ];
        for spec in specs {
            for a in 0..spec.action_cardinality {
                let opp = spec.opposite_action(a).unwrap();
                assert!(opp < spec.action_cardinality);
                assert_eq!(spec.opposite_action(opp).unwrap(), a);
            }
        }
    }

    #[test]
    fn opposite_out_of_range_is_contract_error() {
        let spec = ChainMdp::new(ChainMdpSpec::default()).unwrap().spec();
        assert!(matches!(spec.opposite_action(2), Err(Error::Contract(_))));
    }
}
