//! Declarative experiment configuration.
//!
//! One TOML file fully determines a run: `[env]`, `[train]`, `[byzantine]`
//! and `[run]` sections. Unknown keys are errors. Seeds derive from the
//! master seed by a fixed splitting rule: worker w uses master⊕(w+1), the
//! network initializer uses master⊕0x5EED.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::a2c::Hyperparams;
use crate::byzantine::{ByzantineSchedule, FaultMode};
use crate::diffmath::OptimizerKind;
use crate::envsim::{ChainMdp, ChainMdpSpec, DeskEnv, MiniPong, MiniPongSpec};
use crate::error::{Error, Result};

/// Which environment a run trains on, with its overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvConfig {
    Chain(ChainEnvConfig),
    Minipong(MiniPongEnvConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainEnvConfig {
    #[serde(default = "default_chain_length")]
    pub length: usize,
    /// Defaults to floor(length/2).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<usize>,
    #[serde(default = "default_chain_cap")]
    pub episode_cap: usize,
}

fn default_chain_length() -> usize {
    9
}
fn default_chain_cap() -> usize {
    50
}

impl Default for ChainEnvConfig {
    fn default() -> Self {
        ChainEnvConfig { length: 9, start: None, episode_cap: 50 }
    }
}

impl ChainEnvConfig {
    pub fn to_spec(&self) -> ChainMdpSpec {
        ChainMdpSpec {
            length: self.length,
            start: self.start.unwrap_or(self.length / 2),
            episode_cap: self.episode_cap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MiniPongEnvConfig {
    pub width: usize,
    pub height: usize,
    pub paddle_height: usize,
    pub episode_cap: usize,
    pub max_points: usize,
}

impl Default for MiniPongEnvConfig {
    fn default() -> Self {
        let s = MiniPongSpec::default();
        MiniPongEnvConfig {
            width: s.width,
            height: s.height,
            paddle_height: s.paddle_height,
            episode_cap: s.episode_cap,
            max_points: s.max_points,
        }
    }
}

impl MiniPongEnvConfig {
    pub fn to_spec(&self) -> MiniPongSpec {
        MiniPongSpec {
            width: self.width,
            height: self.height,
            paddle_height: self.paddle_height,
            episode_cap: self.episode_cap,
            max_points: self.max_points,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            EnvConfig::Chain(c) => c.to_spec().validate(),
            EnvConfig::Minipong(c) => c.to_spec().validate(),
        }
    }

    pub fn build(&self) -> Result<DeskEnv> {
        Ok(match self {
            EnvConfig::Chain(c) => DeskEnv::Chain(ChainMdp::new(c.to_spec())?),
            EnvConfig::Minipong(c) => DeskEnv::MiniPong(MiniPong::new(c.to_spec())?),
        })
    }

    /// Analytic bounds on a single episode return.
    pub fn return_bounds(&self) -> (f64, f64) {
        match self {
            EnvConfig::Chain(_) => (0.0, 1.0),
            EnvConfig::Minipong(c) => (-(c.max_points as f64), c.max_points as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub gamma: f64,
    pub n_steps: usize,
    pub num_workers: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub total_env_steps: u64,
    pub hidden: usize,
    pub optimizer: OptimizerKind,
    pub separate_networks: bool,
    pub n_step_returns: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let hp = Hyperparams::default();
        TrainConfig {
            lr: hp.lr,
            gamma: hp.gamma,
            n_steps: hp.n_steps,
            num_workers: hp.num_workers,
            value_coef: hp.value_coef,
            entropy_coef: hp.entropy_coef,
            total_env_steps: hp.total_env_steps,
            hidden: hp.hidden,
            optimizer: OptimizerKind::Sgd,
            separate_networks: false,
            n_step_returns: false,
        }
    }
}

impl TrainConfig {
    pub fn to_hyperparams(&self) -> Hyperparams {
        Hyperparams {
            lr: self.lr,
            gamma: self.gamma,
            n_steps: self.n_steps,
            num_workers: self.num_workers,
            value_coef: self.value_coef,
            entropy_coef: self.entropy_coef,
            total_env_steps: self.total_env_steps,
            hidden: self.hidden,
            n_step_returns: self.n_step_returns,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ByzConfig {
    pub workers: Vec<usize>,
    pub update_period: u64,
    pub step_period: u64,
    pub fault_mode: FaultMode,
    pub stochastic_steps: bool,
}

impl Default for ByzConfig {
    fn default() -> Self {
        ByzConfig {
            workers: Vec::new(),
            update_period: 1,
            step_period: 1,
            fault_mode: FaultMode::Actuation,
            stochastic_steps: false,
        }
    }
}

impl ByzConfig {
    pub fn to_schedule(&self) -> ByzantineSchedule {
        ByzantineSchedule {
            byzantine: self.workers.iter().copied().collect::<BTreeSet<usize>>(),
            update_period: self.update_period,
            step_period: self.step_period,
            fault_mode: self.fault_mode,
            stochastic_steps: self.stochastic_steps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub master_seed: u64,
    pub out_dir: String,
    pub run_id: String,
    /// Sliding-mean window K for the convergence detector.
    pub convergence_window: usize,
    /// Optional override; defaults are per-environment.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convergence_threshold: Option<f64>,
    pub parallel: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            master_seed: 0,
            out_dir: "runs/out".to_string(),
            run_id: "run".to_string(),
            convergence_window: 20,
            convergence_threshold: None,
            parallel: false,
        }
    }
}

/// Full declarative description of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub byzantine: ByzConfig,
    #[serde(default)]
    pub run: RunConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        let hp = self.train.to_hyperparams();
        hp.validate()?;
        self.byzantine.to_schedule().validate(hp.num_workers)?;
        if self.run.convergence_window < 1 {
            return Err(Error::Config("convergence_window must be ≥ 1".into()));
        }
        // derived seeds must be pairwise distinct: master⊕(w+1) collides with
        // master⊕0x5EED only when w+1 == 0x5EED
        if hp.num_workers as u64 >= 0x5EED {
            return Err(Error::Config(
                "num_workers too large for the seed-splitting rule".into(),
            ));
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("serialize config: {e}")))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }
}

/// Load and validate a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    ExperimentConfig::from_toml_str(&text)
}
