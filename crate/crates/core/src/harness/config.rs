use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::{AgentConfig, FilterConfig, PretrainConfig};
use crate::density::VaeConfig;
use crate::dynamics::{DynamicsConfig, SensitivityConfig};
use crate::env::{BehaviorKind, BehaviorPolicyConfig, CmdpSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub kind: BehaviorKind,
    /// One std for `medium`; a strictly decreasing list for `mixed`.
    pub exploration_std: Vec<f64>,
    pub transitions: usize,
    /// Existing dataset to use instead of generating one.
    pub path: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            kind: BehaviorKind::Medium,
            exploration_std: vec![0.3],
            transitions: 100_000,
            path: None,
        }
    }
}

impl DataConfig {
    pub fn behavior(&self, seed: u64) -> BehaviorPolicyConfig {
        BehaviorPolicyConfig {
            kind: self.kind,
            exploration_std: self.exploration_std.clone(),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdConfig {
    pub beta_u: f64,
    pub beta_p: f64,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig {
            beta_u: 70.0,
            beta_p: 40.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeedConfig {
    pub data: u64,
    pub behavior: u64,
    pub dynamics: u64,
    pub vae: u64,
    pub thresholds: u64,
    pub agent: u64,
    /// Shared by every final evaluation so compared policies face the same
    /// episodes.
    pub eval: u64,
}

impl Default for SeedConfig {
    fn default() -> Self {
        SeedConfig {
            data: 0,
            behavior: 1,
            dynamics: 2,
            vae: 3,
            thresholds: 4,
            agent: 5,
            eval: 6,
        }
    }
}

/// Everything a run needs. Written verbatim into the output directory
/// before anything executes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub env: CmdpSpec,
    pub data: DataConfig,
    pub dynamics: DynamicsConfig,
    pub vae: VaeConfig,
    pub filter: FilterConfig,
    pub thresholds: ThresholdConfig,
    pub agent: AgentConfig,
    pub pretrain: PretrainConfig,
    pub seeds: SeedConfig,
    /// Episodes for the evaluation after training.
    pub final_eval_episodes: usize,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            env: CmdpSpec::default(),
            data: DataConfig::default(),
            dynamics: DynamicsConfig::default(),
            vae: VaeConfig::default(),
            filter: FilterConfig::default(),
            thresholds: ThresholdConfig::default(),
            agent: AgentConfig::default(),
            pretrain: PretrainConfig::default(),
            seeds: SeedConfig::default(),
            final_eval_episodes: 10,
            output_dir: None,
        }
    }
}

pub const CONFIG_FILE: &str = "config.toml";

impl RunConfig {
    /// Small networks and short schedules that finish in seconds to minutes
    /// on one CPU core.
    pub fn desk() -> Self {
        RunConfig {
            data: DataConfig {
                transitions: 20_000,
                ..DataConfig::default()
            },
            dynamics: DynamicsConfig {
                hidden_dims: vec![64, 64],
                learning_rate: 1e-3,
                training_epochs: 15,
                ..DynamicsConfig::default()
            },
            vae: VaeConfig {
                encoder_hidden: vec![64, 64],
                decoder_hidden: vec![64, 64],
                learning_rate: 1e-3,
                training_epochs: 15,
                ..VaeConfig::default()
            },
            filter: FilterConfig {
                rollout_length: 5,
                sensitivity: SensitivityConfig {
                    num_perturbations: 10,
                    noise_std: 0.01,
                },
                ..FilterConfig::default()
            },
            agent: AgentConfig {
                batch_size: 64,
                actor_hidden: vec![64, 64],
                critic_hidden: vec![64, 64],
                actor_learning_rate: 3e-5,
                training_steps: 2_000,
                eval_interval: 500,
                eval_episodes: 3,
                ..AgentConfig::default()
            },
            pretrain: PretrainConfig {
                bc_steps: 5_000,
                critic_steps: 20_000,
                batch_size: 64,
                ..PretrainConfig::default()
            },
            ..RunConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.data.behavior(self.seeds.behavior).validate()?;
        self.dynamics.validate()?;
        self.vae.validate()?;
        self.filter.validate()?;
        self.agent.validate()?;
        for beta in [self.thresholds.beta_u, self.thresholds.beta_p] {
            if !(beta > 0.0 && beta <= 100.0) {
                return Err(Error::Config(format!("percentile must lie in (0, 100], got {beta}")));
            }
        }
        if self.agent.gamma != self.env.gamma {
            return Err(Error::Config(format!(
                "agent gamma {} differs from environment gamma {}",
                self.agent.gamma, self.env.gamma
            )));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes to TOML")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_toml(&text)
    }

    /// Writes the config as `config.toml` inside `dir`, creating `dir`.
    pub fn write_into(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(CONFIG_FILE);
        fs::write(&path, self.to_toml()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}
