//! `MORECKPT1` checkpoints: a single JSON document holding every parameter
//! vector of one trained component together with its network shapes,
//! normalization statistics and the hash of the config that produced it.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{ActorPolicy, AgentState, CriticSet, LagrangeState};
use crate::dataset::NormalizationStats;
use crate::density::DensityModel;
use crate::dynamics::DynamicsModel;
use crate::error::{Error, Result};
use crate::nn::{Mlp, MlpSpec};

pub const CHECKPOINT_MAGIC: &str = "MORECKPT1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentKind {
    Dynamics,
    Vae,
    Agent,
}

impl ComponentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ComponentKind::Dynamics => "dynamics",
            ComponentKind::Vae => "vae",
            ComponentKind::Agent => "agent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkRecord {
    pub spec: MlpSpec,
    pub params: Vec<f64>,
}

impl NetworkRecord {
    fn of(net: &Mlp) -> Self {
        NetworkRecord {
            spec: net.spec().clone(),
            params: net.params().to_vec(),
        }
    }

    fn build(&self) -> Result<Mlp> {
        Mlp::new(self.spec.clone(), self.params.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Payload {
    Dynamics {
        network: NetworkRecord,
        target_mean: Vec<f64>,
        target_std: Vec<f64>,
        predict_delta: bool,
    },
    Vae {
        encoder: NetworkRecord,
        decoder: NetworkRecord,
    },
    Agent {
        actor: NetworkRecord,
        exploration_std: f64,
        critics: Vec<NetworkRecord>,
        target_critics: Vec<NetworkRecord>,
        value_scale: f64,
        soft_update_rate: f64,
        lagrange: LagrangeState,
    },
}

impl Payload {
    pub fn kind(&self) -> ComponentKind {
        match self {
            Payload::Dynamics { .. } => ComponentKind::Dynamics,
            Payload::Vae { .. } => ComponentKind::Vae,
            Payload::Agent { .. } => ComponentKind::Agent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub magic: String,
    pub config_hash: String,
    pub normalization: NormalizationStats,
    pub payload: Payload,
}

/// A trained agent as stored on disk: the policy, critics and dual state.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSnapshot {
    pub actor: ActorPolicy,
    pub critics: CriticSet,
    pub lagrange: LagrangeState,
}

impl From<&AgentState> for AgentSnapshot {
    fn from(state: &AgentState) -> Self {
        AgentSnapshot {
            actor: state.actor.clone(),
            critics: state.critics.clone(),
            lagrange: state.lagrange,
        }
    }
}

impl Checkpoint {
    pub fn dynamics(model: &DynamicsModel, config_hash: &str) -> Self {
        Checkpoint::wrap(
            config_hash,
            model.input_norm().clone(),
            Payload::Dynamics {
                network: NetworkRecord::of(model.network()),
                target_mean: model.target_mean().to_vec(),
                target_std: model.target_std().to_vec(),
                predict_delta: model.predict_delta(),
            },
        )
    }

    pub fn vae(model: &DensityModel, config_hash: &str) -> Self {
        Checkpoint::wrap(
            config_hash,
            model.norm().clone(),
            Payload::Vae {
                encoder: NetworkRecord::of(model.encoder()),
                decoder: NetworkRecord::of(model.decoder()),
            },
        )
    }

    pub fn agent(agent: &AgentSnapshot, config_hash: &str) -> Self {
        let c = &agent.critics;
        Checkpoint::wrap(
            config_hash,
            agent.actor.norm().clone(),
            Payload::Agent {
                actor: NetworkRecord::of(agent.actor.network()),
                exploration_std: agent.actor.exploration_std(),
                critics: (0..3).map(|k| NetworkRecord::of(c.online(k))).collect(),
                target_critics: (0..3).map(|k| NetworkRecord::of(c.target(k))).collect(),
                value_scale: c.value_scale(),
                soft_update_rate: c.soft_update_rate(),
                lagrange: agent.lagrange,
            },
        )
    }

    fn wrap(config_hash: &str, normalization: NormalizationStats, payload: Payload) -> Self {
        Checkpoint {
            magic: CHECKPOINT_MAGIC.to_string(),
            config_hash: config_hash.to_string(),
            normalization,
            payload,
        }
    }

    pub fn kind(&self) -> ComponentKind {
        self.payload.kind()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Reads a checkpoint, rejecting a wrong magic, a different component
    /// kind, or (when given) a different config hash.
    pub fn load(path: impl AsRef<Path>, kind: ComponentKind, config_hash: Option<&str>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Checkpoint {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        let fail = |detail: String| Error::Checkpoint {
            path: path.to_path_buf(),
            detail,
        };
        if ckpt.magic != CHECKPOINT_MAGIC {
            return Err(Error::Magic {
                path: path.to_path_buf(),
                expected: CHECKPOINT_MAGIC,
                found: ckpt.magic,
            });
        }
        if ckpt.kind() != kind {
            return Err(fail(format!("expected a {} checkpoint, found {}", kind.as_str(), ckpt.kind().as_str())));
        }
        if let Some(expected) = config_hash {
            if ckpt.config_hash != expected {
                return Err(fail(format!(
                    "config hash mismatch: checkpoint has {}, run expects {expected}",
                    ckpt.config_hash
                )));
            }
        }
        Ok(ckpt)
    }

    pub fn into_dynamics(self) -> Result<DynamicsModel> {
        match self.payload {
            Payload::Dynamics {
                network,
                target_mean,
                target_std,
                predict_delta,
            } => DynamicsModel::from_parts(network.build()?, self.normalization, target_mean, target_std, predict_delta),
            other => Err(Error::Config(format!("not a dynamics checkpoint: {}", other.kind().as_str()))),
        }
    }

    pub fn into_vae(self) -> Result<DensityModel> {
        match self.payload {
            Payload::Vae { encoder, decoder } => {
                DensityModel::from_parts(encoder.build()?, decoder.build()?, self.normalization)
            }
            other => Err(Error::Config(format!("not a vae checkpoint: {}", other.kind().as_str()))),
        }
    }

    pub fn into_agent(self) -> Result<AgentSnapshot> {
        match self.payload {
            Payload::Agent {
                actor,
                exploration_std,
                critics,
                target_critics,
                value_scale,
                soft_update_rate,
                lagrange,
            } => {
                let three = |recs: &[NetworkRecord]| -> Result<[Mlp; 3]> {
                    if recs.len() != 3 {
                        return Err(Error::dim("critic count", 3, recs.len()));
                    }
                    Ok([recs[0].build()?, recs[1].build()?, recs[2].build()?])
                };
                let critics = CriticSet::from_parts(
                    three(&critics)?,
                    three(&target_critics)?,
                    self.normalization.clone(),
                    value_scale,
                    soft_update_rate,
                )?;
                Ok(AgentSnapshot {
                    actor: ActorPolicy::from_parts(actor.build()?, self.normalization, exploration_std)?,
                    critics,
                    lagrange,
                })
            }
            other => Err(Error::Config(format!("not an agent checkpoint: {}", other.kind().as_str()))),
        }
    }
}

/// Stable hash of any serializable config.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    use sha2::{Digest, Sha256};
    let text = serde_json::to_string(config).expect("configs serialize");
    crate::dataset::hex(&Sha256::digest(text.as_bytes()))
}
