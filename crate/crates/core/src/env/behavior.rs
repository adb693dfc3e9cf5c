//! Scripted behavior controllers that stand in for the unknown operators
//! who produced a historical dataset.

use serde::{Deserialize, Serialize};

use super::boiler::{BoilerState, ACTION_DIM};
use crate::error::{Error, Result};
use crate::rng::{rng_from, standard_normal, stream, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BehaviorKind {
    /// One fixed noise level.
    Medium,
    /// A descending noise schedule, one tier per equal slice of the dataset,
    /// imitating the replay buffer of an improving learner.
    Mixed,
}

impl BehaviorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BehaviorKind::Medium => "medium",
            BehaviorKind::Mixed => "mixed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BehaviorPolicyConfig {
    pub kind: BehaviorKind,
    /// One entry for `medium`, a strictly decreasing list for `mixed`.
    pub exploration_std: Vec<f64>,
    pub seed: u64,
}

impl BehaviorPolicyConfig {
    pub fn medium(std: f64, seed: u64) -> Self {
        BehaviorPolicyConfig {
            kind: BehaviorKind::Medium,
            exploration_std: vec![std],
            seed,
        }
    }

    pub fn mixed(stds: &[f64], seed: u64) -> Self {
        BehaviorPolicyConfig {
            kind: BehaviorKind::Mixed,
            exploration_std: stds.to_vec(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.exploration_std.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::Config("exploration std must be finite and >= 0".into()));
        }
        match self.kind {
            BehaviorKind::Medium if self.exploration_std.len() != 1 => Err(Error::Config(
                "medium behavior takes exactly one exploration std".into(),
            )),
            BehaviorKind::Mixed
                if self.exploration_std.len() < 2
                    || self.exploration_std.windows(2).any(|w| w[1] >= w[0]) =>
            {
                Err(Error::Config(
                    "mixed behavior needs a strictly decreasing list of at least two stds".into(),
                ))
            }
            _ => Ok(()),
        }
    }

    pub fn tiers(&self) -> usize {
        self.exploration_std.len()
    }

    /// Noise tier for transition `index` of a dataset of `total` transitions.
    pub fn tier_of(&self, index: usize, total: usize) -> usize {
        let k = self.tiers();
        ((index * k) / total.max(1)).min(k - 1)
    }
}

/// Proportional gains and setpoints of the scripted controller.
pub mod controller {
    pub const AIR_SETPOINT: f64 = 0.6;
    pub const WATER_SETPOINT: f64 = 0.5;
    pub const LOAD_GAIN: f64 = 2.0;
    pub const AIR_GAIN: f64 = 5.0;
    pub const WATER_GAIN: f64 = 5.0;
    /// Furnace temperature above which the fuel loop backs off.
    pub const TEMPERATURE_GUARD: f64 = 0.9;
    pub const GUARD_GAIN: f64 = 3.0;
}

/// Noiseless controller: air toward 0.6, water toward 0.5, fuel tracking
/// the load (`fuel * water -> demand`) with a furnace-temperature guard.
pub fn controller_action(state: &BoilerState) -> [f64; ACTION_DIM] {
    use controller::*;
    let load_error = state.demand - state.fuel * state.water;
    let overheat = (state.temperature - TEMPERATURE_GUARD).max(0.0);
    [
        (LOAD_GAIN * load_error - GUARD_GAIN * overheat).clamp(-1.0, 1.0),
        (AIR_GAIN * (AIR_SETPOINT - state.air)).clamp(-1.0, 1.0),
        (WATER_GAIN * (WATER_SETPOINT - state.water)).clamp(-1.0, 1.0),
    ]
}

/// Controller action plus Gaussian exploration noise, clipped to `[-1, 1]`.
pub fn noisy_action(state: &BoilerState, std: f64, rng: &mut Rng) -> Vec<f64> {
    controller_action(state)
        .iter()
        .map(|a| (a + std * standard_normal(rng)).clamp(-1.0, 1.0))
        .collect()
}

/// Behavior action for a given noise tier, with noise drawn from `step_seed`.
pub fn behavior_action(
    state: &BoilerState,
    config: &BehaviorPolicyConfig,
    tier: usize,
    step_seed: u64,
) -> Vec<f64> {
    let std = config.exploration_std[tier.min(config.tiers() - 1)];
    noisy_action(state, std, &mut rng_from(step_seed, &[stream::BEHAVIOR]))
}
