//! BoilerSim: a small constrained control problem with a combustion
//! flavour. Three valves (fuel, air, water) drive furnace temperature and
//! steam pressure while the plant follows a sinusoidal load demand.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ensure_finite, Error, Result};
use crate::rng::{rng_from, standard_normal, stream, Rng};
use rand::Rng as _;

pub const STATE_DIM: usize = 6;
pub const ACTION_DIM: usize = 3;
pub const COST_DIM: usize = 3;
/// Standard deviation of the temperature disturbance.
pub const TEMPERATURE_NOISE_STD: f64 = 0.01;
/// Default constraint budget on the discounted combined cost.
pub const DEFAULT_COST_LIMIT: f64 = 200.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CmdpSpec {
    pub state_dim: usize,
    pub action_dim: usize,
    pub gamma: f64,
    pub cost_limit: f64,
    pub reward_weight_alpha_r: f64,
    pub cost_weights: Vec<f64>,
    pub episode_length: usize,
}

impl Default for CmdpSpec {
    fn default() -> Self {
        CmdpSpec {
            state_dim: STATE_DIM,
            action_dim: ACTION_DIM,
            gamma: 0.99,
            cost_limit: DEFAULT_COST_LIMIT,
            reward_weight_alpha_r: 0.8,
            cost_weights: vec![1.0, 1.0, 0.5],
            episode_length: 200,
        }
    }
}

impl CmdpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.state_dim != STATE_DIM || self.action_dim != ACTION_DIM {
            return Err(Error::Config(format!(
                "BoilerSim has state_dim {STATE_DIM} and action_dim {ACTION_DIM}"
            )));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0,1), got {}", self.gamma)));
        }
        if !(self.cost_limit >= 0.0) {
            return Err(Error::Config("cost_limit must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.reward_weight_alpha_r) {
            return Err(Error::Config("reward weight alpha_r must lie in [0,1]".into()));
        }
        if self.cost_weights.len() != COST_DIM
            || self.cost_weights.iter().any(|w| !(*w >= 0.0))
            || self.cost_weights.iter().sum::<f64>() <= 0.0
        {
            return Err(Error::Config(format!(
                "cost_weights must be {COST_DIM} nonnegative numbers with a positive sum"
            )));
        }
        if self.episode_length == 0 {
            return Err(Error::Config("episode_length must be positive".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        crate::dataset::hex(&Sha256::digest(json.as_bytes()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoilerState {
    pub fuel: f64,
    pub air: f64,
    pub water: f64,
    pub temperature: f64,
    pub pressure: f64,
    pub demand: f64,
    pub step_index: usize,
}

impl BoilerState {
    /// `[fuel, air, water, temperature, pressure, demand]`.
    pub fn observation(&self) -> Vec<f64> {
        vec![
            self.fuel,
            self.air,
            self.water,
            self.temperature,
            self.pressure,
            self.demand,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next: BoilerState,
    pub reward: f64,
    pub costs: [f64; COST_DIM],
    pub combined_cost: f64,
    pub done: bool,
    /// Some action component was outside `[-1, 1]` and got clipped.
    pub action_clipped: bool,
}

/// The initial state does not depend on the spec; it is taken for symmetry
/// with [`env_step`].
pub fn env_reset(_spec: &CmdpSpec, seed: u64) -> BoilerState {
    let mut rng = rng_from(seed, &[stream::RESET]);
    BoilerState {
        fuel: rng.random_range(0.3..=0.7),
        air: rng.random_range(0.3..=0.7),
        water: rng.random_range(0.3..=0.7),
        temperature: 0.5,
        pressure: 0.5,
        demand: 0.5,
        step_index: 0,
    }
}

/// Combustion-completeness bump, maximal at an air valve of 0.6.
pub fn combustion_completeness(air: f64) -> f64 {
    1.0 - 4.0 * (air - 0.6) * (air - 0.6)
}

/// Applies the transition equations with an explicit temperature
/// disturbance `xi`.
pub fn step_with_noise(
    spec: &CmdpSpec,
    state: &BoilerState,
    action: &[f64],
    xi: f64,
) -> Result<StepOutcome> {
    if action.len() != ACTION_DIM {
        return Err(Error::dim("boiler action", ACTION_DIM, action.len()));
    }
    ensure_finite("boiler action", action)?;
    let action_clipped = action.iter().any(|a| a.abs() > 1.0);
    let a: Vec<f64> = action.iter().map(|v| v.clamp(-1.0, 1.0)).collect();

    let fuel = (state.fuel + 0.1 * a[0]).clamp(0.0, 1.0);
    let air = (state.air + 0.1 * a[1]).clamp(0.0, 1.0);
    let water = (state.water + 0.1 * a[2]).clamp(0.0, 1.0);
    let g = combustion_completeness(air);
    let temperature = 0.88 * state.temperature + 0.5 * fuel * g + xi;
    let pressure = 0.90 * state.pressure + 0.30 * temperature - 0.25 * water;
    let step_index = state.step_index + 1;
    let demand =
        0.5 + 0.3 * (2.0 * PI * step_index as f64 / spec.episode_length as f64).sin();

    let efficiency = 0.90 + 0.04 * g - 0.02 * (water - 0.5).abs();
    let emission = 1.0 - 0.4 * air - 0.3 * (temperature - 0.8).max(0.0);
    let alpha = spec.reward_weight_alpha_r;
    let reward = alpha * efficiency + (1.0 - alpha) * emission;

    let costs = [
        (pressure - 0.9).max(0.0) + (0.1 - pressure).max(0.0),
        (temperature - 1.0).max(0.0),
        (fuel * water - demand).abs(),
    ];
    let combined_cost = costs
        .iter()
        .zip(&spec.cost_weights)
        .map(|(c, w)| c * w)
        .sum();

    Ok(StepOutcome {
        next: BoilerState {
            fuel,
            air,
            water,
            temperature,
            pressure,
            demand,
            step_index,
        },
        reward,
        costs,
        combined_cost,
        done: step_index >= spec.episode_length,
        action_clipped,
    })
}

fn draw_disturbance(rng: &mut Rng) -> f64 {
    TEMPERATURE_NOISE_STD * standard_normal(rng)
}

/// One environment step with the disturbance drawn from `noise_seed`.
pub fn env_step(
    spec: &CmdpSpec,
    state: &BoilerState,
    action: &[f64],
    noise_seed: u64,
) -> Result<StepOutcome> {
    let xi = draw_disturbance(&mut rng_from(noise_seed, &[stream::ENV_NOISE]));
    step_with_noise(spec, state, action, xi)
}

/// What an episodic environment reports after one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Feedback {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub combined_cost: f64,
    pub done: bool,
}

pub trait Environment {
    fn gamma(&self) -> f64;
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    fn step(&mut self, action: &[f64]) -> Result<Feedback>;
}

/// Stateful wrapper that draws one disturbance stream per episode.
#[derive(Debug, Clone)]
pub struct BoilerEnv {
    spec: CmdpSpec,
    state: BoilerState,
    rng: Rng,
    clip_warnings: usize,
}

impl BoilerEnv {
    pub fn new(spec: CmdpSpec) -> Result<Self> {
        spec.validate()?;
        let state = env_reset(&spec, 0);
        Ok(BoilerEnv {
            spec,
            state,
            rng: rng_from(0, &[stream::ENV_NOISE]),
            clip_warnings: 0,
        })
    }

    pub fn state(&self) -> &BoilerState {
        &self.state
    }

    pub fn spec(&self) -> &CmdpSpec {
        &self.spec
    }

    /// Number of steps so far whose action had to be clipped.
    pub fn clip_warnings(&self) -> usize {
        self.clip_warnings
    }

    pub fn step_full(&mut self, action: &[f64]) -> Result<StepOutcome> {
        let xi = draw_disturbance(&mut self.rng);
        let out = step_with_noise(&self.spec, &self.state, action, xi)?;
        if out.action_clipped {
            self.clip_warnings += 1;
        }
        self.state = out.next;
        Ok(out)
    }
}

impl Environment for BoilerEnv {
    fn gamma(&self) -> f64 {
        self.spec.gamma
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.state = env_reset(&self.spec, seed);
        self.rng = rng_from(seed, &[stream::ENV_NOISE]);
        self.state.observation()
    }

    fn step(&mut self, action: &[f64]) -> Result<Feedback> {
        let out = self.step_full(action)?;
        Ok(Feedback {
            observation: out.next.observation(),
            reward: out.reward,
            combined_cost: out.combined_cost,
            done: out.done,
        })
    }
}
