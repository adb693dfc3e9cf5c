//! The BoilerSim benchmark: environment, behavior controllers, offline
//! dataset generation and true-environment evaluation.

mod behavior;
mod boiler;
mod evaluate;
mod generate;

pub use behavior::{
    behavior_action, controller, controller_action, noisy_action, BehaviorKind,
    BehaviorPolicyConfig,
};
pub use boiler::{
    combustion_completeness, env_reset, env_step, step_with_noise, BoilerEnv, BoilerState,
    CmdpSpec, Environment, Feedback, StepOutcome, ACTION_DIM, COST_DIM, DEFAULT_COST_LIMIT,
    STATE_DIM, TEMPERATURE_NOISE_STD,
};
pub use evaluate::{evaluate_on_boiler, evaluate_policy, EvaluationReport};
pub use generate::generate_dataset;

impl BoilerState {
    /// Inverse of [`BoilerState::observation`]; the step index is not observed.
    pub fn from_observation(obs: &[f64], step_index: usize) -> Self {
        BoilerState {
            fuel: obs[0],
            air: obs[1],
            water: obs[2],
            temperature: obs[3],
            pressure: obs[4],
            demand: obs[5],
            step_index,
        }
    }
}
