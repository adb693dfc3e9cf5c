//! Constrained offline policy learning: restrictive exploration through the
//! learned dynamics, soft reward penalties, and Lagrangian primal-dual
//! actor-critic updates.

mod filter;
mod networks;
mod train;
mod update;

pub use filter::{
    build_local_buffer, penalize_reward, restrictive_exploration, rollout_seed, BufferRecord, Discard,
    ExplorationOutcome, FilterConfig, LocalBuffer, Origin, OriginCounts, SimTransition, Thresholds,
};
pub use networks::{ActorPolicy, CriticSet, CriticShape, COST, REWARD_A, REWARD_B};
pub use train::{
    evaluate_actor, more_step, pretrain, train_more, train_more_from, AgentConfig, AgentState, Models,
    PretrainConfig, StepMetrics,
};
pub use update::{
    actor_objective, actor_objective_gradient, actor_update, critic_update, lambda_update, mean_cost_value,
    td_loss, td_loss_gradient, td_targets, CriticLosses, LagrangeState,
};
