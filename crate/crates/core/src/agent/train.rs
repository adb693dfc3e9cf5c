use serde::{Deserialize, Serialize};

use super::filter::{build_local_buffer, restrictive_exploration, FilterConfig, Thresholds};
use super::networks::{ActorPolicy, CriticSet, CriticShape, COST, REWARD_A, REWARD_B};
use super::update::{actor_update, critic_update, lambda_update, td_loss_gradient, LagrangeState};
use crate::dataset::{sample_batch, sample_indices, OfflineDataset, Transition};
use crate::density::DensityModel;
use crate::dynamics::DynamicsModel;
use crate::env::{evaluate_on_boiler, CmdpSpec, DEFAULT_COST_LIMIT};
use crate::error::{Error, Result};
use crate::nn::{AdamState, Matrix};
use crate::rng::{derive_seed, rng_from, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub batch_size: usize,
    pub gamma: f64,
    pub actor_learning_rate: f64,
    pub critic_learning_rate: f64,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub soft_update_rate: f64,
    pub dual_step_size: f64,
    pub initial_lambda: f64,
    pub cost_limit: f64,
    /// Gaussian noise added to actor actions inside simulated rollouts.
    pub exploration_std: f64,
    pub training_steps: usize,
    /// Evaluate on the true environment every this many steps; 0 disables.
    pub eval_interval: usize,
    pub eval_episodes: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            batch_size: 256,
            gamma: 0.99,
            actor_learning_rate: 1e-5,
            critic_learning_rate: 1e-3,
            actor_hidden: vec![300, 300],
            critic_hidden: vec![400, 400],
            soft_update_rate: 0.005,
            dual_step_size: 0.01,
            initial_lambda: 0.0,
            cost_limit: DEFAULT_COST_LIMIT,
            exploration_std: 0.1,
            training_steps: 50_000,
            eval_interval: 5_000,
            eval_episodes: 5,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config("gamma must lie in (0, 1)".into()));
        }
        if !(self.actor_learning_rate > 0.0 && self.critic_learning_rate > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.soft_update_rate) {
            return Err(Error::Config("soft_update_rate must lie in [0, 1]".into()));
        }
        if !(self.exploration_std >= 0.0) {
            return Err(Error::Config("exploration_std must be nonnegative".into()));
        }
        if self.eval_interval > 0 && self.eval_episodes == 0 {
            return Err(Error::Config("eval_episodes must be positive when evaluating".into()));
        }
        LagrangeState::new(self.initial_lambda, self.dual_step_size, self.cost_limit).map(|_| ())
    }

    /// Critic outputs are scaled by the horizon `1 / (1 - γ)`.
    pub fn critic_shape(&self) -> CriticShape {
        CriticShape {
            hidden: self.critic_hidden.clone(),
            value_scale: 1.0 / (1.0 - self.gamma),
            soft_update_rate: self.soft_update_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub bc_steps: usize,
    pub critic_steps: usize,
    pub batch_size: usize,
    pub bc_learning_rate: f64,
    pub critic_learning_rate: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            bc_steps: 20_000,
            critic_steps: 20_000,
            batch_size: 256,
            bc_learning_rate: 1e-3,
            critic_learning_rate: 1e-3,
        }
    }
}

/// Everything the primal-dual loop mutates.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub actor: ActorPolicy,
    pub critics: CriticSet,
    pub lagrange: LagrangeState,
    pub actor_optimizer: AdamState,
    pub critic_optimizers: [AdamState; 3],
}

impl AgentState {
    pub fn new(actor: ActorPolicy, critics: CriticSet, config: &AgentConfig) -> Result<Self> {
        let actor_optimizer = AdamState::new(actor.network().params().len(), config.actor_learning_rate);
        let critic_optimizers =
            [REWARD_A, REWARD_B, COST].map(|k| AdamState::new(critics.online(k).params().len(), config.critic_learning_rate));
        Ok(AgentState {
            actor,
            critics,
            lagrange: LagrangeState::new(config.initial_lambda, config.dual_step_size, config.cost_limit)?,
            actor_optimizer,
            critic_optimizers,
        })
    }
}

/// Action taken at `s'` in the data: the next record's action when it
/// continues the same trajectory, otherwise none.
fn dataset_next_action(dataset: &OfflineDataset, index: usize) -> Option<&[f64]> {
    let t = &dataset.transitions[index];
    if t.done {
        return None;
    }
    dataset
        .transitions
        .get(index + 1)
        .filter(|next| next.s == t.s_next)
        .map(|next| next.a.as_slice())
}

fn states_of(batch: &[&Transition]) -> Matrix {
    Matrix::from_rows(&batch.iter().map(|t| t.s.as_slice()).collect::<Vec<_>>())
}

fn actions_of(batch: &[&Transition]) -> Matrix {
    Matrix::from_rows(&batch.iter().map(|t| t.a.as_slice()).collect::<Vec<_>>())
}

/// Behavior cloning for the actor, then on-data TD(0) evaluation for the
/// critics, bootstrapping with the dataset's own next action where the
/// trajectory continues and the cloned actor's action otherwise.
pub fn pretrain(
    dataset: &OfflineDataset,
    agent: &AgentConfig,
    config: &PretrainConfig,
    seed: u64,
) -> Result<(ActorPolicy, CriticSet)> {
    agent.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("pretraining batch_size must be positive".into()));
    }
    let norm = dataset.normalization.clone();
    let mut init_rng = rng_from(seed, &[stream::PRETRAIN, stream::INIT]);
    let mut actor = ActorPolicy::init(norm.clone(), &agent.actor_hidden, agent.exploration_std, &mut init_rng);
    let mut critics = CriticSet::init(norm, &agent.critic_shape(), &mut init_rng);

    let mut rng = rng_from(seed, &[stream::PRETRAIN, stream::BATCH]);
    let mut opt = AdamState::new(actor.network().params().len(), config.bc_learning_rate);
    let mut grad = vec![0.0; actor.network().params().len()];
    for step in 0..config.bc_steps {
        let batch = sample_batch(dataset, config.batch_size, &mut rng);
        let trace = actor.trace(&states_of(&batch));
        let target = actions_of(&batch);
        let scale = 2.0 / target.as_slice().len() as f64;
        let mut d_out = trace.output().clone();
        for (d, t) in d_out.as_mut_slice().iter_mut().zip(target.as_slice()) {
            *d = (*d - t) * scale;
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        actor.network().backward(&trace, &d_out, &mut grad, false);
        opt.step(actor.network_mut().params_mut(), &grad)
            .map_err(|e| Error::divergence("behavior cloning", format!("step {step}"), e.to_string()))?;
    }

    let next_states = Matrix::from_rows(&dataset.transitions.iter().map(|t| t.s_next.as_slice()).collect::<Vec<_>>());
    let actor_next = actor.act_batch(&next_states);
    let next_actions: Vec<Vec<f64>> = (0..dataset.len())
        .map(|i| dataset_next_action(dataset, i).map_or_else(|| actor_next.row(i).to_vec(), <[f64]>::to_vec))
        .collect();

    let mut opts = [REWARD_A, REWARD_B, COST].map(|k| AdamState::new(critics.online(k).params().len(), config.critic_learning_rate));
    let scale = critics.value_scale();
    for step in 0..config.critic_steps {
        let idx = sample_indices(dataset.len(), config.batch_size, &mut rng);
        let batch: Vec<&Transition> = idx.iter().map(|&i| &dataset.transitions[i]).collect();
        let x = critics.inputs(&states_of(&batch), &actions_of(&batch));
        let s2 = next_states.select_rows(&idx);
        let a2 = Matrix::from_rows(&idx.iter().map(|&i| next_actions[i].as_slice()).collect::<Vec<_>>());
        let x2 = critics.inputs(&s2, &a2);
        for which in [REWARD_A, REWARD_B, COST] {
            let boot = critics.values(critics.online(which), &x2);
            let targets: Vec<f64> = batch
                .iter()
                .zip(&boot)
                .map(|(t, q)| if which == COST { t.combined_cost } else { t.r } + agent.gamma * q)
                .collect();
            let (loss, grad) = td_loss_gradient(critics.online(which), scale, &x, &targets);
            if !loss.is_finite() {
                return Err(Error::divergence("critic pretraining", format!("step {step}"), format!("loss {loss}")));
            }
            opts[which]
                .step(critics.online_mut(which).params_mut(), &grad)
                .map_err(|e| Error::divergence("critic pretraining", format!("step {step}"), e.to_string()))?;
        }
    }
    critics.sync_targets();
    Ok((actor, critics))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub lambda: f64,
    pub mean_qc: f64,
    pub qr_loss: f64,
    pub qc_loss: f64,
    pub actor_obj: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub n_discard: usize,
    pub eval_return: Option<f64>,
    pub eval_cost: Option<f64>,
}

/// The learned models and cut-offs a run explores with.
#[derive(Clone, Copy)]
pub struct Models<'a> {
    pub dynamics: &'a DynamicsModel,
    pub density: &'a DensityModel,
    pub filter: &'a FilterConfig,
    pub thresholds: &'a Thresholds,
}

/// One iteration: sample, explore, build the buffer, then critic, actor,
/// dual and target updates.
pub fn more_step(
    state: &mut AgentState,
    dataset: &OfflineDataset,
    models: Models<'_>,
    config: &AgentConfig,
    step: usize,
    seed: u64,
) -> Result<StepMetrics> {
    let step_seed = derive_seed(seed, &[stream::TRAIN, step as u64]);
    let batch = sample_batch(dataset, config.batch_size, &mut rng_from(step_seed, &[stream::BATCH]));
    let outcome = restrictive_exploration(
        &states_of(&batch),
        &state.actor,
        models.dynamics,
        models.density,
        models.filter,
        models.thresholds,
        step_seed,
    );
    let buffer = build_local_buffer(&batch, &outcome);
    let losses = critic_update(&buffer, &mut state.critics, &state.actor, config.gamma, &mut state.critic_optimizers)?;
    let states = buffer.states();
    let actor_obj = actor_update(&states, &mut state.actor, &state.critics, &state.lagrange, &mut state.actor_optimizer)?;
    let mean_qc = lambda_update(&mut state.lagrange, &states, &state.actor, &state.critics);
    if !mean_qc.is_finite() {
        return Err(Error::divergence("dual update", "mean cost value", format!("{mean_qc}")));
    }
    state.critics.soft_update();
    debug_assert!(state.lagrange.lambda >= 0.0);
    Ok(StepMetrics {
        step,
        lambda: state.lagrange.lambda,
        mean_qc,
        qr_loss: 0.5 * (losses.reward[0] + losses.reward[1]),
        qc_loss: losses.cost,
        actor_obj,
        n_pos: outcome.positive.len(),
        n_neg: outcome.negative.len(),
        n_discard: outcome.discarded.len(),
        eval_return: None,
        eval_cost: None,
    })
}

/// Runs `config.training_steps` iterations from an already pretrained
/// state, evaluating on `env` every `eval_interval` steps when given.
pub fn train_more_from(
    state: &mut AgentState,
    dataset: &OfflineDataset,
    models: Models<'_>,
    config: &AgentConfig,
    env: Option<&CmdpSpec>,
    seed: u64,
) -> Result<Vec<StepMetrics>> {
    config.validate()?;
    models.filter.validate()?;
    let mut log = Vec::with_capacity(config.training_steps);
    for step in 1..=config.training_steps {
        let mut m = more_step(state, dataset, models, config, step, seed).map_err(|e| Error::AtStep {
            step,
            source: Box::new(e),
        })?;
        if let Some(spec) = env {
            if config.eval_interval > 0 && step % config.eval_interval == 0 {
                let report = evaluate_actor(&state.actor, spec, config.eval_episodes, derive_seed(seed, &[stream::EVAL, step as u64]));
                m.eval_return = Some(report.0);
                m.eval_cost = Some(report.1);
            }
        }
        log.push(m);
    }
    Ok(log)
}

/// `(mean return, mean discounted cost)` of the deterministic actor.
pub fn evaluate_actor(actor: &ActorPolicy, spec: &CmdpSpec, episodes: usize, seed: u64) -> (f64, f64) {
    let mut policy = |s: &[f64]| actor.act(s).unwrap_or_else(|_| vec![f64::NAN; actor.action_dim()]);
    let report = evaluate_on_boiler(spec, &mut policy, episodes, seed).expect("valid environment spec");
    (report.mean_return, report.mean_discounted_cost)
}

/// Pretrains, then runs the primal-dual loop.
pub fn train_more(
    dataset: &OfflineDataset,
    models: Models<'_>,
    config: &AgentConfig,
    pretrain_config: &PretrainConfig,
    env: Option<&CmdpSpec>,
    seed: u64,
) -> Result<(AgentState, Vec<StepMetrics>)> {
    let (actor, critics) = pretrain(dataset, config, pretrain_config, seed)?;
    let mut state = AgentState::new(actor, critics, config)?;
    let log = train_more_from(&mut state, dataset, models, config, env, seed)?;
    Ok((state, log))
}
