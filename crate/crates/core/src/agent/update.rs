use serde::{Deserialize, Serialize};

use super::filter::LocalBuffer;
use super::networks::{ActorPolicy, CriticSet, COST, REWARD_A, REWARD_B};
use crate::error::{Error, Result};
use crate::nn::{AdamState, Matrix, Mlp};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagrangeState {
    pub lambda: f64,
    pub step_size: f64,
    pub cost_limit: f64,
}

impl LagrangeState {
    pub fn new(lambda: f64, step_size: f64, cost_limit: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !(step_size > 0.0) || !cost_limit.is_finite() {
            return Err(Error::Config(
                "lambda must be nonnegative, step size positive, cost limit finite".into(),
            ));
        }
        Ok(LagrangeState {
            lambda,
            step_size,
            cost_limit,
        })
    }

    /// Projected dual ascent `λ <- [λ + η (E[Q_c] - l)]⁺`.
    pub fn ascend(&mut self, mean_cost_value: f64) {
        self.lambda = (self.lambda + self.step_size * (mean_cost_value - self.cost_limit)).max(0.0);
    }
}

/// Mean `Q_c(s, π(s))` over `states`.
pub fn mean_cost_value(states: &Matrix, actor: &ActorPolicy, critics: &CriticSet) -> f64 {
    let actions = actor.act_batch(states);
    let q = critics.online_values(COST, states, &actions);
    q.iter().sum::<f64>() / q.len() as f64
}

/// Dual step on the buffer states; returns the mean cost value used.
pub fn lambda_update(lagrange: &mut LagrangeState, states: &Matrix, actor: &ActorPolicy, critics: &CriticSet) -> f64 {
    let m = mean_cost_value(states, actor, critics);
    lagrange.ascend(m);
    m
}

/// Regression targets for the critics: `r + γ min_j Q'_rj(s', π(s'))` and
/// `c + γ Q'_c(s', π(s'))`.
pub fn td_targets(buffer: &LocalBuffer, critics: &CriticSet, actor: &ActorPolicy, gamma: f64) -> (Vec<f64>, Vec<f64>) {
    let next = buffer.next_states();
    let next_actions = actor.act_batch(&next);
    let x = critics.inputs(&next, &next_actions);
    let qa = critics.values(critics.target(REWARD_A), &x);
    let qb = critics.values(critics.target(REWARD_B), &x);
    let qc = critics.values(critics.target(COST), &x);
    let reward = buffer
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| r.r + gamma * qa[i].min(qb[i]))
        .collect();
    let cost = buffer
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| r.c + gamma * qc[i])
        .collect();
    (reward, cost)
}

/// Mean squared error of `value_scale · net(inputs)` against `targets`, and
/// its parameter gradient.
pub fn td_loss_gradient(net: &Mlp, value_scale: f64, inputs: &Matrix, targets: &[f64]) -> (f64, Vec<f64>) {
    let trace = net.trace(inputs.clone());
    let n = targets.len() as f64;
    let mut loss = 0.0;
    let mut d_out = Matrix::zeros(targets.len(), 1);
    for (i, &t) in targets.iter().enumerate() {
        let err = value_scale * trace.output().get(i, 0) - t;
        loss += err * err;
        d_out.set(i, 0, 2.0 * err * value_scale / n);
    }
    let mut grad = vec![0.0; net.params().len()];
    net.backward(&trace, &d_out, &mut grad, false);
    (loss / n, grad)
}

pub fn td_loss(net: &Mlp, value_scale: f64, inputs: &Matrix, targets: &[f64]) -> f64 {
    let out = net.forward_batch(inputs);
    targets
        .iter()
        .enumerate()
        .map(|(i, t)| (value_scale * out.get(i, 0) - t).powi(2))
        .sum::<f64>()
        / targets.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticLosses {
    pub reward: [f64; 2],
    pub cost: f64,
}

/// One Adam step per critic on its TD error. `optimizers` follow the
/// critic order (reward A, reward B, cost).
pub fn critic_update(
    buffer: &LocalBuffer,
    critics: &mut CriticSet,
    actor: &ActorPolicy,
    gamma: f64,
    optimizers: &mut [AdamState; 3],
) -> Result<CriticLosses> {
    if buffer.is_empty() {
        return Err(Error::Empty("local buffer"));
    }
    let (reward_targets, cost_targets) = td_targets(buffer, critics, actor, gamma);
    if let Some(i) = reward_targets
        .iter()
        .chain(&cost_targets)
        .position(|v| !v.is_finite())
    {
        return Err(Error::divergence(
            "critic update",
            format!("buffer row {}", i % buffer.len()),
            "non-finite TD target".to_string(),
        ));
    }
    let x = critics.inputs(&buffer.states(), &buffer.actions());
    let scale = critics.value_scale();
    let mut losses = [0.0; 3];
    for (which, targets) in [(REWARD_A, &reward_targets), (REWARD_B, &reward_targets), (COST, &cost_targets)] {
        let (loss, grad) = td_loss_gradient(critics.online(which), scale, &x, targets);
        optimizers[which]
            .step(critics.online_mut(which).params_mut(), &grad)
            .map_err(|e| Error::divergence("critic update", format!("critic {which}"), e.to_string()))?;
        losses[which] = loss;
    }
    Ok(CriticLosses {
        reward: [losses[REWARD_A], losses[REWARD_B]],
        cost: losses[COST],
    })
}

/// `mean_s [min_j Q_rj(s, π(s)) - λ (Q_c(s, π(s)) - l)]` with online critics.
pub fn actor_objective(states: &Matrix, actor: &ActorPolicy, critics: &CriticSet, lagrange: &LagrangeState) -> f64 {
    let actions = actor.act_batch(states);
    let x = critics.inputs(states, &actions);
    let qa = critics.values(critics.online(REWARD_A), &x);
    let qb = critics.values(critics.online(REWARD_B), &x);
    let qc = critics.values(critics.online(COST), &x);
    let n = qa.len() as f64;
    (0..qa.len())
        .map(|i| qa[i].min(qb[i]) - lagrange.lambda * (qc[i] - lagrange.cost_limit))
        .sum::<f64>()
        / n
}

/// The objective and its gradient with respect to the actor parameters;
/// critic parameters are treated as constants.
pub fn actor_objective_gradient(
    states: &Matrix,
    actor: &ActorPolicy,
    critics: &CriticSet,
    lagrange: &LagrangeState,
) -> (f64, Vec<f64>) {
    let n = states.rows();
    let actor_trace = actor.trace(states);
    let actions = actor_trace.output();
    let x = critics.inputs(states, actions);
    let scale = critics.value_scale();
    let traces: Vec<_> = [REWARD_A, REWARD_B, COST]
        .iter()
        .map(|&k| critics.online(k).trace(x.clone()))
        .collect();
    let q = |k: usize, i: usize| scale * traces[k].output().get(i, 0);

    let mut objective = 0.0;
    let mut weights = [Matrix::zeros(n, 1), Matrix::zeros(n, 1), Matrix::zeros(n, 1)];
    for i in 0..n {
        let pick = if q(REWARD_A, i) <= q(REWARD_B, i) { REWARD_A } else { REWARD_B };
        objective += q(pick, i) - lagrange.lambda * (q(COST, i) - lagrange.cost_limit);
        weights[pick].set(i, 0, scale / n as f64);
        weights[COST].set(i, 0, -lagrange.lambda * scale / n as f64);
    }
    objective /= n as f64;

    let sd = actor.state_dim();
    let action_std = &critics.norm().action_std;
    let mut d_actions = Matrix::zeros(n, actor.action_dim());
    for k in [REWARD_A, REWARD_B, COST] {
        let net = critics.online(k);
        let mut scratch = vec![0.0; net.params().len()];
        let d_x = net
            .backward(&traces[k], &weights[k], &mut scratch, true)
            .expect("input gradient requested");
        for i in 0..n {
            for (j, d) in d_actions.row_mut(i).iter_mut().enumerate() {
                *d += d_x.get(i, sd + j) / action_std[j];
            }
        }
    }
    let mut grad = vec![0.0; actor.network().params().len()];
    actor.network().backward(&actor_trace, &d_actions, &mut grad, false);
    (objective, grad)
}

/// One Adam ascent step on the actor objective with λ held fixed.
pub fn actor_update(
    states: &Matrix,
    actor: &mut ActorPolicy,
    critics: &CriticSet,
    lagrange: &LagrangeState,
    optimizer: &mut AdamState,
) -> Result<f64> {
    let (objective, mut grad) = actor_objective_gradient(states, actor, critics, lagrange);
    if !objective.is_finite() {
        return Err(Error::divergence("actor update", "objective", format!("{objective}")));
    }
    grad.iter_mut().for_each(|g| *g = -*g);
    optimizer
        .step(actor.network_mut().params_mut(), &grad)
        .map_err(|e| Error::divergence("actor update", "gradient", e.to_string()))?;
    Ok(objective)
}
