use serde::{Deserialize, Serialize};

use super::networks::ActorPolicy;
use crate::dataset::Transition;
use crate::density::{elbo_density_batch, DensityModel};
use crate::dynamics::{sensitivity_batch, DynamicsModel, SensitivityConfig};
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::rng::{derive_seed, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    pub kappa: f64,
    pub rollout_length: usize,
    pub sensitivity: SensitivityConfig,
    pub density_z_samples: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            kappa: 5.0,
            rollout_length: 5,
            sensitivity: SensitivityConfig::default(),
            density_z_samples: 1,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= 0.0) {
            return Err(Error::Config("kappa must be nonnegative".into()));
        }
        if self.rollout_length == 0 {
            return Err(Error::Config("rollout_length must be at least 1".into()));
        }
        if self.density_z_samples == 0 {
            return Err(Error::Config("density_z_samples must be at least 1".into()));
        }
        self.sensitivity.validate()
    }
}

/// Sensitivity and density cut-offs together with the percentiles they came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub beta_u: f64,
    pub beta_p: f64,
    pub sensitivity: f64,
    pub density: f64,
}

impl Thresholds {
    /// Admits every simulated step as positive.
    pub fn disabled() -> Self {
        Thresholds {
            beta_u: 100.0,
            beta_p: 0.0,
            sensitivity: f64::INFINITY,
            density: f64::NEG_INFINITY,
        }
    }
}

/// `r̂ / (1 + [κ (l_p - p_m)]⁺)`.
pub fn penalize_reward(r_hat: f64, density: f64, density_threshold: f64, kappa: f64) -> f64 {
    let gap = kappa * (density_threshold - density);
    r_hat / (1.0 + gap.max(0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTransition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub r_hat: f64,
    pub r_used: f64,
    pub cost: f64,
    pub s_next: Vec<f64>,
    pub sensitivity: f64,
    pub density: f64,
    /// Index of the real transition the rollout started from.
    pub source: usize,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discard {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub sensitivity: f64,
    pub source: usize,
    pub depth: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExplorationOutcome {
    pub positive: Vec<SimTransition>,
    pub negative: Vec<SimTransition>,
    pub discarded: Vec<Discard>,
}

/// Seed for rollout `source` at depth `depth`; it drives the exploration
/// noise, the sensitivity perturbations and the density samples.
pub fn rollout_seed(step_seed: u64, source: usize, depth: usize) -> u64 {
    derive_seed(step_seed, &[stream::ROLLOUT, source as u64, depth as u64])
}

/// Rolls the actor through the learned dynamics from every start state for
/// up to `rollout_length` steps. A step whose sensitivity reaches the
/// threshold is discarded and ends its rollout; admitted steps are split by
/// density, with low-density rewards penalized. Outputs are ordered by
/// `(source, depth)`.
pub fn restrictive_exploration(
    start_states: &Matrix,
    actor: &ActorPolicy,
    dynamics: &DynamicsModel,
    density: &DensityModel,
    config: &FilterConfig,
    thresholds: &Thresholds,
    step_seed: u64,
) -> ExplorationOutcome {
    let mut outcome = ExplorationOutcome::default();
    let mut alive: Vec<usize> = (0..start_states.rows()).collect();
    let mut states = start_states.clone();
    for depth in 0..config.rollout_length {
        if alive.is_empty() {
            break;
        }
        let seeds: Vec<u64> = alive.iter().map(|&i| rollout_seed(step_seed, i, depth)).collect();
        let means = actor.act_batch(&states);
        let mut actions = Matrix::zeros(alive.len(), actor.action_dim());
        for (k, &seed) in seeds.iter().enumerate() {
            let a = actor.explore(means.row(k), seed);
            actions.row_mut(k).copy_from_slice(&a);
        }
        let (next, rewards, costs) = dynamics.predict_batch(&states, &actions);
        let u = sensitivity_batch(dynamics, &states, &actions, &config.sensitivity, &seeds);

        let trusted: Vec<usize> = (0..alive.len()).filter(|&k| u[k] < thresholds.sensitivity).collect();
        let p_m = elbo_density_batch(
            density,
            &states.select_rows(&trusted),
            &actions.select_rows(&trusted),
            config.density_z_samples,
            &trusted.iter().map(|&k| seeds[k]).collect::<Vec<_>>(),
        );
        let mut p_iter = p_m.into_iter();
        let mut survivors = Vec::with_capacity(trusted.len());
        for (k, &source) in alive.iter().enumerate() {
            if u[k] >= thresholds.sensitivity {
                outcome.discarded.push(Discard {
                    s: states.row(k).to_vec(),
                    a: actions.row(k).to_vec(),
                    sensitivity: u[k],
                    source,
                    depth,
                });
                continue;
            }
            let p = p_iter.next().expect("one density per trusted step");
            let positive = p > thresholds.density;
            let r_used = if positive {
                rewards[k]
            } else {
                penalize_reward(rewards[k], p, thresholds.density, config.kappa)
            };
            let record = SimTransition {
                s: states.row(k).to_vec(),
                a: actions.row(k).to_vec(),
                r_hat: rewards[k],
                r_used,
                cost: costs[k],
                s_next: next.row(k).to_vec(),
                sensitivity: u[k],
                density: p,
                source,
                depth,
            };
            if positive {
                outcome.positive.push(record);
            } else {
                outcome.negative.push(record);
            }
            survivors.push(k);
        }
        alive = survivors.iter().map(|&k| alive[k]).collect();
        states = next.select_rows(&survivors);
    }
    let key = |t: &SimTransition| (t.source, t.depth);
    outcome.positive.sort_by_key(key);
    outcome.negative.sort_by_key(key);
    outcome.discarded.sort_by_key(|d| (d.source, d.depth));
    outcome
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Real,
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BufferRecord {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub r: f64,
    pub c: f64,
    pub s_next: Vec<f64>,
    pub origin: Origin,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LocalBuffer {
    pub records: Vec<BufferRecord>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OriginCounts {
    pub real: usize,
    pub positive: usize,
    pub negative: usize,
}

impl LocalBuffer {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn counts(&self) -> OriginCounts {
        let mut c = OriginCounts::default();
        for r in &self.records {
            match r.origin {
                Origin::Real => c.real += 1,
                Origin::Positive => c.positive += 1,
                Origin::Negative => c.negative += 1,
            }
        }
        c
    }

    pub fn states(&self) -> Matrix {
        Matrix::from_rows(&self.records.iter().map(|r| r.s.as_slice()).collect::<Vec<_>>())
    }

    pub fn actions(&self) -> Matrix {
        Matrix::from_rows(&self.records.iter().map(|r| r.a.as_slice()).collect::<Vec<_>>())
    }

    pub fn next_states(&self) -> Matrix {
        Matrix::from_rows(&self.records.iter().map(|r| r.s_next.as_slice()).collect::<Vec<_>>())
    }
}

/// Real records first, then positive, then negative simulated records.
pub fn build_local_buffer(real: &[&Transition], outcome: &ExplorationOutcome) -> LocalBuffer {
    let mut records = Vec::with_capacity(real.len() + outcome.positive.len() + outcome.negative.len());
    records.extend(real.iter().map(|t| BufferRecord {
        s: t.s.clone(),
        a: t.a.clone(),
        r: t.r,
        c: t.combined_cost,
        s_next: t.s_next.clone(),
        origin: Origin::Real,
    }));
    for (set, origin) in [(&outcome.positive, Origin::Positive), (&outcome.negative, Origin::Negative)] {
        records.extend(set.iter().map(|t| BufferRecord {
            s: t.s.clone(),
            a: t.a.clone(),
            r: t.r_used,
            c: t.cost,
            s_next: t.s_next.clone(),
            origin,
        }));
    }
    LocalBuffer { records }
}
