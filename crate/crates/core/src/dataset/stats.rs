use serde::{Deserialize, Serialize};

use super::Transition;
use crate::error::{Error, Result};
use crate::nn::Matrix;

pub const STD_FLOOR: f64 = 1e-6;

/// Per-dimension standardization constants. Rewards and costs fed to the
/// agent stay on their raw scale; the reward statistics are informational.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub state_mean: Vec<f64>,
    pub state_std: Vec<f64>,
    pub action_mean: Vec<f64>,
    pub action_std: Vec<f64>,
    pub reward_mean: f64,
    pub reward_std: f64,
}

impl NormalizationStats {
    pub fn identity(state_dim: usize, action_dim: usize) -> Self {
        NormalizationStats {
            state_mean: vec![0.0; state_dim],
            state_std: vec![1.0; state_dim],
            action_mean: vec![0.0; action_dim],
            action_std: vec![1.0; action_dim],
            reward_mean: 0.0,
            reward_std: 1.0,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_mean.len()
    }

    pub fn action_dim(&self) -> usize {
        self.action_mean.len()
    }

    pub fn normalize_state(&self, s: &[f64]) -> Vec<f64> {
        standardize(s, &self.state_mean, &self.state_std)
    }

    pub fn normalize_action(&self, a: &[f64]) -> Vec<f64> {
        standardize(a, &self.action_mean, &self.action_std)
    }

    /// Standardized `[s, a]` as one row.
    pub fn normalize_pair(&self, s: &[f64], a: &[f64]) -> Vec<f64> {
        let mut out = self.normalize_state(s);
        out.extend(self.normalize_action(a));
        out
    }

    pub fn normalize_states(&self, states: &Matrix) -> Matrix {
        standardize_rows(states, &self.state_mean, &self.state_std)
    }

    pub fn normalize_actions(&self, actions: &Matrix) -> Matrix {
        standardize_rows(actions, &self.action_mean, &self.action_std)
    }
}

fn standardize(x: &[f64], mean: &[f64], std: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(mean)
        .zip(std)
        .map(|((v, m), s)| (v - m) / s)
        .collect()
}

fn standardize_rows(x: &Matrix, mean: &[f64], std: &[f64]) -> Matrix {
    assert_eq!(x.cols(), mean.len(), "normalization width");
    let mut out = x.clone();
    let cols = x.cols();
    for (i, v) in out.as_mut_slice().iter_mut().enumerate() {
        let j = i % cols;
        *v = (*v - mean[j]) / std[j];
    }
    out
}

/// Mean and population standard deviation of equally long vectors, std floored.
pub(crate) fn mean_std_rows<'a>(rows: impl Iterator<Item = &'a [f64]> + Clone, dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut n = 0usize;
    let mut mean = vec![0.0; dim];
    for r in rows.clone() {
        n += 1;
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    let nf = n.max(1) as f64;
    mean.iter_mut().for_each(|m| *m /= nf);
    let mut var = vec![0.0; dim];
    for r in rows {
        for ((acc, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *acc += (v - m) * (v - m);
        }
    }
    let std = var.iter().map(|v| (v / nf).sqrt().max(STD_FLOOR)).collect();
    (mean, std)
}

/// Statistics over `s` and `s'` pooled, `a`, and `r`.
pub fn compute_normalization(transitions: &[Transition]) -> Result<NormalizationStats> {
    let first = transitions.first().ok_or(Error::Empty("dataset"))?;
    let (state_mean, state_std) = mean_std_rows(
        transitions
            .iter()
            .flat_map(|t| [t.s.as_slice(), t.s_next.as_slice()]),
        first.s.len(),
    );
    let (action_mean, action_std) =
        mean_std_rows(transitions.iter().map(|t| t.a.as_slice()), first.a.len());
    let rewards: Vec<[f64; 1]> = transitions.iter().map(|t| [t.r]).collect();
    let (rm, rs) = mean_std_rows(rewards.iter().map(|r| r.as_slice()), 1);
    Ok(NormalizationStats {
        state_mean,
        state_std,
        action_mean,
        action_std,
        reward_mean: rm[0],
        reward_std: rs[0],
    })
}

/// Nearest-rank percentile: the element at sorted index `ceil(beta/100 * n) - 1`.
pub fn nearest_rank_percentile(values: &[f64], beta: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("percentile input"));
    }
    if !(beta > 0.0 && beta <= 100.0) {
        return Err(Error::Config(format!("percentile must be in (0, 100], got {beta}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let rank = ((beta / 100.0) * n as f64).ceil() as usize;
    Ok(sorted[rank.clamp(1, n) - 1])
}
