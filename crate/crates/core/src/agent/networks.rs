use serde::{Deserialize, Serialize};

use crate::dataset::NormalizationStats;
use crate::error::{ensure_finite, Error, Result};
use crate::nn::{Activation, Matrix, Mlp, MlpSpec, Trace};
use crate::rng::{fill_normal, rng_from, stream, Rng};

/// Deterministic tanh policy over standardized states. Actions live in
/// `[-1, 1]^action_dim`; `exploration_std` is only used for simulated
/// rollouts.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorPolicy {
    network: Mlp,
    norm: NormalizationStats,
    exploration_std: f64,
}

impl ActorPolicy {
    pub fn init(norm: NormalizationStats, hidden: &[usize], exploration_std: f64, rng: &mut Rng) -> Self {
        let spec = MlpSpec::new(norm.state_dim(), hidden, norm.action_dim())
            .with_output_activation(Activation::Tanh);
        ActorPolicy {
            network: Mlp::init(spec, rng),
            norm,
            exploration_std,
        }
    }

    pub fn from_parts(network: Mlp, norm: NormalizationStats, exploration_std: f64) -> Result<Self> {
        if network.input_dim() != norm.state_dim() {
            return Err(Error::dim("actor input", norm.state_dim(), network.input_dim()));
        }
        if network.output_dim() != norm.action_dim() {
            return Err(Error::dim("actor output", norm.action_dim(), network.output_dim()));
        }
        if network.spec().output_activation != Activation::Tanh {
            return Err(Error::Config("actor output activation must be tanh".into()));
        }
        Ok(ActorPolicy {
            network,
            norm,
            exploration_std,
        })
    }

    pub fn network(&self) -> &Mlp {
        &self.network
    }

    pub fn network_mut(&mut self) -> &mut Mlp {
        &mut self.network
    }

    pub fn norm(&self) -> &NormalizationStats {
        &self.norm
    }

    pub fn exploration_std(&self) -> f64 {
        self.exploration_std
    }

    pub fn state_dim(&self) -> usize {
        self.norm.state_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.norm.action_dim()
    }

    pub fn act(&self, s: &[f64]) -> Result<Vec<f64>> {
        if s.len() != self.state_dim() {
            return Err(Error::dim("actor state", self.state_dim(), s.len()));
        }
        ensure_finite("actor state", s)?;
        Ok(self.act_batch(&Matrix::row_vector(s)).into_vec())
    }

    pub fn act_batch(&self, states: &Matrix) -> Matrix {
        self.network.forward_batch(&self.norm.normalize_states(states))
    }

    pub(crate) fn trace(&self, states: &Matrix) -> Trace {
        self.network.trace(self.norm.normalize_states(states))
    }

    /// Mean action plus seeded Gaussian exploration noise, clipped to the
    /// action box.
    pub fn explore(&self, mean_action: &[f64], seed: u64) -> Vec<f64> {
        let mut noise = vec![0.0; mean_action.len()];
        fill_normal(&mut rng_from(seed, &[stream::EXPLORATION]), self.exploration_std, &mut noise);
        mean_action
            .iter()
            .zip(&noise)
            .map(|(a, n)| (a + n).clamp(-1.0, 1.0))
            .collect()
    }
}

pub const REWARD_A: usize = 0;
pub const REWARD_B: usize = 1;
pub const COST: usize = 2;

/// Two reward critics, one cost critic, and their target copies. Every
/// critic reads standardized `[s, a]` and reports `value_scale` times its
/// network output.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticSet {
    online: [Mlp; 3],
    target: [Mlp; 3],
    norm: NormalizationStats,
    value_scale: f64,
    soft_update_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticShape {
    pub hidden: Vec<usize>,
    pub value_scale: f64,
    pub soft_update_rate: f64,
}

impl CriticSet {
    pub fn init(norm: NormalizationStats, shape: &CriticShape, rng: &mut Rng) -> Self {
        let spec = MlpSpec::new(norm.state_dim() + norm.action_dim(), &shape.hidden, 1);
        // Output layers start at zero so initial values are 0 rather than
        // value_scale times a random offset.
        let last = shape.hidden.last().copied().unwrap_or(spec.input_dim) + 1;
        let mut make = || {
            let mut net = Mlp::init(spec.clone(), rng);
            let n = net.params().len();
            net.params_mut()[n - last..].fill(0.0);
            net
        };
        let online = [make(), make(), make()];
        CriticSet {
            target: online.clone(),
            online,
            norm,
            value_scale: shape.value_scale,
            soft_update_rate: shape.soft_update_rate,
        }
    }

    /// Targets start as exact copies of `online`.
    pub fn from_online(online: [Mlp; 3], norm: NormalizationStats, value_scale: f64, soft_update_rate: f64) -> Result<Self> {
        let target = online.clone();
        CriticSet::from_parts(online, target, norm, value_scale, soft_update_rate)
    }

    pub fn from_parts(
        online: [Mlp; 3],
        target: [Mlp; 3],
        norm: NormalizationStats,
        value_scale: f64,
        soft_update_rate: f64,
    ) -> Result<Self> {
        let input = norm.state_dim() + norm.action_dim();
        for (o, t) in online.iter().zip(&target) {
            if o.spec() != t.spec() {
                return Err(Error::Config("target critic shape differs from online critic".into()));
            }
            if o.input_dim() != input || o.output_dim() != 1 {
                return Err(Error::dim("critic input", input, o.input_dim()));
            }
        }
        if !(0.0..=1.0).contains(&soft_update_rate) {
            return Err(Error::Config("soft_update_rate must lie in [0, 1]".into()));
        }
        Ok(CriticSet {
            online,
            target,
            norm,
            value_scale,
            soft_update_rate,
        })
    }

    pub fn online(&self, which: usize) -> &Mlp {
        &self.online[which]
    }

    pub fn online_mut(&mut self, which: usize) -> &mut Mlp {
        &mut self.online[which]
    }

    pub fn online_clone(&self) -> [Mlp; 3] {
        self.online.clone()
    }

    pub fn target(&self, which: usize) -> &Mlp {
        &self.target[which]
    }

    pub fn target_mut(&mut self, which: usize) -> &mut Mlp {
        &mut self.target[which]
    }

    pub fn norm(&self) -> &NormalizationStats {
        &self.norm
    }

    pub fn value_scale(&self) -> f64 {
        self.value_scale
    }

    pub fn soft_update_rate(&self) -> f64 {
        self.soft_update_rate
    }

    pub fn set_soft_update_rate(&mut self, rho: f64) {
        self.soft_update_rate = rho;
    }

    pub fn inputs(&self, states: &Matrix, actions: &Matrix) -> Matrix {
        Matrix::hcat(&self.norm.normalize_states(states), &self.norm.normalize_actions(actions))
    }

    pub fn values(&self, net: &Mlp, inputs: &Matrix) -> Vec<f64> {
        net.forward_batch(inputs)
            .into_vec()
            .into_iter()
            .map(|o| self.value_scale * o)
            .collect()
    }

    pub fn online_values(&self, which: usize, states: &Matrix, actions: &Matrix) -> Vec<f64> {
        self.values(&self.online[which], &self.inputs(states, actions))
    }

    pub fn target_values(&self, which: usize, states: &Matrix, actions: &Matrix) -> Vec<f64> {
        self.values(&self.target[which], &self.inputs(states, actions))
    }

    /// `φ' <- ρ φ + (1 - ρ) φ'` for all three critics.
    pub fn soft_update(&mut self) {
        let rho = self.soft_update_rate;
        for (o, t) in self.online.iter().zip(self.target.iter_mut()) {
            for (tp, op) in t.params_mut().iter_mut().zip(o.params()) {
                *tp = rho * op + (1.0 - rho) * *tp;
            }
        }
    }

    pub fn sync_targets(&mut self) {
        self.target = self.online.clone();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn critics(rho: f64) -> CriticSet {
        let shape = CriticShape {
            hidden: vec![4],
            value_scale: 1.0,
            soft_update_rate: rho,
        };
        CriticSet::init(NormalizationStats::identity(2, 1), &shape, &mut rng_from(1, &[]))
    }

    #[test]
    fn targets_start_as_copies() {
        let c = critics(0.005);
        for k in 0..3 {
            assert_eq!(c.online(k), c.target(k));
        }
        assert_ne!(c.online(REWARD_A), c.online(REWARD_B));
    }

    #[test]
    fn soft_update_extremes_and_hand_value() {
        let mut c = critics(1.0);
        for k in 0..3 {
            c.online_mut(k).params_mut().iter_mut().for_each(|p| *p += 0.5);
        }
        c.soft_update();
        for k in 0..3 {
            assert_eq!(c.online(k), c.target(k));
        }

        let mut c = critics(0.0);
        let before = c.target(COST).clone();
        c.online_mut(COST).params_mut().iter_mut().for_each(|p| *p += 0.5);
        c.soft_update();
        assert_eq!(c.target(COST), &before);

        let mut c = critics(0.005);
        for k in 0..3 {
            c.online_mut(k).params_mut().fill(1.0);
            c.target_mut(k).params_mut().fill(0.0);
        }
        c.soft_update();
        for k in 0..3 {
            assert!(c.target(k).params().iter().all(|p| (p - 0.005).abs() < 1e-12));
        }
    }

    #[test]
    fn actor_actions_stay_in_the_box() {
        let mut rng = rng_from(3, &[]);
        let mut actor = ActorPolicy::init(NormalizationStats::identity(2, 2), &[8], 0.5, &mut rng);
        actor.network_mut().params_mut().iter_mut().for_each(|p| *p *= 4.0);
        for i in 0..50 {
            let s = [i as f64 - 25.0, 3.0];
            let a = actor.act(&s).unwrap();
            assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
            let noisy = actor.explore(&a, i);
            assert!(noisy.iter().all(|v| (-1.0..=1.0).contains(v)));
            assert_eq!(noisy, actor.explore(&a, i));
        }
        assert!(actor.act(&[f64::NAN, 0.0]).is_err());
    }
}
