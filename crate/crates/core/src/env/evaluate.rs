use super::boiler::{BoilerEnv, CmdpSpec, Environment};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream};

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub mean_return: f64,
    pub mean_discounted_return: f64,
    pub mean_discounted_cost: f64,
    pub returns: Vec<f64>,
    pub discounted_returns: Vec<f64>,
    pub discounted_costs: Vec<f64>,
    /// Episodes abandoned because the policy emitted a non-finite action.
    pub aborted_episodes: Vec<usize>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Monte-Carlo estimates of undiscounted return and discounted reward and
/// cost over fresh episodes of `env`.
pub fn evaluate_policy<E: Environment>(
    env: &mut E,
    policy: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    num_episodes: usize,
    seed: u64,
) -> Result<EvaluationReport> {
    if num_episodes == 0 {
        return Err(Error::Config("num_episodes must be >= 1".into()));
    }
    let gamma = env.gamma();
    let mut returns = Vec::with_capacity(num_episodes);
    let mut discounted_returns = Vec::with_capacity(num_episodes);
    let mut discounted_costs = Vec::with_capacity(num_episodes);
    let mut aborted_episodes = Vec::new();
    'episodes: for episode in 0..num_episodes {
        let mut obs = env.reset(derive_seed(seed, &[stream::EVAL, episode as u64]));
        let (mut ret, mut dret, mut dcost, mut disc) = (0.0, 0.0, 0.0, 1.0);
        loop {
            let action = policy(&obs);
            if action.iter().any(|a| !a.is_finite()) {
                aborted_episodes.push(episode);
                continue 'episodes;
            }
            let fb = env.step(&action)?;
            ret += fb.reward;
            dret += disc * fb.reward;
            dcost += disc * fb.combined_cost;
            disc *= gamma;
            obs = fb.observation;
            if fb.done {
                break;
            }
        }
        returns.push(ret);
        discounted_returns.push(dret);
        discounted_costs.push(dcost);
    }
    if returns.is_empty() {
        return Err(Error::NonFinite {
            context: "policy action in every evaluation episode".into(),
            index: 0,
        });
    }
    Ok(EvaluationReport {
        mean_return: mean(&returns),
        mean_discounted_return: mean(&discounted_returns),
        mean_discounted_cost: mean(&discounted_costs),
        returns,
        discounted_returns,
        discounted_costs,
        aborted_episodes,
    })
}

/// [`evaluate_policy`] on a fresh BoilerSim instance.
pub fn evaluate_on_boiler(
    spec: &CmdpSpec,
    policy: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    num_episodes: usize,
    seed: u64,
) -> Result<EvaluationReport> {
    let mut env = BoilerEnv::new(spec.clone())?;
    evaluate_policy(&mut env, policy, num_episodes, seed)
}
