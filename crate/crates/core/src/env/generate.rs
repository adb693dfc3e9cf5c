use std::collections::BTreeMap;

use super::behavior::{noisy_action, BehaviorPolicyConfig};
use super::boiler::{BoilerEnv, CmdpSpec, Environment, ACTION_DIM, COST_DIM, STATE_DIM};
use crate::dataset::{OfflineDataset, Transition};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from, stream};

/// Rolls whole episodes of the behavior controller until `num_transitions`
/// records are collected (the final episode is cut short if needed).
pub fn generate_dataset(
    spec: &CmdpSpec,
    config: &BehaviorPolicyConfig,
    num_transitions: usize,
    seed: u64,
) -> Result<OfflineDataset> {
    spec.validate()?;
    config.validate()?;
    if num_transitions < spec.episode_length {
        return Err(Error::Config(format!(
            "num_transitions ({num_transitions}) is below one episode ({})",
            spec.episode_length
        )));
    }
    let mut env = BoilerEnv::new(spec.clone())?;
    let mut transitions = Vec::with_capacity(num_transitions);
    let mut episode = 0u64;
    while transitions.len() < num_transitions {
        let mut obs = env.reset(derive_seed(seed, &[stream::RESET, episode]));
        let mut behavior_rng = rng_from(config.seed, &[stream::BEHAVIOR, episode]);
        loop {
            let tier = config.tier_of(transitions.len(), num_transitions);
            let std = config.exploration_std[tier];
            let state = *env.state();
            let action = noisy_action(&state, std, &mut behavior_rng);
            let out = env.step_full(&action)?;
            let next_obs = out.next.observation();
            transitions.push(Transition {
                s: obs,
                a: action,
                r: out.reward,
                cost_vector: out.costs.to_vec(),
                combined_cost: out.combined_cost,
                s_next: next_obs.clone(),
                done: out.done,
            });
            obs = next_obs;
            if out.done || transitions.len() == num_transitions {
                break;
            }
        }
        episode += 1;
    }

    let mut metadata = BTreeMap::new();
    metadata.insert("generator".into(), format!("more-core {}", env!("CARGO_PKG_VERSION")));
    metadata.insert("kind".into(), config.kind.as_str().into());
    metadata.insert("seed".into(), seed.to_string());
    metadata.insert("behavior_seed".into(), config.seed.to_string());
    metadata.insert(
        "exploration_std".into(),
        config
            .exploration_std
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    metadata.insert("noise_tiers".into(), config.tiers().to_string());
    metadata.insert("episodes".into(), episode.to_string());
    metadata.insert("spec_hash".into(), spec.hash());
    // Wall-clock time would break byte-for-byte reproducibility.
    metadata.insert(
        "created".into(),
        std::env::var("SOURCE_DATE_EPOCH").unwrap_or_else(|_| "0".into()),
    );
    OfflineDataset::new(transitions, STATE_DIM, ACTION_DIM, COST_DIM, metadata)
}
