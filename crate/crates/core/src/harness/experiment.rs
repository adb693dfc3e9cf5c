//! End-to-end recipes: data generation, model fitting, threshold
//! pre-evaluation, agent training, ablation grids and cost-limit sweeps.

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::agent::{
    evaluate_actor, pretrain, train_more_from, ActorPolicy, AgentConfig, AgentState, CriticSet, FilterConfig,
    Models, StepMetrics, Thresholds,
};
use crate::dataset::{load_dataset, OfflineDataset};
use crate::density::{train_vae, DensityModel, VaeReport};
use crate::dynamics::{train_dynamics, DynamicsModel, DynamicsReport};
use crate::env::generate_dataset;
use crate::error::{Error, Result};
use crate::thresholds::{pre_evaluate, PercentileThresholds, PreEvaluation};

/// Loads `data.path` when set, otherwise generates the configured dataset.
pub fn obtain_dataset(cfg: &RunConfig) -> Result<OfflineDataset> {
    match &cfg.data.path {
        Some(path) => load_dataset(path),
        None => generate_dataset(
            &cfg.env,
            &cfg.data.behavior(cfg.seeds.behavior),
            cfg.data.transitions,
            cfg.seeds.data,
        ),
    }
}

pub struct LearnedModels {
    pub dynamics: DynamicsModel,
    pub density: DensityModel,
}

pub struct FittedModels {
    pub models: LearnedModels,
    pub dynamics_report: DynamicsReport,
    pub vae_report: VaeReport,
    pub pre_evaluation: PreEvaluation,
    pub thresholds: PercentileThresholds,
}

/// Trains dynamics on `dynamics_data` and the VAE on `dataset`, then
/// pre-evaluates both over `dataset`.
pub fn fit_models(dataset: &OfflineDataset, dynamics_data: &OfflineDataset, cfg: &RunConfig) -> Result<FittedModels> {
    let (dynamics, dynamics_report) = train_dynamics(dynamics_data, &cfg.dynamics, cfg.seeds.dynamics)?;
    let (density, vae_report) = train_vae(dataset, &cfg.vae, cfg.seeds.vae)?;
    let pre_evaluation = pre_evaluate(dataset, &dynamics, &density, &cfg.filter, cfg.seeds.thresholds)?;
    let thresholds = PercentileThresholds::from_arrays(
        &pre_evaluation,
        cfg.thresholds.beta_u,
        cfg.thresholds.beta_p,
        cfg.seeds.thresholds,
    )?;
    Ok(FittedModels {
        models: LearnedModels { dynamics, density },
        dynamics_report,
        vae_report,
        pre_evaluation,
        thresholds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Full,
    /// No sensitivity rejection, no density split, no penalty.
    NoFilter,
    /// Sensitivity rejection and density split kept, penalty removed.
    NoPenalty,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoFilter => "no-filter",
            Variant::NoPenalty => "no-penalty",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Variant::Full),
            "no-filter" => Ok(Variant::NoFilter),
            "no-penalty" => Ok(Variant::NoPenalty),
            other => Err(Error::Config(format!("unknown variant {other:?}"))),
        }
    }

    pub fn apply(self, filter: &FilterConfig, thresholds: Thresholds) -> (FilterConfig, Thresholds) {
        match self {
            Variant::Full => (filter.clone(), thresholds),
            Variant::NoFilter => (
                FilterConfig {
                    kappa: 0.0,
                    ..filter.clone()
                },
                Thresholds {
                    sensitivity: f64::INFINITY,
                    density: f64::NEG_INFINITY,
                    ..thresholds
                },
            ),
            Variant::NoPenalty => (
                FilterConfig {
                    kappa: 0.0,
                    ..filter.clone()
                },
                thresholds,
            ),
        }
    }
}

pub struct RunOutcome {
    pub state: AgentState,
    pub metrics: Vec<StepMetrics>,
    pub final_return: f64,
    pub final_cost: f64,
}

pub type Pretrained = (ActorPolicy, CriticSet);

pub fn pretrain_agent(dataset: &OfflineDataset, cfg: &RunConfig, seed: u64) -> Result<Pretrained> {
    pretrain(dataset, &cfg.agent, &cfg.pretrain, seed)
}

/// Runs the primal-dual loop from `pretrained` and evaluates the final
/// policy on the shared evaluation episodes.
pub fn run_agent(
    dataset: &OfflineDataset,
    models: &LearnedModels,
    thresholds: Thresholds,
    variant: Variant,
    pretrained: &Pretrained,
    agent: &AgentConfig,
    cfg: &RunConfig,
    seed: u64,
) -> Result<RunOutcome> {
    let (filter, thresholds) = variant.apply(&cfg.filter, thresholds);
    let mut state = AgentState::new(pretrained.0.clone(), pretrained.1.clone(), agent)?;
    let metrics = train_more_from(
        &mut state,
        dataset,
        Models {
            dynamics: &models.dynamics,
            density: &models.density,
            filter: &filter,
            thresholds: &thresholds,
        },
        agent,
        Some(&cfg.env),
        seed,
    )?;
    let (final_return, final_cost) = evaluate_actor(&state.actor, &cfg.env, cfg.final_eval_episodes, cfg.seeds.eval);
    Ok(RunOutcome {
        state,
        metrics,
        final_return,
        final_cost,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub beta_u: f64,
    pub beta_p: f64,
    pub variant: Variant,
    pub seed: u64,
    pub sensitivity_threshold: f64,
    pub density_threshold: f64,
    pub dataset_hash: String,
    pub final_return: f64,
    pub final_cost: f64,
}

/// One row per `(β_u, β_p, variant, seed)` cell; pretraining is shared per seed.
pub fn ablation_grid(
    dataset: &OfflineDataset,
    models: &LearnedModels,
    pre_evaluation: &PreEvaluation,
    betas_u: &[f64],
    betas_p: &[f64],
    variants: &[Variant],
    seeds: &[u64],
    cfg: &RunConfig,
) -> Result<Vec<AblationRow>> {
    let hash = dataset.content_hash();
    let mut rows = Vec::new();
    for &seed in seeds {
        let pretrained = pretrain_agent(dataset, cfg, seed)?;
        for &beta_u in betas_u {
            for &beta_p in betas_p {
                let thresholds = PercentileThresholds::from_arrays(pre_evaluation, beta_u, beta_p, 0)?.thresholds();
                for &variant in variants {
                    let out = run_agent(dataset, models, thresholds, variant, &pretrained, &cfg.agent, cfg, seed)?;
                    let (_, applied) = variant.apply(&cfg.filter, thresholds);
                    rows.push(AblationRow {
                        beta_u,
                        beta_p,
                        variant,
                        seed,
                        sensitivity_threshold: applied.sensitivity,
                        density_threshold: applied.density,
                        dataset_hash: hash.clone(),
                        final_return: out.final_return,
                        final_cost: out.final_cost,
                    });
                }
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub cost_limit: f64,
    pub seed: u64,
    pub mean_return: f64,
    pub discounted_cost: f64,
    pub satisfied: bool,
}

/// Trains one agent per `(limit, seed)` with the cost limit replaced.
pub fn cost_limit_sweep(
    dataset: &OfflineDataset,
    models: &LearnedModels,
    thresholds: Thresholds,
    limits: &[f64],
    seeds: &[u64],
    cfg: &RunConfig,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &seed in seeds {
        let pretrained = pretrain_agent(dataset, cfg, seed)?;
        for &limit in limits {
            let agent = AgentConfig {
                cost_limit: limit,
                ..cfg.agent.clone()
            };
            let out = run_agent(dataset, models, thresholds, Variant::Full, &pretrained, &agent, cfg, seed)?;
            rows.push(SweepRow {
                cost_limit: limit,
                seed,
                mean_return: out.final_return,
                discounted_cost: out.final_cost,
                satisfied: out.final_cost <= limit,
            });
        }
    }
    Ok(rows)
}

pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
