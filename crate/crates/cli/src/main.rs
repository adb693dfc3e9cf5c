//! `more`: data generation, model training, threshold pre-evaluation,
//! constrained policy training, evaluation and ablations on the boiler
//! benchmark.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use more_core::dataset::{load_dataset, save_dataset, OfflineDataset};
use more_core::density::train_vae;
use more_core::dynamics::train_dynamics;
use more_core::env::{evaluate_on_boiler, generate_dataset, BehaviorKind};
use more_core::harness::{
    ablation_grid, config_hash, cost_limit_sweep, pretrain_agent, run_agent, to_json, write_csv, write_json,
    AgentSnapshot, Checkpoint, ComponentKind, LearnedModels, RunConfig, Variant,
};
use more_core::thresholds::{pre_evaluate, PercentileThresholds};
use more_core::{Error, Result};

#[derive(Parser)]
#[command(name = "more", version, about = "Offline constrained RL with restrictive model exploration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Medium,
    Mixed,
}

#[derive(Subcommand)]
enum Command {
    /// Roll the behavior controller and write a MOREDS1 dataset.
    GenData {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Exploration std (one value for medium, a decreasing list for mixed).
        #[arg(long, value_delimiter = ',')]
        std: Option<Vec<f64>>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Fit the one-step dynamics model.
    TrainDynamics(TrainArgs),
    /// Fit the state-action VAE.
    TrainVae(TrainArgs),
    /// Evaluate sensitivity and ELBO over the dataset and take percentiles.
    PretrainThresholds {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        dynamics: PathBuf,
        #[arg(long)]
        vae: PathBuf,
        #[arg(long)]
        beta_u: f64,
        #[arg(long)]
        beta_p: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write the raw sensitivity and density arrays as CSV.
        #[arg(long)]
        export_arrays: bool,
    },
    /// Pretrain and run the primal-dual loop.
    TrainMore {
        #[command(flatten)]
        inputs: ModelInputs,
        #[arg(long)]
        thresholds: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate an agent, optionally against several cost limits.
    Evaluate {
        #[arg(long)]
        agent: PathBuf,
        #[arg(long)]
        episodes: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_delimiter = ',')]
        cost_limit_sweep: Option<Vec<f64>>,
        /// Train a fresh agent per swept limit (needs the model inputs).
        #[arg(long)]
        retrain: bool,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        dynamics: Option<PathBuf>,
        #[arg(long)]
        vae: Option<PathBuf>,
        #[arg(long)]
        thresholds: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train across a (β_u, β_p, variant) grid and compare final policies.
    Ablate {
        #[command(flatten)]
        inputs: ModelInputs,
        #[arg(long, value_delimiter = ',', default_value = "40,70")]
        beta_u: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "10,40,70")]
        beta_p: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "full")]
        variants: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        /// Seed for the sensitivity and density pre-evaluation.
        #[arg(long, default_value_t = 0)]
        threshold_seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a run config as TOML.
    InitConfig {
        /// Small networks and short schedules for a single CPU core.
        #[arg(long)]
        desk: bool,
    },
}

#[derive(clap::Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct ModelInputs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    dynamics: PathBuf,
    #[arg(long)]
    vae: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

const DYNAMICS_CHECKPOINT: &str = "dynamics.ckpt.json";
const VAE_CHECKPOINT: &str = "vae.ckpt.json";
const AGENT_CHECKPOINT: &str = "agent.ckpt.json";
const THRESHOLDS_FILE: &str = "thresholds.json";

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn print<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", to_json(value)?);
    Ok(())
}

fn load_models(dynamics: &Path, vae: &Path, cfg: &RunConfig) -> Result<LearnedModels> {
    Ok(LearnedModels {
        dynamics: Checkpoint::load(dynamics, ComponentKind::Dynamics, Some(&config_hash(&cfg.dynamics)))?
            .into_dynamics()?,
        density: Checkpoint::load(vae, ComponentKind::Vae, Some(&config_hash(&cfg.vae)))?.into_vae()?,
    })
}

fn load_thresholds(path: &Path, dataset: &OfflineDataset) -> Result<PercentileThresholds> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let t: PercentileThresholds = serde_json::from_str(&text).map_err(|e| Error::Malformed {
        path: path.to_path_buf(),
        line: 1,
        detail: e.to_string(),
    })?;
    if t.count != dataset.len() {
        return Err(Error::CountMismatch {
            path: path.to_path_buf(),
            declared: t.count,
            found: dataset.len(),
        });
    }
    Ok(t)
}

#[derive(Serialize)]
struct DataSummary {
    count: usize,
    episodes: usize,
    mean_reward: f64,
    mean_cost: f64,
    mean_episode_return: f64,
    noise_tiers: String,
    content_hash: String,
}

#[derive(Serialize)]
struct EvaluationRow {
    mean_return: f64,
    mean_discounted_return: f64,
    mean_discounted_cost: f64,
    aborted_episodes: usize,
}

#[derive(Serialize)]
struct LimitRow {
    cost_limit: f64,
    mean_return: f64,
    discounted_cost: f64,
    satisfied: bool,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData {
            kind,
            n,
            seed,
            out,
            std,
            config,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            cfg.data.kind = match kind {
                Kind::Medium => BehaviorKind::Medium,
                Kind::Mixed => BehaviorKind::Mixed,
            };
            cfg.data.exploration_std = match (std, kind) {
                (Some(s), _) => s,
                (None, Kind::Medium) if cfg.data.exploration_std.len() == 1 => cfg.data.exploration_std.clone(),
                (None, Kind::Medium) => vec![0.3],
                (None, Kind::Mixed) => vec![0.8, 0.5, 0.3, 0.1],
            };
            cfg.data.transitions = n;
            cfg.seeds.data = seed;
            let behavior = cfg.data.behavior(cfg.seeds.behavior);
            behavior.validate()?;
            if n < cfg.env.episode_length {
                return Err(Error::Config(format!(
                    "num_transitions {n} is below one episode ({} steps)",
                    cfg.env.episode_length
                )));
            }
            let ds = generate_dataset(&cfg.env, &behavior, n, seed)?;
            save_dataset(&ds, &out)?;
            let count = ds.len() as f64;
            print(&DataSummary {
                count: ds.len(),
                episodes: ds.transitions.iter().filter(|t| t.done).count(),
                mean_reward: ds.transitions.iter().map(|t| t.r).sum::<f64>() / count,
                mean_cost: ds.transitions.iter().map(|t| t.combined_cost).sum::<f64>() / count,
                mean_episode_return: ds.mean_episode_return(),
                noise_tiers: ds.metadata.get("noise_tiers").cloned().unwrap_or_default(),
                content_hash: ds.content_hash(),
            })
        }
        Command::TrainDynamics(args) => {
            let mut cfg = load_config(args.config.as_deref())?;
            cfg.seeds.dynamics = args.seed;
            let ds = load_dataset(&args.data)?;
            cfg.write_into(&args.out)?;
            let (model, report) = train_dynamics(&ds, &cfg.dynamics, args.seed)?;
            Checkpoint::dynamics(&model, &config_hash(&cfg.dynamics)).save(args.out.join(DYNAMICS_CHECKPOINT))?;
            write_csv(args.out.join("dynamics_epochs.csv"), &report.epochs)?;
            #[derive(Serialize)]
            struct Summary<'a> {
                best_epoch: usize,
                heldout_state_rmse: &'a [f64],
            }
            print(&Summary {
                best_epoch: report.best_epoch,
                heldout_state_rmse: &report.heldout_state_rmse,
            })
        }
        Command::TrainVae(args) => {
            let mut cfg = load_config(args.config.as_deref())?;
            cfg.seeds.vae = args.seed;
            let ds = load_dataset(&args.data)?;
            cfg.write_into(&args.out)?;
            let (model, report) = train_vae(&ds, &cfg.vae, args.seed)?;
            Checkpoint::vae(&model, &config_hash(&cfg.vae)).save(args.out.join(VAE_CHECKPOINT))?;
            write_csv(args.out.join("vae_epochs.csv"), &report.epochs)?;
            print(&report.epochs.last())
        }
        Command::PretrainThresholds {
            data,
            dynamics,
            vae,
            beta_u,
            beta_p,
            seed,
            out,
            config,
            export_arrays,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            cfg.thresholds.beta_u = beta_u;
            cfg.thresholds.beta_p = beta_p;
            cfg.seeds.thresholds = seed;
            let ds = load_dataset(&data)?;
            let models = load_models(&dynamics, &vae, &cfg)?;
            cfg.write_into(&out)?;
            let eval = pre_evaluate(&ds, &models.dynamics, &models.density, &cfg.filter, seed)?;
            let thresholds = PercentileThresholds::from_arrays(&eval, beta_u, beta_p, seed)?;
            write_json(out.join(THRESHOLDS_FILE), &thresholds)?;
            if export_arrays {
                #[derive(Serialize)]
                struct Row {
                    index: usize,
                    sensitivity: f64,
                    density: f64,
                }
                let rows: Vec<Row> = (0..ds.len())
                    .map(|i| Row {
                        index: i,
                        sensitivity: eval.sensitivity[i],
                        density: eval.density[i],
                    })
                    .collect();
                write_csv(out.join("pre_evaluation.csv"), &rows)?;
            }
            print(&thresholds)
        }
        Command::TrainMore {
            inputs,
            thresholds,
            seed,
            out,
        } => {
            let mut cfg = load_config(inputs.config.as_deref())?;
            cfg.seeds.agent = seed;
            let ds = load_dataset(&inputs.data)?;
            let models = load_models(&inputs.dynamics, &inputs.vae, &cfg)?;
            let t = load_thresholds(&thresholds, &ds)?;
            cfg.thresholds.beta_u = t.beta_u;
            cfg.thresholds.beta_p = t.beta_p;
            cfg.write_into(&out)?;
            let pretrained = pretrain_agent(&ds, &cfg, seed)?;
            let outcome = run_agent(&ds, &models, t.thresholds(), Variant::Full, &pretrained, &cfg.agent, &cfg, seed)?;
            write_csv(out.join("metrics.csv"), &outcome.metrics)?;
            Checkpoint::agent(&AgentSnapshot::from(&outcome.state), &config_hash(&cfg.agent))
                .save(out.join(AGENT_CHECKPOINT))?;
            #[derive(Serialize)]
            struct Summary {
                final_return: f64,
                final_discounted_cost: f64,
                lambda: f64,
            }
            print(&Summary {
                final_return: outcome.final_return,
                final_discounted_cost: outcome.final_cost,
                lambda: outcome.state.lagrange.lambda,
            })
        }
        Command::Evaluate {
            agent,
            episodes,
            seed,
            cost_limit_sweep: limits,
            retrain,
            data,
            dynamics,
            vae,
            thresholds,
            config,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let snapshot = Checkpoint::load(&agent, ComponentKind::Agent, None)?.into_agent()?;
            let actor = snapshot.actor;
            let mut policy = |s: &[f64]| actor.act(s).unwrap_or_else(|_| vec![f64::NAN; actor.action_dim()]);
            let report = evaluate_on_boiler(&cfg.env, &mut policy, episodes, seed)?;
            let summary = EvaluationRow {
                mean_return: report.mean_return,
                mean_discounted_return: report.mean_discounted_return,
                mean_discounted_cost: report.mean_discounted_cost,
                aborted_episodes: report.aborted_episodes.len(),
            };
            let Some(limits) = limits else {
                if let Some(out) = &out {
                    write_json(out, &report_json(&summary, &report.returns, &report.discounted_costs)?)?;
                }
                return print(&summary);
            };
            let rows: Vec<LimitRow> = if retrain {
                let need = |p: Option<PathBuf>, flag: &str| {
                    p.ok_or_else(|| Error::Config(format!("--retrain needs --{flag}")))
                };
                let data = need(data, "data")?;
                let dynamics = need(dynamics, "dynamics")?;
                let vae = need(vae, "vae")?;
                let thresholds = need(thresholds, "thresholds")?;
                let ds = load_dataset(&data)?;
                let models = load_models(&dynamics, &vae, &cfg)?;
                let t = load_thresholds(&thresholds, &ds)?;
                let eval_cfg = RunConfig {
                    final_eval_episodes: episodes,
                    seeds: more_core::harness::SeedConfig {
                        eval: seed,
                        ..cfg.seeds.clone()
                    },
                    ..cfg.clone()
                };
                cost_limit_sweep(&ds, &models, t.thresholds(), &limits, &[cfg.seeds.agent], &eval_cfg)?
                    .into_iter()
                    .map(|r| LimitRow {
                        cost_limit: r.cost_limit,
                        mean_return: r.mean_return,
                        discounted_cost: r.discounted_cost,
                        satisfied: r.satisfied,
                    })
                    .collect()
            } else {
                limits
                    .iter()
                    .map(|&l| LimitRow {
                        cost_limit: l,
                        mean_return: report.mean_return,
                        discounted_cost: report.mean_discounted_cost,
                        satisfied: report.mean_discounted_cost <= l,
                    })
                    .collect()
            };
            if let Some(out) = &out {
                write_csv(out, &rows)?;
            }
            for r in &rows {
                print(r)?;
            }
            Ok(())
        }
        Command::Ablate {
            inputs,
            beta_u,
            beta_p,
            variants,
            seeds,
            threshold_seed,
            out,
        } => {
            let cfg = load_config(inputs.config.as_deref())?;
            let variants = variants.iter().map(|v| Variant::parse(v)).collect::<Result<Vec<_>>>()?;
            let ds = load_dataset(&inputs.data)?;
            let models = load_models(&inputs.dynamics, &inputs.vae, &cfg)?;
            cfg.write_into(&out)?;
            let eval = pre_evaluate(&ds, &models.dynamics, &models.density, &cfg.filter, threshold_seed)?;
            let rows = ablation_grid(&ds, &models, &eval, &beta_u, &beta_p, &variants, &seeds, &cfg)?;
            write_csv(out.join("ablation.csv"), &rows)?;
            for r in &rows {
                print(r)?;
            }
            Ok(())
        }
        Command::InitConfig { desk } => {
            let cfg = if desk { RunConfig::desk() } else { RunConfig::default() };
            print!("{}", cfg.to_toml());
            Ok(())
        }
    }
}

fn report_json(summary: &EvaluationRow, returns: &[f64], costs: &[f64]) -> Result<serde_json::Value> {
    let mut v = serde_json::to_value(summary).map_err(Error::Json)?;
    v["returns"] = serde_json::json!(returns);
    v["discounted_costs"] = serde_json::json!(costs);
    Ok(v)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
