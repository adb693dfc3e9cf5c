//! End-to-end runs of the `more` binary on a tiny configuration.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use more_core::env::{BoilerEnv, Environment};
use more_core::harness::{Checkpoint, ComponentKind, RunConfig};
use more_core::rng::{derive_seed, stream};
use tempfile::TempDir;

fn more(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_more"))
        .args(args)
        .output()
        .expect("spawn more")
}

fn ok(args: &[&str]) -> String {
    let out = more(args);
    assert!(
        out.status.success(),
        "more {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tiny_config() -> RunConfig {
    let mut cfg = RunConfig::desk();
    cfg.dynamics.hidden_dims = vec![16];
    cfg.dynamics.training_epochs = 3;
    cfg.dynamics.batch_size = 64;
    cfg.vae.encoder_hidden = vec![16];
    cfg.vae.decoder_hidden = vec![16];
    cfg.vae.training_epochs = 3;
    cfg.vae.batch_size = 64;
    cfg.filter.rollout_length = 2;
    cfg.filter.sensitivity.num_perturbations = 4;
    cfg.agent.actor_hidden = vec![16];
    cfg.agent.critic_hidden = vec![16];
    cfg.agent.batch_size = 32;
    cfg.agent.training_steps = 100;
    cfg.agent.eval_interval = 50;
    cfg.agent.eval_episodes = 1;
    cfg.pretrain.bc_steps = 50;
    cfg.pretrain.critic_steps = 50;
    cfg.pretrain.batch_size = 32;
    cfg.final_eval_episodes = 1;
    cfg
}

/// Dataset, models and thresholds built once through the CLI.
struct Built {
    dir: TempDir,
}

impl Built {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
    fn config(&self) -> PathBuf {
        self.path("tiny.toml")
    }
    fn data(&self) -> PathBuf {
        self.path("data.moreds")
    }
    fn dynamics(&self) -> PathBuf {
        self.path("dyn/dynamics.ckpt.json")
    }
    fn vae(&self) -> PathBuf {
        self.path("vae/vae.ckpt.json")
    }
    fn thresholds(&self) -> PathBuf {
        self.path("thr/thresholds.json")
    }
    fn agent_dir(&self) -> PathBuf {
        self.path("agent")
    }

    fn model_flags(&self) -> Vec<String> {
        [
            ("--data", self.data()),
            ("--dynamics", self.dynamics()),
            ("--vae", self.vae()),
            ("--config", self.config()),
        ]
        .iter()
        .flat_map(|(f, p)| [f.to_string(), s(p).to_string()])
        .collect()
    }
}

fn built() -> &'static Built {
    static BUILT: OnceLock<Built> = OnceLock::new();
    BUILT.get_or_init(|| {
        let b = Built {
            dir: tempfile::tempdir().unwrap(),
        };
        std::fs::write(b.config(), tiny_config().to_toml()).unwrap();
        let cfg = s(&b.config()).to_string();
        ok(&["gen-data", "--kind", "medium", "--n", "1000", "--seed", "7", "--out", s(&b.data())]);
        let data = s(&b.data()).to_string();
        for (cmd, dir) in [("train-dynamics", "dyn"), ("train-vae", "vae")] {
            ok(&[cmd, "--data", &data, "--config", &cfg, "--seed", "1", "--out", s(&b.path(dir))]);
        }
        ok(&[
            "pretrain-thresholds", "--data", &data, "--dynamics", s(&b.dynamics()), "--vae", s(&b.vae()),
            "--beta-u", "70", "--beta-p", "40", "--seed", "3", "--out", s(&b.path("thr")), "--config", &cfg,
            "--export-arrays",
        ]);
        let mut args = vec!["train-more".to_string()];
        args.extend(b.model_flags());
        args.extend(
            ["--thresholds", s(&b.thresholds()), "--seed", "5", "--out", s(&b.agent_dir())].map(String::from),
        );
        ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
        b
    })
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let header = reader.headers().unwrap().iter().map(String::from).collect();
    let rows = reader
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn column(path: &Path, name: &str) -> Vec<String> {
    let (header, rows) = read_csv(path);
    let i = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.into_iter().map(|r| r[i].clone()).collect()
}

/// Every JSON document printed to stdout.
fn documents(stdout: &str) -> Vec<serde_json::Value> {
    serde_json::Deserializer::from_str(stdout)
        .into_iter()
        .collect::<Result<_, _>>()
        .unwrap()
}

fn json(stdout: &str) -> serde_json::Value {
    documents(stdout).pop().unwrap()
}

#[test]
fn gen_data_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let first = ok(&["gen-data", "--kind", "medium", "--n", "1000", "--seed", "7", "--out", s(&a)]);
    ok(&["gen-data", "--kind", "medium", "--n", "1000", "--seed", "7", "--out", s(&b)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let summary = json(&first);
    assert_eq!(summary["count"], 1000);
    assert!(summary["mean_reward"].as_f64().unwrap().is_finite());
    assert!(summary["mean_cost"].as_f64().unwrap().is_finite());
}

#[test]
fn gen_data_below_one_episode_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = more(&["gen-data", "--kind", "medium", "--n", "100", "--seed", "7", "--out", s(&dir.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("below one episode"));
}

#[test]
fn mixed_data_reports_four_tiers() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["gen-data", "--kind", "mixed", "--n", "1000", "--seed", "1", "--out", s(&dir.path().join("m"))]);
    assert_eq!(json(&out)["noise_tiers"], "4");
}

#[test]
fn training_is_reproducible_and_reports_each_epoch() {
    let b = built();
    let rerun = b.path("dyn-rerun");
    ok(&[
        "train-dynamics", "--data", s(&b.data()), "--config", s(&b.config()), "--seed", "1", "--out", s(&rerun),
    ]);
    assert_eq!(
        std::fs::read(b.dynamics()).unwrap(),
        std::fs::read(rerun.join("dynamics.ckpt.json")).unwrap()
    );
    let cfg = tiny_config();
    let losses = column(&b.path("dyn/dynamics_epochs.csv"), "val_loss");
    assert_eq!(losses.len(), cfg.dynamics.training_epochs);
    assert!(losses.iter().all(|v| v.parse::<f64>().unwrap().is_finite()));
    let (_, vae_rows) = read_csv(&b.path("vae/vae_epochs.csv"));
    assert_eq!(vae_rows.len(), cfg.vae.training_epochs);
    // The config written next to the checkpoint is the one that was used.
    let written = RunConfig::load(b.path("dyn/config.toml")).unwrap();
    assert_eq!(written.dynamics, cfg.dynamics);
}

#[test]
fn thresholds_match_exported_arrays() {
    let b = built();
    let t: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(b.thresholds()).unwrap()).unwrap();
    let arrays = b.path("thr/pre_evaluation.csv");
    let parse = |name| -> Vec<f64> { column(&arrays, name).iter().map(|v| v.parse().unwrap()).collect() };
    let nearest_rank = |mut v: Vec<f64>, beta: f64| {
        v.sort_by(|a, b| a.total_cmp(b));
        let rank = ((beta / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
        v[rank - 1]
    };
    let (sens, dens) = (parse("sensitivity"), parse("density"));
    assert_eq!(sens.len(), 1000);
    assert_eq!(t["sensitivity_threshold"].as_f64().unwrap(), nearest_rank(sens.clone(), 70.0));
    assert_eq!(t["density_threshold"].as_f64().unwrap(), nearest_rank(dens, 40.0));

    let full = b.path("thr-max");
    let out = ok(&[
        "pretrain-thresholds", "--data", s(&b.data()), "--dynamics", s(&b.dynamics()), "--vae", s(&b.vae()),
        "--beta-u", "100", "--beta-p", "40", "--seed", "3", "--out", s(&full), "--config", s(&b.config()),
    ]);
    let max = sens.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(json(&out)["sensitivity_threshold"].as_f64().unwrap(), max);
    // Same seed, same density cut-off.
    assert_eq!(json(&out)["density_threshold"], t["density_threshold"]);
}

#[test]
fn train_more_logs_two_evaluations_and_a_nonnegative_multiplier() {
    let b = built();
    let metrics = b.agent_dir().join("metrics.csv");
    let (header, rows) = read_csv(&metrics);
    assert_eq!(
        header,
        [
            "step", "lambda", "mean_qc", "qr_loss", "qc_loss", "actor_obj", "n_pos", "n_neg", "n_discard",
            "eval_return", "eval_cost"
        ]
    );
    assert!(rows.iter().all(|r| r.len() == header.len()));
    let evals = column(&metrics, "eval_return").iter().filter(|v| !v.is_empty()).count();
    assert_eq!(evals, 2);
    assert!(column(&metrics, "lambda").iter().all(|v| v.parse::<f64>().unwrap() >= 0.0));

    let rerun = b.path("agent-rerun");
    let mut args = vec!["train-more".to_string()];
    args.extend(b.model_flags());
    args.extend(["--thresholds", s(&b.thresholds()), "--seed", "5", "--out", s(&rerun)].map(String::from));
    ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(std::fs::read(&metrics).unwrap(), std::fs::read(rerun.join("metrics.csv")).unwrap());
}

#[test]
fn single_episode_evaluation_matches_a_manual_rollout() {
    let b = built();
    let agent = b.agent_dir().join("agent.ckpt.json");
    let out = ok(&["evaluate", "--agent", s(&agent), "--episodes", "1", "--seed", "11"]);
    let report = json(&out);
    assert_eq!(report, json(&ok(&["evaluate", "--agent", s(&agent), "--episodes", "1", "--seed", "11"])));

    let actor = Checkpoint::load(&agent, ComponentKind::Agent, None)
        .unwrap()
        .into_agent()
        .unwrap()
        .actor;
    let spec = RunConfig::default().env;
    let mut env = BoilerEnv::new(spec.clone()).unwrap();
    let mut obs = env.reset(derive_seed(11, &[stream::EVAL, 0]));
    let (mut ret, mut cost, mut discount) = (0.0, 0.0, 1.0);
    loop {
        let fb = env.step(&actor.act(&obs).unwrap()).unwrap();
        ret += fb.reward;
        cost += discount * fb.combined_cost;
        discount *= spec.gamma;
        obs = fb.observation;
        if fb.done {
            break;
        }
    }
    assert_eq!(report["mean_return"].as_f64().unwrap(), ret);
    assert_eq!(report["mean_discounted_cost"].as_f64().unwrap(), cost);
    assert_eq!(report["aborted_episodes"], 0);
}

#[test]
fn sweep_reports_one_row_per_limit() {
    let b = built();
    let agent = b.agent_dir().join("agent.ckpt.json");
    let csv_out = b.path("sweep.csv");
    let out = ok(&[
        "evaluate", "--agent", s(&agent), "--episodes", "1", "--seed", "0", "--cost-limit-sweep", "50,100,400",
        "--out", s(&csv_out),
    ]);
    assert_eq!(documents(&out).len(), 3);
    let limits = column(&csv_out, "cost_limit");
    assert_eq!(limits, ["50.0", "100.0", "400.0"]);
}

#[test]
fn ablation_grid_has_one_row_per_cell() {
    let b = built();
    let out = b.path("ablate");
    let mut args = vec!["ablate".to_string()];
    args.extend(b.model_flags());
    args.extend(
        ["--beta-u", "40,70", "--beta-p", "10,40,70", "--variants", "full", "--seeds", "0", "--out", s(&out)]
            .map(String::from),
    );
    ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    let csv_path = out.join("ablation.csv");
    let (_, rows) = read_csv(&csv_path);
    assert_eq!(rows.len(), 6);
    let hashes = column(&csv_path, "dataset_hash");
    assert!(hashes.iter().all(|h| h == &hashes[0]));

    let nf = b.path("ablate-nf");
    let mut args = vec!["ablate".to_string()];
    args.extend(b.model_flags());
    args.extend(
        ["--beta-u", "70", "--beta-p", "40", "--variants", "no-filter", "--seeds", "0", "--out", s(&nf)]
            .map(String::from),
    );
    ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    let path = nf.join("ablation.csv");
    assert_eq!(column(&path, "variant"), ["no-filter"]);
    assert_eq!(column(&path, "sensitivity_threshold")[0].parse::<f64>().unwrap(), f64::INFINITY);
    assert_eq!(column(&path, "density_threshold")[0].parse::<f64>().unwrap(), f64::NEG_INFINITY);
}

#[test]
fn exit_codes_separate_usage_data_and_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.moreds");
    let out = more(&["train-dynamics", "--data", s(&missing), "--seed", "0", "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(3));

    let garbage = dir.path().join("garbage.moreds");
    std::fs::write(&garbage, "not a dataset\n").unwrap();
    let out = more(&["train-vae", "--data", s(&garbage), "--seed", "0", "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(3));

    let typo = dir.path().join("typo.toml");
    std::fs::write(&typo, "final_eval_episodez = 3\n").unwrap();
    let out = more(&["train-vae", "--data", s(&garbage), "--config", s(&typo), "--seed", "0", "--out", "o"]);
    assert_eq!(out.status.code(), Some(2));

    let b = built();
    let mut cfg = tiny_config();
    cfg.dynamics.learning_rate = 1e300;
    let wild = dir.path().join("wild.toml");
    std::fs::write(&wild, cfg.to_toml()).unwrap();
    let out = more(&[
        "train-dynamics", "--data", s(&b.data()), "--config", s(&wild), "--seed", "0", "--out",
        s(&dir.path().join("d")),
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}
