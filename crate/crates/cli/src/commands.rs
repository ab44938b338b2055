//! Subcommand implementations. Every command writes its data files, the
//! resolved configuration, and a run summary into the output directory.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use gridweave::agents::{
    play_episode, train, write_curve_csv, Algo, ActionSelection, Checkpoint, Mlp,
};
use gridweave::datagen::{generate_episode, write_csv_bundle, EpisodeData};
use gridweave::env::{write_trace_csv, Env, StepResult, OBS_DIM};
use gridweave::oracle::{oracle_report, policy_report, solve_fleet, write_plan_csv, ScoreReport};
use gridweave::GridError;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::summary::{render_report, write_json, write_report_csv, CurveStats, ReportColumn, RunSummary};

pub const CONFIG_FILE: &str = "config.json";
pub const SUMMARY_FILE: &str = "summary.json";

/// Failure classes mapped to process exit codes.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::Runtime(e) => e,
        }
    }
}

/// Library configuration errors are config failures; anything else is a runtime failure.
impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<GridError>() {
            Some(GridError::Config(_) | GridError::Pricing(_)) => Failure::Config(e),
            _ => Failure::Runtime(e),
        }
    }
}

impl From<GridError> for Failure {
    fn from(e: GridError) -> Self {
        Failure::from(anyhow::Error::new(e))
    }
}

pub type CmdResult<T> = std::result::Result<T, Failure>;

fn prepare_out(dir: &Path, cfg: &ExperimentConfig) -> CmdResult<()> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))
        .map_err(Failure::Runtime)?;
    write_json(&dir.join(CONFIG_FILE), cfg).map_err(Failure::Runtime)
}

fn finish(dir: &Path, mut summary: RunSummary, files: Vec<String>, started: Instant) -> CmdResult<RunSummary> {
    summary.wall_time_s = started.elapsed().as_secs_f64();
    summary
        .inventory(dir, &files)
        .context("cannot inventory outputs")
        .map_err(Failure::Runtime)?;
    summary.save(&dir.join(SUMMARY_FILE)).map_err(Failure::Runtime)?;
    Ok(summary)
}

fn episode(cfg: &ExperimentConfig) -> CmdResult<EpisodeData> {
    let e = &cfg.env;
    Ok(generate_episode(&e.microgrids, &e.grid, &e.datagen, e.horizon, cfg.seed)?)
}

#[derive(Serialize)]
struct Manifest<'a> {
    seed: u64,
    config_hash: String,
    horizon: usize,
    households: Vec<&'a str>,
    nuclear_capacity: f64,
    files: Vec<String>,
}

pub fn generate(cfg: &ExperimentConfig, out: &Path) -> CmdResult<RunSummary> {
    let started = Instant::now();
    prepare_out(out, cfg)?;
    let data = episode(cfg)?;
    let mut files = write_csv_bundle(&data, &cfg.env.microgrids, out)?;
    let manifest = Manifest {
        seed: cfg.seed,
        config_hash: cfg.hash(),
        horizon: data.horizon,
        households: cfg.env.microgrids.iter().flatten().map(|h| h.id.as_str()).collect(),
        nuclear_capacity: data.model.nuclear_capacity,
        files: files.clone(),
    };
    write_json(&out.join("manifest.json"), &manifest).map_err(Failure::Runtime)?;
    files.push("manifest.json".into());
    files.push(CONFIG_FILE.into());
    log::info!("wrote {} files to {}", files.len(), out.display());
    finish(out, RunSummary::new("generate", None, cfg.hash(), cfg.seed), files, started)
}

/// Greedy rollout of `actor` over the configured episode.
fn greedy_steps(cfg: &ExperimentConfig, data: &EpisodeData, actor: &Mlp) -> CmdResult<Vec<StepResult>> {
    let mut env = Env::with_data(cfg.env.clone(), data.clone())?;
    let log = play_episode::<ChaCha8Rng>(&mut env, actor, ActionSelection::Greedy, None)?;
    Ok(log.steps)
}

fn log_score(what: &str, score: &ScoreReport) {
    log::info!(
        "{what}: price score {:.4}, emission score {:.4}, mean reward {:.4}",
        score.distributor.price_score,
        score.distributor.emission_score,
        score.mean_reward
    );
}

pub fn train_cmd(cfg: &ExperimentConfig, algo: Algo, out: &Path) -> CmdResult<RunSummary> {
    let started = Instant::now();
    let tc = cfg.train_config(algo).map_err(Failure::Config)?;
    prepare_out(out, cfg)?;
    if cfg.env.actionable().is_empty() {
        return Err(Failure::Config(anyhow::anyhow!("no household has a usable battery")));
    }
    log::info!("training {algo} for {} steps, seed {}", tc.training_steps, cfg.seed);
    let outcome = train(&cfg.env, algo, &tc, cfg.seed)?;

    Checkpoint::new(algo, cfg.seed, tc, &outcome.actor, outcome.critic.as_ref()).save(&out.join("checkpoint.json"))?;
    write_curve_csv(&out.join("curve.csv"), &outcome.curve)?;

    let data = episode(cfg)?;
    let steps = greedy_steps(cfg, &data, &outcome.actor)?;
    let score = policy_report(&cfg.env, &data, &steps)?;
    write_json(&out.join("score.json"), &score).map_err(Failure::Runtime)?;
    log_score("greedy policy", &score);

    let mut summary = RunSummary::new("train", Some(algo.to_string()), cfg.hash(), cfg.seed);
    summary.curve = CurveStats::from_curve(&outcome.curve);
    summary.score = Some(score);
    let files = ["checkpoint.json", "curve.csv", "score.json", CONFIG_FILE].map(String::from).to_vec();
    finish(out, summary, files, started)
}

pub fn oracle_cmd(cfg: &ExperimentConfig, out: &Path) -> CmdResult<RunSummary> {
    let started = Instant::now();
    prepare_out(out, cfg)?;
    let data = episode(cfg)?;
    let plans = solve_fleet(&cfg.env, &data, cfg.oracle.soc_levels)?;
    let mut files = Vec::new();
    for (row, houses) in plans.iter().zip(&cfg.env.microgrids) {
        for (plan, house) in row.iter().zip(houses) {
            let name = format!("plan_{}.csv", house.id);
            write_plan_csv(&out.join(&name), plan)?;
            files.push(name);
        }
    }
    let score = oracle_report(&cfg.env, &data, &plans)?;
    write_json(&out.join("score.json"), &score).map_err(Failure::Runtime)?;
    log_score("oracle", &score);
    files.push("score.json".into());
    files.push(CONFIG_FILE.into());

    let mut summary = RunSummary::new("oracle", Some("oracle".into()), cfg.hash(), cfg.seed);
    summary.score = Some(score);
    finish(out, summary, files, started)
}

pub fn evaluate_cmd(cfg: &ExperimentConfig, checkpoint: &Path, out: &Path) -> CmdResult<RunSummary> {
    let started = Instant::now();
    let ckpt = Checkpoint::load(checkpoint).map_err(|e| Failure::Config(anyhow::Error::new(e)))?;
    let actor = ckpt.actor.to_mlp().map_err(|e| Failure::Config(anyhow::Error::new(e)))?;
    if ckpt.obs_dim != OBS_DIM || actor.input != OBS_DIM {
        return Err(Failure::Config(anyhow::anyhow!(
            "checkpoint expects {}-dimensional observations, environment produces {OBS_DIM}",
            actor.input
        )));
    }
    if actor.output != cfg.env.n_actions {
        return Err(Failure::Config(anyhow::anyhow!(
            "checkpoint has {} actions, config has {}",
            actor.output,
            cfg.env.n_actions
        )));
    }
    prepare_out(out, cfg)?;
    let data = episode(cfg)?;
    let steps = greedy_steps(cfg, &data, &actor)?;
    let score = policy_report(&cfg.env, &data, &steps)?;
    write_json(&out.join("score.json"), &score).map_err(Failure::Runtime)?;
    write_trace_csv(&out.join("trace.csv"), &cfg.env, &steps)?;
    log_score("evaluation", &score);

    let mut summary = RunSummary::new("evaluate", Some(format!("{}-eval", ckpt.algo)), cfg.hash(), cfg.seed);
    summary.score = Some(score);
    let files = ["score.json", "trace.csv", CONFIG_FILE].map(String::from).to_vec();
    finish(out, summary, files, started)
}

/// Join run summaries into a comparison table. Each run's recorded config
/// hash is checked against the configuration stored next to it.
pub fn report_cmd(runs: &[PathBuf], out: &Path) -> CmdResult<()> {
    if runs.is_empty() {
        return Err(Failure::Config(anyhow::anyhow!("report needs at least one run directory")));
    }
    let mut columns = Vec::new();
    for dir in runs {
        let summary = RunSummary::load(&dir.join(SUMMARY_FILE)).map_err(Failure::Config)?;
        let cfg = ExperimentConfig::load(&dir.join(CONFIG_FILE)).map_err(Failure::Config)?;
        if cfg.hash() != summary.config_hash {
            return Err(Failure::Config(anyhow::anyhow!(
                "{}: config hash {} does not match summary {}",
                dir.display(),
                cfg.hash(),
                summary.config_hash
            )));
        }
        columns.push(ReportColumn::from_summary(&summary).map_err(Failure::Config)?);
    }
    std::fs::create_dir_all(out)
        .with_context(|| format!("cannot create output directory {}", out.display()))
        .map_err(Failure::Runtime)?;
    write_report_csv(&out.join("report.csv"), &columns).map_err(Failure::Runtime)?;
    let text = render_report(&columns);
    std::fs::write(out.join("report.txt"), &text)
        .context("cannot write report.txt")
        .map_err(Failure::Runtime)?;
    eprint!("{text}");
    Ok(())
}
