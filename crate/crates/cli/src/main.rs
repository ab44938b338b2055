mod commands;
mod config;
mod summary;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gridweave::accounting::CostMode;
use gridweave::agents::Algo;

use commands::{CmdResult, Failure};
use config::{CliOverrides, ExperimentConfig};

#[derive(Parser)]
#[command(name = "gridweave", version, about = "Hierarchical microgrid market simulator and learners")]
struct Cli {
    /// Worker threads for rollouts and dispatch solves (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Disable load and PV noise.
    #[arg(long)]
    no_noise: bool,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<CostMode>,
}

#[derive(Subcommand)]
enum Command {
    /// Write one episode of load, PV, and grid series as CSV.
    Generate(Common),
    /// Train a shared policy and evaluate it greedily.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "a2c", value_parser = parse_algo)]
        algo: Algo,
    },
    /// Solve every household's optimal dispatch and score it.
    Oracle(Common),
    /// Roll out a trained checkpoint greedily and score it.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Compare the summaries of several runs.
    Report {
        #[arg(long, default_value = "report")]
        out: PathBuf,
        /// Run output directories.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
}

fn parse_mode(s: &str) -> Result<CostMode, String> {
    s.parse().map_err(|e: gridweave::GridError| e.to_string())
}

fn parse_algo(s: &str) -> Result<Algo, String> {
    s.parse().map_err(|e: gridweave::GridError| e.to_string())
}

fn resolve(c: &Common) -> CmdResult<(ExperimentConfig, PathBuf)> {
    let cfg = ExperimentConfig::load(&c.config).map_err(Failure::Config)?;
    let cfg = cfg.apply(&CliOverrides {
        seed: c.seed,
        no_noise: c.no_noise,
        mode: c.mode,
    });
    cfg.validate().map_err(Failure::Config)?;
    let out = c
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok((cfg, out))
}

fn run(cli: Cli) -> CmdResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Config(anyhow::anyhow!("--threads must be >= 1")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(e.into()))?;
    }
    match cli.command {
        Command::Generate(c) => {
            let (cfg, out) = resolve(&c)?;
            commands::generate(&cfg, &out)?;
        }
        Command::Train { common, algo } => {
            let (cfg, out) = resolve(&common)?;
            commands::train_cmd(&cfg, algo, &out)?;
        }
        Command::Oracle(c) => {
            let (cfg, out) = resolve(&c)?;
            commands::oracle_cmd(&cfg, &out)?;
        }
        Command::Evaluate { common, checkpoint } => {
            let (cfg, out) = resolve(&common)?;
            commands::evaluate_cmd(&cfg, &checkpoint, &out)?;
        }
        Command::Report { out, runs } => commands::report_cmd(&runs, &out)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            log::error!("{:#}", f.error());
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
