use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use etcomm::comm::CommSchedule;
use etcomm::envs::{Scenario, TransportEnv};
use etcomm_harness::campaign::{self, RunOptions};
use etcomm_harness::config::ExperimentConfig;
use etcomm_harness::evaluate::{evaluate, rollout};
use etcomm_harness::sweep::{sweep, SweepOptions};
use etcomm_harness::trace::export_topology_trace;

#[derive(Parser)]
#[command(name = "etcomm", version, about = "Event-triggered multi-agent transport experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML). Defaults to the built-in values of the scenario.
    #[arg(long)]
    config: Option<PathBuf>,
    /// rigid_transport or pushing_failure; ignored when --config is given.
    #[arg(long, default_value = "rigid_transport")]
    scenario: Scenario,
    /// event, none, fixed<k> (receive every k control steps)
    #[arg(long)]
    schedule: Option<CommSchedule>,
    /// Comma-separated seeds, replacing the config's seed list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::for_scenario(self.scenario),
        };
        if let Some(s) = self.schedule {
            cfg.schedule = s;
        }
        if let Some(seeds) = &self.seeds {
            cfg.seeds = seeds.clone();
            cfg.runs = seeds.len();
        }
        if let Some(n) = self.episodes {
            cfg.train.episodes = n;
        }
        if let Some(dir) = &self.output {
            cfg.output_dir = dir.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one run per seed, resuming unfinished runs.
    Train {
        #[command(flatten)]
        common: Common,
        /// Stop after this many episodes per run in this invocation.
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Noise-free rollouts of a checkpoint.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Directory holding agent-<i>.json files.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 300)]
        rollouts: usize,
        /// Success radius [m]; omit for no threshold.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, default_value_t = 0)]
        eval_seed: u64,
        /// Report path; stdout when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Success rate and communication cost per topology.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 300)]
        rollouts: usize,
        #[arg(long, default_value_t = 0.2)]
        threshold: f64,
        #[arg(long, default_value_t = 0)]
        eval_seed: u64,
        /// Train missing runs first.
        #[arg(long)]
        train: bool,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Per-step episode trace and receive grids of one rollout.
    Trace {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Control steps between exported grids.
        #[arg(long, default_value_t = 10)]
        stride: usize,
        #[arg(long, default_value_t = 0)]
        reset_seed: u64,
        /// Directory for trace.jsonl and topology.json.
        #[arg(long)]
        out: PathBuf,
    },
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { common, budget } => {
            let cfg = common.load()?;
            let runs = campaign::run_training_campaign(
                &cfg,
                &RunOptions {
                    episode_budget: budget,
                },
            )?;
            println!("{}", serde_json::to_string_pretty(&runs)?);
        }
        Command::Evaluate {
            common,
            checkpoint,
            rollouts,
            threshold,
            eval_seed,
            report,
        } => {
            let cfg = common.load()?;
            let learners = campaign::load_learners(&checkpoint)?;
            let r = evaluate(&learners, &cfg.env, cfg.schedule, rollouts, threshold, eval_seed)?;
            emit(report.as_deref(), &serde_json::to_string_pretty(&r)?)?;
        }
        Command::Sweep {
            common,
            rollouts,
            threshold,
            eval_seed,
            train,
            report,
        } => {
            let cfg = common.load()?;
            let table = sweep(
                &cfg,
                &cfg.output_dir,
                &SweepOptions {
                    rollouts,
                    threshold: Some(threshold),
                    eval_seed,
                    train_missing: train,
                },
            )?;
            emit(report.as_deref(), &serde_json::to_string_pretty(&table)?)?;
        }
        Command::Trace {
            common,
            checkpoint,
            stride,
            reset_seed,
            out,
        } => {
            let cfg = common.load()?;
            let learners = campaign::load_learners(&checkpoint)?;
            etcomm_harness::evaluate::check_compatible(&learners, &cfg.env)?;
            let mut env = TransportEnv::new(cfg.env.clone())?;
            let trace = rollout(&mut env, &learners, &cfg.schedule, reset_seed, true)?;
            fs::create_dir_all(&out)?;
            let mut lines = Vec::new();
            for record in &trace {
                serde_json::to_writer(&mut lines, record)?;
                lines.push(b'\n');
            }
            fs::write(out.join("trace.jsonl"), lines)?;
            let grids = export_topology_trace(&trace, stride);
            fs::write(out.join("topology.json"), serde_json::to_vec_pretty(&grids)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = serde_json::json!({
                "error": e.to_string(),
                "causes": e.chain().skip(1).map(|c| c.to_string()).collect::<Vec<_>>(),
            });
            let _ = writeln!(std::io::stderr(), "{record}");
            ExitCode::FAILURE
        }
    }
}
