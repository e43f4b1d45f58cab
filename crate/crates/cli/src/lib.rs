//! Command-line orchestration of the cross-market ranking pipeline: a TOML
//! config, a content-hashed artifact cache and one command per stage.

pub mod cache;
pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::Context;
pub use config::PipelineConfig;
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "xmarket", version, about = "Multi-stage cross-market ranking pipeline")]
pub struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true, default_value = "xmarket.toml")]
    pub config: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Replaces the configured base seed.
    #[arg(long, global = true)]
    pub seed_override: Option<u64>,
    /// Replaces the configured combination filter (`all`, `target:t1`, `ids:t1,s1-t1`).
    #[arg(long, global = true)]
    pub combo_filter: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Fuse and cache every selected market combination.
    Prepare,
    /// Tune, fit and score the stage-1 recommenders.
    Stage1,
    /// Per-dataset linear and boosted ensembles.
    Stage2,
    /// Per-target stacking over all datasets that contain it.
    Stage3,
    /// Report NDCG@10 of every cached artifact.
    Evaluate,
    /// Write one submission file per target market.
    Submit,
    /// Generate a synthetic five-market world into `data_root`.
    Synth,
    /// prepare, stage1, stage2, stage3, evaluate and submit in one go.
    Run,
}

/// Loads the config and applies command-line and environment overrides.
pub fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(&cli.config)?;
    cfg.apply_env();
    if let Some(s) = cli.seed_override {
        cfg.seed = s;
    }
    if let Some(f) = &cli.combo_filter {
        cfg.combo_filter = f.clone();
    }
    Ok(cfg)
}

/// Runs `f` on a pool of `jobs` threads (or the default pool).
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        Some(0) => Err(CliError::Config("--jobs must be at least 1".into())),
        #[cfg(feature = "parallel")]
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        _ => Ok(f()),
    }
}

/// Executes one command and returns the text to print.
pub fn execute(command: Command, cfg: &PipelineConfig) -> Result<String> {
    if command == Command::Synth {
        let root = commands::cmd_synth(cfg)?;
        return Ok(format!("synthetic markets written to {}", root.display()));
    }
    let ctx = Context::new(cfg)?;
    let msg = match command {
        Command::Prepare => format!("prepare: {}", commands::cmd_prepare(&ctx)?),
        Command::Stage1 => format!("stage1: {}", commands::cmd_stage1(&ctx)?),
        Command::Stage2 => format!("stage2: {}", commands::cmd_stage2(&ctx)?),
        Command::Stage3 => format!("stage3: {}", commands::cmd_stage3(&ctx)?),
        Command::Evaluate => commands::cmd_evaluate(&ctx)?.render_table(),
        Command::Submit | Command::Run => {
            let paths = if command == Command::Run { commands::cmd_run(&ctx)? } else { commands::cmd_submit(&ctx)? };
            paths.iter().map(|p| format!("wrote {}", p.display())).collect::<Vec<_>>().join("\n")
        }
        Command::Synth => unreachable!(),
    };
    Ok(msg)
}

/// Full command-line entry point; returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    let outcome = load_config(&cli).and_then(|cfg| with_jobs(cli.jobs, || execute(cli.command, &cfg))?);
    match outcome {
        Ok(msg) => {
            println!("{msg}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
