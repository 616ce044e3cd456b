use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tedecomp_cli::commands::{self, Command};
use tedecomp_cli::config::ExperimentConfig;
use tedecomp_cli::error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "tedecomp", version, about = "Locate transfer entropy with distributed information bottlenecks")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON), or a manifest.json from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run a single seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for independent runs.
    #[arg(long, default_value_t = default_jobs())]
    jobs: usize,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate the configured network and write the series.
    Simulate(Common),
    /// Plugin transfer entropy and local values on binary data.
    Oracle(Common),
    /// Annealed bottleneck runs with per-cell shares.
    Decompose(Common),
    /// Fixed-β InfoNCE transfer entropy for channel pairs.
    Pairwise(Common),
    /// Per-anchor KL costs at an operating point.
    Trace {
        #[command(flatten)]
        common: Common,
        /// Parameter checkpoint stem from `decompose`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// β of the operating point.
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Run the acceptance suite.
    Verify(Common),
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn load(path: &std::path::Path) -> CliResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config(vec![format!("{}: {e}", path.display())]))?;
    // A manifest carries its config verbatim.
    if value.get("manifest_version").is_some() {
        let config = value.get("config").cloned().unwrap_or_default();
        return ExperimentConfig::from_json(&config.to_string());
    }
    ExperimentConfig::load(path)
}

fn execute(cli: Cli) -> CliResult<()> {
    let (command, common, checkpoint, beta) = match cli.command {
        Cmd::Simulate(c) => (Command::Simulate, c, None, None),
        Cmd::Oracle(c) => (Command::Oracle, c, None, None),
        Cmd::Decompose(c) => (Command::Decompose, c, None, None),
        Cmd::Pairwise(c) => (Command::Pairwise, c, None, None),
        Cmd::Trace { common, checkpoint, beta } => (Command::Trace, common, checkpoint, beta),
        Cmd::Verify(c) => (Command::Verify, c, None, None),
    };
    let mut cfg = match &common.config {
        Some(p) => load(p)?,
        None if command == Command::Verify => ExperimentConfig::builtin("fig2a"),
        None => return Err(CliError::Config(vec!["--config is required".into()])),
    };
    if let Some(out) = common.out {
        cfg.output = out;
    }
    if let Some(seed) = common.seed {
        cfg.seeds = vec![seed];
    }
    if checkpoint.is_some() {
        cfg.trace.checkpoint = checkpoint;
    }
    if beta.is_some() {
        cfg.trace.beta = beta;
    }
    let manifest = commands::run(command, &cfg, common.jobs.max(1))?;
    log::info!(
        "{:?} finished in {:.1} s, {} artifacts in {}",
        manifest.command,
        manifest.wall_seconds,
        manifest.artifacts.len(),
        cfg.output.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
