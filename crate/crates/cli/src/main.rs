//! Experiment driver for the levypde laboratory.
//!
//! ```text
//! levypde --config exp.toml [--seed N] [--replicas N] [--jobs N]
//!         [--out DIR] [--force] <simulate | verify | converge | coercivity>
//! ```
//!
//! Exit codes: 0 success/pass, 1 poor convergence fit, 2 validation or
//! check failure, 3 vacuous check, 4 solver failure.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{cmd_coercivity, cmd_converge, cmd_simulate, cmd_verify, CliError, RunContext};
use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "levypde", version, about = "Parabolic SPDEs driven by Levy noise: simulate, check, converge")]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Replica count override.
    #[arg(long, global = true)]
    replicas: Option<usize>,

    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Downgrade assumption-check failures to warnings.
    #[arg(long, global = true)]
    force: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the solver over the replica ensemble and write summaries.
    Simulate,
    /// Run one empirical checker.
    Verify {
        /// quadratic-variation | levy-system | apriori | sup-estimate | t-independence
        #[arg(long)]
        check: String,
    },
    /// Temporal convergence study on a nested resolution ladder.
    Converge {
        /// Comma-separated step counts, e.g. 64,128,256.
        #[arg(long, value_delimiter = ',')]
        ladder: Option<Vec<usize>>,
    },
    /// Ellipticity validation of the coefficient set.
    Coercivity,
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let config_path = cli
        .config
        .ok_or_else(|| CliError::Validation("--config is required".into()))?;
    let raw = ExperimentConfig::load(&config_path)?;
    let config_dir = config_path
        .parent()
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| PathBuf::from("."));
    let resolved = raw.resolve(&config_dir)?;

    let ctx = RunContext {
        master_seed: cli.seed.unwrap_or(resolved.raw.run.seed),
        replicas: cli.replicas.unwrap_or(resolved.raw.run.replicas),
        out_dir: cli
            .out
            .unwrap_or_else(|| PathBuf::from(&resolved.raw.run.out)),
        force: cli.force,
        resolved,
    };

    let jobs = cli.jobs.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    });
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Validation(format!("cannot build worker pool: {e}")))?;

    pool.install(|| match cli.command {
        Command::Simulate => cmd_simulate(&ctx),
        Command::Verify { check } => cmd_verify(&ctx, &check),
        Command::Converge { ladder } => cmd_converge(&ctx, ladder),
        Command::Coercivity => cmd_coercivity(&ctx),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
