use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pllcp::eval::LemmaHarnessConfig;
use pllcp_cli::{cmd_audit, cmd_generate, cmd_lemma, cmd_run, CliError, ExperimentConfig, Overrides};

#[derive(Parser)]
#[command(name = "pllcp", version, about = "Conformal prediction with partially labeled data")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long, global = true)]
    seed_override: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Miscoverage level.
    #[arg(long, global = true)]
    epsilon: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or ingest a dataset, apply contamination and write it out.
    Generate,
    /// Train, calibrate and evaluate every configured method over all seeds.
    Run,
    /// Check the dominance conditions against the oracle score set.
    Audit,
    /// Randomized trials of the rank lemma.
    LemmaTest {
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        /// Largest oracle score set drawn.
        #[arg(long, default_value_t = 200)]
        max_size: usize,
        /// Largest number of elements added on either side.
        #[arg(long, default_value_t = 20)]
        max_added: usize,
        /// Sample outside the preconditions and report failures.
        #[arg(long)]
        explore_violations: bool,
    },
}

fn load_config(g: &GlobalArgs) -> Result<ExperimentConfig, CliError> {
    let path = g
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required for this command".into()))?;
    let mut config = ExperimentConfig::load(path)?;
    config.apply(&Overrides {
        seed: g.seed_override,
        out: g.out.clone(),
        epsilon: g.epsilon,
    })?;
    Ok(config)
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match &cli.command {
        Command::Generate => cmd_generate(&load_config(&cli.global)?, &mut out).map(drop),
        Command::Run => cmd_run(&load_config(&cli.global)?, &mut out).map(drop),
        Command::Audit => cmd_audit(&load_config(&cli.global)?, &mut out).map(drop),
        Command::LemmaTest {
            trials,
            max_size,
            max_added,
            explore_violations,
        } => {
            let harness = LemmaHarnessConfig {
                trials: *trials,
                seed: cli.global.seed_override.unwrap_or(0),
                max_size: *max_size,
                max_added: *max_added,
                explore_violations: *explore_violations,
                epsilon: cli.global.epsilon,
            };
            cmd_lemma(&harness, cli.global.out.as_deref(), &mut out).map(drop)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = e.record();
            let line =
                serde_json::to_string(&record).unwrap_or_else(|_| format!("{{\"message\":{:?}}}", record.message));
            let _ = writeln!(io::stderr(), "{line}");
            ExitCode::from(record.exit_code as u8)
        }
    }
}
