//! Command-line driver for the distillation lab.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::load_config;
use crate::error::{CliResult, EXIT_USAGE};

#[derive(Parser, Debug)]
#[command(name = "soda", version, about = "Desk-scale black-box distillation lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Run a single seed instead of the config's seed list.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Materialize the synthetic world: teacher and base checkpoints plus
    /// teacher data.
    GenData(RunArgs),
    /// Sample the one-time static snapshot of the base student.
    Snapshot(RunArgs),
    /// Supervised warmup only; writes the q_w checkpoint.
    Warmup(RunArgs),
    /// Full semi on-policy preference distillation run.
    Distill(RunArgs),
    /// Supervised distillation baseline (warmup-only pipeline).
    Seqkd(RunArgs),
    /// Adversarial distillation baseline.
    Gad(RunArgs),
    /// Rejection-source ablation: one trained model per negative source.
    Ablate(RunArgs),
    /// Re-evaluate a finished run directory against the oracle.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// The run directory holding report.json and checkpoints.
        #[arg(long)]
        run_dir: PathBuf,
    },
    /// Representation diagnostics across checkpoints (transformer configs).
    Repr {
        #[arg(long)]
        config: PathBuf,
        /// Held-out prompts to extract hidden states from.
        #[arg(long, default_value_t = 200)]
        prompts: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Aggregate all run reports under a directory into a comparison table.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Recompute artifact hashes against every run manifest.
    Verify {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::GenData(args) => {
            commands::gen_data(&load_config(&args.config)?, args.seed)
        }
        Command::Snapshot(args) => commands::snapshot(&load_config(&args.config)?, args.seed),
        Command::Warmup(args) => commands::warmup_stage(&load_config(&args.config)?, args.seed),
        Command::Distill(args) => commands::distill(&load_config(&args.config)?, args.seed),
        Command::Seqkd(args) => commands::seqkd(&load_config(&args.config)?, args.seed),
        Command::Gad(args) => commands::gad(&load_config(&args.config)?, args.seed),
        Command::Ablate(args) => commands::ablate(&load_config(&args.config)?, args.seed),
        Command::Eval { config, run_dir } => commands::eval(&load_config(&config)?, &run_dir),
        Command::Repr {
            config,
            prompts,
            seed,
        } => commands::repr(&load_config(&config)?, prompts, seed),
        Command::Report { dir } => commands::report(&dir),
        Command::Verify { dir } => commands::verify(&dir),
    }
}

/// Parses argv and runs the requested stage; returns the process exit code.
/// Usage errors exit 2, config problems 3, runtime failures 1; failures also
/// print a machine-readable error JSON to stderr.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code
        }
    }
}
