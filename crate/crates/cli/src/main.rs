//! `dytgraph`: generate, ingest, train, evaluate, predict and sweep α.

mod commands;
mod failure;

use clap::{Args, Parser, Subcommand};
use failure::Failure;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dytgraph", version, about = "Community attribute-trend prediction over dynamic graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Settings layered over the config file; later `--set` wins.
#[derive(Args, Clone, Default)]
pub struct Overrides {
    /// Flat `key = value` config file.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one setting, e.g. `--set dim=32`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Shorthand for `--set seed=N`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset with planted trend onsets.
    Generate {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Validate an interaction CSV, drop rare attributes and write it to a data directory.
    Ingest {
        #[arg(long, value_name = "FILE")]
        input: PathBuf,
        /// Minimum total sales in the reference month for an attribute to be kept.
        #[arg(long, default_value_t = 0)]
        min_sales: u64,
        /// Month whose sales decide the filter; the last month by default.
        #[arg(long)]
        reference_month: Option<u32>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Train the model and write the checkpoint and epoch log.
    Train {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Search the learning-rate × α grids and keep the best cell.
        #[arg(long)]
        grid: bool,
    },
    /// Score a trained model and the month-on-month baseline on a labeled month.
    Evaluate {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Model config; defaults to the resolved config next to the checkpoint.
        #[arg(long, value_name = "FILE")]
        config: Option<PathBuf>,
        /// Target month to evaluate; the last month by default.
        #[arg(long)]
        target: Option<u32>,
        #[arg(long, default_value_t = 10)]
        top: usize,
        /// Score the baseline by list membership instead of last-month sales.
        #[arg(long)]
        mom_membership: bool,
        /// Give tied positive/negative pairs no credit.
        #[arg(long)]
        strict_ties: bool,
    },
    /// Rank attribute tags per community for the month after the data ends.
    Predict {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "FILE")]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        top: usize,
        /// Also write `predictions.csv` here.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Train once per α in the α grid and tabulate macro AUC.
    SweepAlpha {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Generate { overrides, out } => commands::generate(&overrides, &out),
        Command::Ingest {
            input,
            min_sales,
            reference_month,
            out,
        } => commands::ingest(&input, min_sales, reference_month, &out),
        Command::Train {
            data,
            overrides,
            out,
            grid,
        } => commands::train(&data, &overrides, &out, grid),
        Command::Evaluate {
            data,
            checkpoint,
            out,
            config,
            target,
            top,
            mom_membership,
            strict_ties,
        } => commands::evaluate(&commands::EvaluateArgs {
            data,
            checkpoint,
            out,
            config,
            target,
            top,
            mom_membership,
            strict_ties,
        }),
        Command::Predict {
            data,
            checkpoint,
            config,
            top,
            out,
        } => commands::predict(&data, &checkpoint, config.as_deref(), top, out.as_deref()),
        Command::SweepAlpha { data, overrides, out } => commands::sweep_alpha(&data, &overrides, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { failure::USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
