//! `perfunc`: fit performance functions to observation files and plan
//! cost-optimal data collection from the fitted models.

mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::LevelFilter;

use config::{CommonArgs, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "perfunc", version, about = "Performance functions over translated and manual training data")]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Errors only.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit AMUE parameters and/or GPR hyperparameters per (language, pivot size).
    Fit(CommonArgs),
    /// Train/test split evaluation with RMSE and r² per fine-tuning setup.
    Evaluate(CommonArgs),
    /// Least-cost operating points for increasing performance levels, with a T-M diagram.
    ExpansionPath(CommonArgs),
    /// Isoperf curves at the requested levels.
    Isoperf(CommonArgs),
    /// Minimum cost against performance, one series per (language, pivot size).
    CostCurve(CommonArgs),
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let (args, action): (&CommonArgs, fn(&RunConfig) -> anyhow::Result<output::Outputs>) = match &cli.command {
        Command::Fit(a) => (a, commands::fit),
        Command::Evaluate(a) => (a, commands::evaluate),
        Command::ExpansionPath(a) => (a, commands::expansion_path),
        Command::Isoperf(a) => (a, commands::isoperf),
        Command::CostCurve(a) => (a, commands::cost_curve),
    };
    let cfg = RunConfig::resolve(args)?;
    let outputs = action(&cfg)?;
    log::debug!("writing {}", outputs.names().collect::<Vec<_>>().join(", "));
    for path in outputs.commit(&cfg.out_dir)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => LevelFilter::Error,
        (false, 0) => LevelFilter::Warn,
        (false, 1) => LevelFilter::Info,
        _ => LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
