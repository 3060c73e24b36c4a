use std::io::Write;
use std::process::ExitCode;

use aks_cli::commands;
use aks_cli::config::{CommonArgs, RunConfig};
use aks_cli::Failure;
use clap::{Parser, Subcommand};

/// Adler–Kostant–Symes flows: simulation, dual-route comparison and the
/// verification battery.
#[derive(Parser)]
#[command(name = "aks-flow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the reduced trajectory (CSV) and run metadata (JSON).
    Simulate(CommonArgs),
    /// Compare the factorization trajectory with RK4 integration.
    Compare(CommonArgs),
    /// Run the verification battery.
    Check {
        #[command(flatten)]
        common: CommonArgs,
        /// Enumerate the registered checks without running them.
        #[arg(long)]
        list: bool,
        /// Use ω_μ + ω_ν in the pullback check (negative control).
        #[arg(long)]
        break_sign: bool,
    },
}

fn run(cli: Cli) -> Result<String, Failure> {
    match cli.command {
        Command::Simulate(args) => commands::simulate(&RunConfig::resolve(&args)?),
        Command::Compare(args) => commands::compare(&RunConfig::resolve(&args)?).map(|(json, _)| json),
        Command::Check { list: true, .. } => Ok(commands::list_checks()),
        Command::Check {
            common, break_sign, ..
        } => {
            let (json, report) = commands::check(&RunConfig::resolve(&common)?, break_sign)?;
            print!("{json}");
            if report.all_pass() {
                Ok(String::new())
            } else {
                Err(Failure::Checks(report.failures().map(|c| c.summary.name.clone()).collect()))
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("AKS_FLOW_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            let _ = std::io::stdout().flush();
            ExitCode::SUCCESS
        }
        Err(e) => {
            let _ = std::io::stdout().flush();
            eprintln!("aks-flow: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
