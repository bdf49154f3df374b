use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use harnack_lab::runner::{self, Overrides};

/// Monte Carlo and quadrature checks of Harnack-type inequalities.
#[derive(Parser)]
#[command(name = "harnack-lab", version)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Master seed, overriding the configuration file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the configuration file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Runs every grid point of a TOML experiment file.
    Run { config: PathBuf },
    /// Prints the checker catalogue.
    ListChecks,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::ListChecks => {
            print!("{}", runner::list_checks());
            ExitCode::SUCCESS
        }
        Command::Run { config } => {
            let overrides = Overrides {
                workers: cli.workers,
                seed: cli.seed,
                out: cli.out,
            };
            match runner::run(&config, &overrides) {
                Ok((outcome, dir)) => {
                    print!("{}", runner::summary(&outcome));
                    eprintln!("wrote {}", dir.display());
                    if outcome.any_violated() {
                        ExitCode::from(1)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
    }
}
