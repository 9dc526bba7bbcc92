use clap::{Parser, Subcommand};
use moving_spde_cli::config::{ExperimentConfig, SuiteName};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "moving-spde", version, about = "Experiment runner for SPDEs on moving curves")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the suites of a configuration and write reports.
    Run {
        config: PathBuf,
        /// Use all cores for path-level parallelism inside suites.
        #[arg(long)]
        parallel: bool,
    },
    /// List the available suites.
    ListSuites,
    /// Parse and validate a configuration without running it.
    Validate { config: PathBuf },
    /// Print the tool and report schema versions.
    Version,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::ListSuites => {
            for s in SuiteName::ALL {
                println!("{:<22} {}", s.as_str(), s.description());
            }
            ExitCode::SUCCESS
        }
        Command::Version => {
            println!("moving-spde {}", env!("CARGO_PKG_VERSION"));
            println!("report schema {}", moving_spde_cli::report_schema_version());
            ExitCode::SUCCESS
        }
        Command::Validate { config } => match ExperimentConfig::load(&config) {
            Ok(cfg) => {
                let names: Vec<&str> = cfg.suites.iter().map(|s| s.as_str()).collect();
                println!("{}: ok ({})", config.display(), names.join(", "));
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("{}: {e}", config.display());
                ExitCode::from(2)
            }
        },
        Command::Run { config, parallel } => {
            let cfg = match ExperimentConfig::load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("{}: {e}", config.display());
                    return ExitCode::from(2);
                }
            };
            match moving_spde_cli::run(&cfg, &config, parallel) {
                Ok(summary) => {
                    println!("reports written to {}", summary.output_dir.display());
                    if summary.all_pass() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::FAILURE
                    }
                }
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::from(3)
                }
            }
        }
    }
}
