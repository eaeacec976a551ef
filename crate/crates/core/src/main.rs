use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qetlab::harness::{self, ExperimentConfig, RunOptions, CSV_COLUMNS};

#[derive(Parser)]
#[command(name = "qetlab", version, about = "Numerical laboratory for normal typicality on an energy shell")]
#[command(after_long_help = CSV_COLUMNS)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment; exit 0 if every check passes, 1 otherwise.
    #[command(after_long_help = CSV_COLUMNS)]
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads; results do not depend on this.
        #[arg(long, env = "QETLAB_WORKERS", default_value_t = 1)]
        workers: usize,
        /// Output directory, overriding `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a configuration without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, workers, out } => match harness::run_file(&config, &RunOptions { workers, out_dir: out }) {
            Ok(manifest) => {
                for check in &manifest.checks {
                    println!("{} {}: {}", if check.passed { "PASS" } else { "FAIL" }, check.name, check.detail);
                }
                if manifest.all_passed() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(1)
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Command::Validate { config } => {
            let parsed = match ExperimentConfig::load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let issues = parsed.validate();
            if issues.is_empty() {
                println!("ok");
                ExitCode::SUCCESS
            } else {
                for issue in &issues {
                    eprintln!("{issue}");
                }
                ExitCode::from(2)
            }
        }
    }
}
