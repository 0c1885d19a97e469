use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use deahes_cli::{render_tsv, run_grid, summarize, CliError, ExperimentConfig, RunOptions};

#[derive(Parser)]
#[command(name = "deahes", version, about = "Elastic-averaging training simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every cell of an experiment grid and write the metrics CSV.
    Run {
        config: PathBuf,
        /// Number of cells simulated in parallel (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Keep complete cells already in the output file.
        #[arg(long)]
        resume: bool,
    },
    /// Print final-round accuracy per method and grid point as TSV.
    Summarize { csv: PathBuf },
    /// Check a config and print it with every default filled in.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run { config, jobs, resume } => {
            let config = ExperimentConfig::load(&config)?;
            let report = run_grid(&config, &RunOptions { jobs, resume })?;
            eprintln!(
                "{} cells ({} resumed), {} rows written to {}",
                report.cells,
                report.resumed,
                report.rows_written,
                config.output.display()
            );
        }
        Command::Summarize { csv } => print!("{}", render_tsv(&summarize(&csv)?)),
        Command::Validate { config } => print!("{}", ExperimentConfig::load(&config)?.to_toml()),
    }
    Ok(())
}
