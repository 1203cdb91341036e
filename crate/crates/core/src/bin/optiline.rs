//! Command-line experiment runner.
//!
//! `optiline run --config cfg.json [--out DIR] [--mode det|conc] [--seed-offset N]`
//! executes every configured repetition and writes per-repetition and
//! aggregate CSVs. Exit codes: 0 success, 2 configuration error, 3 runtime
//! failure.
//!
//! `optiline aggregate --out FILE rep1.csv rep2.csv ...` recomputes the
//! aggregate CSV from existing repetition reports.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use optiline::runner::{self, aggregate_reports, ExecutionMode, RunError};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Det,
    Conc,
}

impl From<ModeArg> for ExecutionMode {
    fn from(mode: ModeArg) -> Self {
        match mode {
            ModeArg::Det => ExecutionMode::Deterministic,
            ModeArg::Conc => ExecutionMode::Concurrent,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "optiline",
    about = "Self-optimizing production line experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment repetitions and write the CSV reports.
    Run {
        /// Experiment configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides the configured one.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Execution mode; overrides the configured one.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Offset added to every repetition seed.
        #[arg(long, default_value_t = 0)]
        seed_offset: u64,
    },
    /// Aggregate existing repetition reports into one median CSV.
    Aggregate {
        /// Where to write the aggregate CSV.
        #[arg(long)]
        out: PathBuf,
        /// Repetition report files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

fn execute(cli: Cli) -> Result<(), RunError> {
    match cli.command {
        Command::Run {
            config,
            out,
            mode,
            seed_offset,
        } => {
            let summary = runner::run(
                &config,
                out.as_deref(),
                mode.map(ExecutionMode::from),
                seed_offset,
            )?;
            println!(
                "wrote {} repetition reports and {}",
                summary.repetition_files.len(),
                summary.aggregate_file.display()
            );
            Ok(())
        }
        Command::Aggregate { out, inputs } => {
            let reports = inputs
                .iter()
                .map(|p| {
                    std::fs::read_to_string(p)
                        .map_err(|e| RunError::Runtime(format!("{}: {e}", p.display())))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let aggregate = aggregate_reports(&reports)?;
            std::fs::write(&out, aggregate)
                .map_err(|e| RunError::Runtime(format!("{}: {e}", out.display())))?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
