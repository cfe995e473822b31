use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod columns;
mod diag;
mod failure;
mod options;
mod perturb;
mod plot;
mod run;
mod simulate;
mod validate;

use failure::Failure;

/// Pretty JSON on stdout. A closed pipe is not an error.
pub fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Failure> {
    use std::io::Write;
    let text = serde_json::to_string_pretty(value).expect("output serializes");
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Failure::new(failure::Category::Io, e)),
        _ => Ok(()),
    }
}

/// Batch-wise text evaluation with an LLM judge.
///
/// Exit codes: 0 success, 1 I/O error, 2 configuration or input error,
/// 3 judge failure, 4 unparseable responses in at least half the batches.
#[derive(Debug, Parser)]
#[command(name = "batcheval", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score a dataset over several rounds of regrouped batches.
    Run(options::RunOptions),
    /// Correlations, batch bias, entropy and error decomposition of a run.
    Diag(diag::DiagArgs),
    /// Sweep simulated-judge settings on synthetic data.
    Simulate(options::SimulateOptions),
    /// Write a copy of a dataset with random deletions and synonym swaps.
    Perturb(perturb::PerturbArgs),
    /// Check a dataset file and optional template directory.
    Validate(validate::ValidateArgs),
    /// Render a run's diagnostics as SVG charts and columnar files.
    Plot(plot::PlotArgs),
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run(o) => run::run(o),
        Command::Diag(a) => diag::diag(a),
        Command::Simulate(o) => simulate::simulate(o),
        Command::Perturb(a) => perturb::perturb(a),
        Command::Validate(a) => validate::validate(a),
        Command::Plot(a) => plot::plot(a),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error ({}): {:#}", f.category.label(), f.error);
            ExitCode::from(f.category.code())
        }
    }
}
