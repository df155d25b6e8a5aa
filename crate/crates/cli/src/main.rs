//! `circwass` command-line tool.

mod bench;
mod dist;
mod fuzz;
mod label;
mod output;
mod train;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "circwass", version, about = "Circular Wasserstein distances, labels and toy training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Distance between two histogram files (or one file and a one-hot bin).
    Dist(dist::DistArgs),
    /// Emit a conservative target label.
    Label(label::LabelArgs),
    /// Compare the fast solvers against the exact LP on random cases.
    Fuzz(fuzz::FuzzArgs),
    /// Time the solvers across histogram sizes.
    Bench(bench::BenchArgs),
    /// Train the synthetic pose classifier with one or more losses.
    TrainToy(train::TrainArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors are validation errors; help and version succeed
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Dist(a) => dist::run(&a),
        Command::Label(a) => label::run(&a),
        Command::Fuzz(a) => fuzz::run(&a),
        Command::Bench(a) => bench::run(&a),
        Command::TrainToy(a) => train::run(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
