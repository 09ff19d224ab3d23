use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use castflow::cli_io::run::{execute, Command, Invocation};

#[derive(Parser)]
#[command(name = "castflow", version, about = "Continuous-casting free boundary solver and diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the configured problem; writes field.csv, solve_report.json, free_boundary.csv.
    Solve(Args),
    /// Write the one-dimensional oracle profile for the configured parameters.
    Oracle1d(Args),
    /// Analyze a field snapshot; writes analysis.json.
    Analyze(Args),
    /// Run the acceptance suite (the config is optional and only supplies the seed).
    Verify(Args),
    /// Run every point of the configured parameter sweep.
    Sweep(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; defaults to `[output] dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = std::thread::available_parallelism().map_or(1, |n| n.get()))]
    threads: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Solve(a) => (Command::Solve, a),
        Cmd::Oracle1d(a) => (Command::Oracle1d, a),
        Cmd::Analyze(a) => (Command::Analyze, a),
        Cmd::Verify(a) => (Command::Verify, a),
        Cmd::Sweep(a) => (Command::Sweep, a),
    };
    let inv = Invocation { command, config: args.config, out: args.out, threads: args.threads.max(1) };
    match execute(&inv) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("castflow: {e}");
            ExitCode::from(2)
        }
    }
}
