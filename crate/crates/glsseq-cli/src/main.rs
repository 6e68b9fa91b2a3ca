//! Command line front end: generate datasets, solve them with any rung of
//! the algorithm ladder, verify outputs against an oracle, and benchmark.
//!
//! Exit codes: 0 success, 1 verification found wrong answers, 2 bad usage,
//! 3 the run itself failed (I/O, non-SPD covariance, inconsistent files).

mod commands;
mod report;

use clap::{Parser, Subcommand};
use commands::{
    cmd_bench, cmd_dump, cmd_gen, cmd_solve, cmd_verify, BenchArgs, DumpArgs, GenArgs, SolveArgs,
    VerifyArgs,
};

#[derive(Parser)]
#[command(
    name = "glsseq",
    version,
    about = "Long sequences of correlated GLS problems: generate, solve, verify, benchmark"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded dataset: static inputs plus the panel stream.
    Gen(GenArgs),
    /// Solve the sequence and write the coefficient file.
    Solve(SolveArgs),
    /// Recompute every solution with an explicit-inverse oracle and compare.
    Verify(VerifyArgs),
    /// Time solver configurations and tabulate the results.
    Bench(BenchArgs),
    /// Dump the coefficient file as CSV.
    Dump(DumpArgs),
}

fn main() -> std::process::ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Dump(args) => cmd_dump(args),
    };
    match result {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            std::process::ExitCode::from(err.exit_code())
        }
    }
}
