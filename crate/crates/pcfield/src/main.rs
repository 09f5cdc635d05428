use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pcfield::{output, run, Command, RunOptions};

/// Optimal and minimax-robust extrapolation for periodically correlated
/// random fields on the sphere.
///
/// Exit codes: 0 success, 1 other failure, 2 minimality failure, 3 schema
/// error, 4 minimax search did not converge, 5 validation disagreement.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Problem file (JSON).
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Directory for the artifacts.
    #[arg(long, global = true, default_value = ".")]
    output: PathBuf,
    /// Overrides the seed of the simulation section.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (all cores when absent).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Reject unknown fields instead of warning about them.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Optimal estimate per channel: c, error, h on the grid.
    Solve,
    /// Least-favorable densities and the minimax estimate for a class.
    Minimax,
    /// Canonical factorization of every signal density.
    Factorize,
    /// Monte Carlo estimate of the error.
    Simulate,
    /// Solver, covariance oracle and Monte Carlo side by side.
    Validate,
    /// Finite-past covariance oracle.
    Oracle,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Solve => Command::Solve,
            Cmd::Minimax => Command::Minimax,
            Cmd::Factorize => Command::Factorize,
            Cmd::Simulate => Command::Simulate,
            Cmd::Validate => Command::Validate,
            Cmd::Oracle => Command::Oracle,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let c = &cli.common;
    let Some(input) = &c.input else {
        eprintln!("error: --input is required");
        return ExitCode::from(1);
    };
    if let Some(n) = c.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set up {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    let bytes = match std::fs::read(input) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", input.display());
            return ExitCode::from(1);
        }
    };
    let opts = RunOptions { seed: c.seed, strict: c.strict };
    match run(cli.command.into(), &bytes, &opts) {
        Ok(outcome) => {
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            if let Err(e) = output::write_all(&c.output, &outcome.artifacts) {
                eprintln!("error: cannot write to {}: {e}", c.output.display());
                return ExitCode::from(1);
            }
            println!("{}", outcome.summary);
            ExitCode::from(outcome.status.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
