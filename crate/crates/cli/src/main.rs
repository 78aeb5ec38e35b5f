//! Batch front door for the risk-allocation library: parse a problem
//! spec, run one of the measure/allocate/verify/bounded/counterexample
//! commands, and emit a deterministic JSON report (plus optional CSV plot
//! data).
//!
//! Exit codes: 0 success, 2 spec/validation error, 3 domain or
//! precondition error, 4 verification failure.

mod commands;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use riskalloc::RiskError;

#[derive(Parser)]
#[command(
    name = "riskalloc",
    version,
    about = "Distortion risk measures and co-monotone optimal risk allocation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SpecArg {
    /// Problem spec JSON file.
    #[arg(long, value_name = "FILE")]
    spec: PathBuf,
    /// Comparison tolerance.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a distortion risk measure in both forms, with optional
    /// truncation-regularity gaps.
    Measure {
        #[command(flatten)]
        common: SpecArg,
        /// Kernel to measure: an agent index or a shorthand like cvar:0.5.
        /// Defaults to every agent kernel in the spec.
        #[arg(long, value_name = "ID")]
        kernel: Option<String>,
        /// Truncation levels m1,m2,... for the regularity report.
        #[arg(long, value_name = "LEVELS", value_delimiter = ',')]
        trunc: Option<Vec<f64>>,
    },
    /// Solve the co-monotone optimal allocation problem.
    Allocate {
        #[command(flatten)]
        common: SpecArg,
        /// Directory for psi.csv, selector.csv, and alloc_i.csv plot data.
        #[arg(long, value_name = "DIR")]
        emit_csv: Option<PathBuf>,
    },
    /// Cross-check the closed form against the independent oracles.
    Verify {
        #[command(flatten)]
        common: SpecArg,
        /// Brute-force grid cells.
        #[arg(long, value_name = "K")]
        cells: Option<usize>,
        /// Seed for the stochastic oracles.
        #[arg(long, value_name = "S")]
        seed: Option<u64>,
        /// Test hook: perturb the claimed optimal value by this amount.
        #[arg(long, value_name = "X", hide = true, default_value_t = 0.0)]
        inject_error: f64,
    },
    /// Decide boundedness of the unconstrained problem on a finite space.
    Bounded {
        #[command(flatten)]
        common: SpecArg,
        /// Randomized certificate-search iterations.
        #[arg(long, value_name = "N")]
        iters: Option<usize>,
        /// Seed for the randomized search.
        #[arg(long, value_name = "S")]
        seed: Option<u64>,
    },
    /// The moral-hazard counterexample: the non-comonotone pair beats
    /// every admissible allocation by at least the strict-gap constant.
    Counterexample {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        beta: f64,
        /// Total risk shorthand: exp:RATE or uniform:LO:HI.
        #[arg(long, value_name = "DIST")]
        total: String,
        /// Comparison tolerance.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
}

fn exit_code_for(err: &RiskError) -> u8 {
    match err {
        RiskError::Validation(_) | RiskError::Parse(_) => 2,
        RiskError::Domain(_) | RiskError::Precondition(_) => 3,
        RiskError::Verification(_) => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Measure { common, kernel, trunc } => {
            commands::cmd_measure(&common.spec, kernel.as_deref(), trunc.clone(), common.tol)
        }
        Command::Allocate { common, emit_csv } => {
            commands::cmd_allocate(&common.spec, emit_csv.as_deref(), common.tol)
        }
        Command::Verify { common, cells, seed, inject_error } => {
            commands::cmd_verify(&common.spec, *cells, *seed, common.tol, *inject_error)
        }
        Command::Bounded { common, iters, seed } => {
            commands::cmd_bounded(&common.spec, *iters, *seed)
        }
        Command::Counterexample { alpha, beta, total, tol } => {
            commands::cmd_counterexample(*alpha, *beta, total, *tol)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
