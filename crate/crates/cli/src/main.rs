//! `sqr`: fit, tune, check and benchmark smoothed quantile regression.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 solver
//! non-convergence (artifacts are still written).

mod commands;
mod failure;
mod io;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{BenchArgs, CvArgs, FitArgs, ImprovementArgs, KktArgs, SimulateArgs};
use failure::{Failure, Status};

#[derive(Debug, Parser)]
#[command(name = "sqr", version, about = "Penalized smoothed quantile regression")]
struct Cli {
    /// Worker threads for benchmarks and cross-validation; results do not
    /// depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Multi-stage fit at a fixed lambda.
    Fit(FitArgs),
    /// Cross-validated lambda selection and refit.
    Cv(CvArgs),
    /// Write a synthetic dataset and its true coefficients.
    Simulate(SimulateArgs),
    /// Monte Carlo comparison of estimators.
    Bench(BenchArgs),
    /// KKT residual of a stored fit.
    KktCheck(KktArgs),
    /// Relative improvement of each reweighting stage.
    Improvement(ImprovementArgs),
    /// Re-run the command recorded in a manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory; defaults to the recorded one.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn replay(path: &std::path::Path, out: Option<PathBuf>) -> Result<Status, Failure> {
    let (command, table) = manifest::read_raw(path)?;
    macro_rules! rerun {
        ($ty:ty, $run:path) => {{
            let mut args: $ty = manifest::args_from(&table)?;
            if let Some(o) = out {
                args.out = o;
            }
            $run(&args)
        }};
    }
    match command.as_str() {
        "fit" => rerun!(FitArgs, commands::fit),
        "cv" => rerun!(CvArgs, commands::cv),
        "simulate" => rerun!(SimulateArgs, commands::simulate),
        "bench" => rerun!(BenchArgs, commands::bench),
        "improvement" => rerun!(ImprovementArgs, commands::improvement),
        other => Err(Failure::Usage(format!("manifest command '{other}' cannot be replayed"))),
    }
}

fn run(cli: Cli) -> Result<Status, Failure> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Failure::Usage("threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::Usage(format!("cannot configure threads: {e}")))?;
    }
    match cli.command {
        Command::Fit(a) => commands::fit(&a),
        Command::Cv(a) => commands::cv(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Bench(a) => commands::bench(&a),
        Command::KktCheck(a) => commands::kkt_check(&a),
        Command::Improvement(a) => commands::improvement(&a),
        Command::Replay { manifest, out } => replay(&manifest, out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(Status::NotConverged) => {
            eprintln!("warning: at least one solve did not converge; outputs are flagged");
            ExitCode::from(Status::NotConverged.code())
        }
        Ok(s) => ExitCode::from(s.code()),
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
