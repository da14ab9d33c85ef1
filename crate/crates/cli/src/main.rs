//! `extcalc`: runs a named verification suite (JSON report) or evaluates a
//! characteristic-function grid (CSV).
//!
//! Exit codes: 0 everything passed, 1 a mathematical check failed, 2 usage
//! or I/O error.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use extcalc::charfn::{self, GridSpec};
use extcalc::suites::{self, SuiteConfig, SuiteName};
use extcalc::TolerancePolicy;

#[derive(Debug, Parser)]
#[command(name = "extcalc", version, about = "Verification suites and characteristic-function grids")]
struct Args {
    /// Suite to run; writes a JSON report.
    #[arg(long, conflicts_with = "grid")]
    suite: Option<String>,

    #[arg(long, env = "EXTCALC_SEED", default_value_t = 0)]
    seed: u64,

    #[arg(long, default_value_t = 50)]
    trials: usize,

    /// Relative singular-value cutoff for rank decisions.
    #[arg(long)]
    tol_rank: Option<f64>,

    /// Operator-norm threshold for equality checks.
    #[arg(long)]
    tol_eq: Option<f64>,

    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Model for --grid: shift:<m>, exit:<m>:<m1> or restricted:<m>:<c>@<k>,...
    #[arg(long, default_value = "shift:1")]
    model: String,

    /// Base point λ in the upper half-plane, as <re>,<im> or i.
    #[arg(long, default_value = "i", allow_hyphen_values = true)]
    lambda: String,

    /// Grid of z-points: "default", "empty", or x=..;y=..;ray=.. with
    /// comma-separated values; writes a CSV.
    #[arg(long)]
    grid: Option<String>,
}

enum Failure {
    Usage(String),
    Math(String),
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Math(msg)) => {
            eprintln!("extcalc: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("extcalc: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(args: &Args) -> Result<(), Failure> {
    let defaults = TolerancePolicy::default();
    let tol = TolerancePolicy::new(args.tol_rank.unwrap_or(defaults.rank_tol), args.tol_eq.unwrap_or(defaults.eq_tol))
        .map_err(|e| Failure::Usage(e.to_string()))?;
    match (&args.suite, &args.grid) {
        (Some(name), None) => run_suite(name, args, tol),
        (None, Some(grid)) => run_grid(grid, args, tol),
        _ => Err(Failure::Usage("give exactly one of --suite <name> or --grid <spec>".into())),
    }
}

fn run_suite(name: &str, args: &Args, tol: TolerancePolicy) -> Result<(), Failure> {
    let suite: SuiteName = name.parse().map_err(|e: extcalc::Error| {
        let known: Vec<&str> = SuiteName::ALL.iter().map(|s| s.as_str()).collect();
        Failure::Usage(format!("{e}; known suites: {}", known.join(", ")))
    })?;
    let cfg = SuiteConfig { suite, seed: args.seed, trials: args.trials, tolerances: tol };
    let report = suites::run_suite(&cfg).map_err(|e| Failure::Usage(e.to_string()))?;
    write_output(args.out.as_deref(), |w| {
        serde_json::to_writer_pretty(&mut *w, &report).map_err(io::Error::other)?;
        writeln!(w)
    })?;
    if report.passed {
        Ok(())
    } else {
        let failed: Vec<&str> = report.cases.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        Err(Failure::Math(format!("suite {} failed: {}", report.suite, failed.join("; "))))
    }
}

fn run_grid(spec: &str, args: &Args, tol: TolerancePolicy) -> Result<(), Failure> {
    let grid: GridSpec = spec.parse().map_err(|e: extcalc::Error| Failure::Usage(e.to_string()))?;
    let model = suites::parse_model(&args.model).map_err(|e| Failure::Usage(e.to_string()))?;
    let lambda = suites::parse_point(&args.lambda).map_err(|e| Failure::Usage(e.to_string()))?;
    let result = charfn::charfn_grid(&model, lambda, &grid, &tol).map_err(|e| Failure::Math(e.to_string()))?;
    write_output(args.out.as_deref(), |w| suites::write_grid_csv(&result, w).map_err(io::Error::other))?;
    if result.flagged > 0 {
        return Err(Failure::Math(format!("{} grid point(s) flagged", result.flagged)));
    }
    if result.min_bound_slack < -1e-10 {
        return Err(Failure::Math(format!("norm bound violated: slack {:e}", result.min_bound_slack)));
    }
    Ok(())
}

fn write_output(path: Option<&Path>, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), Failure> {
    let io_err = |e: io::Error| Failure::Usage(format!("writing output: {e}"));
    match path {
        Some(p) => {
            let file = File::create(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
            let mut w = BufWriter::new(file);
            body(&mut w).map_err(io_err)?;
            w.flush().map_err(io_err)
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            body(&mut w).map_err(io_err)?;
            w.flush().map_err(io_err)
        }
    }
}
