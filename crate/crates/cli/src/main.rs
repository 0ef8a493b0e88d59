use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use log::LevelFilter;
use serde_json::json;

use sesop::corpus::{load_problem, ForwardProblem};
use sesop::harness::{
    compare_solvers, regularization_sweep, run_once, save_json, save_trace_csv, HarnessError,
    NoiseSpec, SOLVER_NAMES,
};
use sesop::operators::{Provenance, TCC_SAFETY_FACTOR};
use sesop::solvers::{default_tau, tau_lower_bound, SolverConfig, SolverError};

const EXIT_OK: u8 = 0;
const EXIT_IO: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

/// Default directory for output files when `--out` is not given.
const OUT_DIR_VAR: &str = "SESOP_OUT_DIR";

const ADJOINT_TOL: f64 = 1e-10;
const SLOPE_TOL: f64 = 0.1;

#[derive(Parser, Debug)]
#[command(
    name = "sesop",
    version,
    about = "Subspace projection solvers for ill-posed operator equations"
)]
struct Cli {
    /// More log output (-v per-iteration lines, -vv everything).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the operator certificate of a problem.
    Check {
        /// Corpus name or path to a JSON problem file.
        #[arg(long)]
        problem: String,
        /// Also write the certificate as JSON to this path.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Run one solver and write its trace as CSV.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_solver)]
        solver: String,
        #[arg(long, value_parser = parse_delta)]
        delta: f64,
    },
    /// Run one solver over several noise levels and write a JSON report.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_solver)]
        solver: String,
        /// Comma-separated, strictly descending, positive.
        #[arg(long, value_delimiter = ',', required = true, value_parser = parse_delta)]
        deltas: Vec<f64>,
    },
    /// Run several solvers on the same data and write a JSON table.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated solver names.
        #[arg(long, value_delimiter = ',', required = true, value_parser = parse_solver)]
        solvers: Vec<String>,
        #[arg(long, value_parser = parse_delta)]
        delta: f64,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Corpus name or path to a JSON problem file.
    #[arg(long)]
    problem: String,
    /// `auto` or a number above (1+ctc)/(1-ctc).
    #[arg(long, default_value = "auto")]
    tau: Tau,
    /// Seed of the noise direction.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file (defaults to a name inside $SESOP_OUT_DIR or the current directory).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Number of recent gradient stripes per step for `resesop` / `resesop-linear`.
    #[arg(long)]
    history_depth: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Tau {
    Auto,
    Value(f64),
}

impl FromStr for Tau {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(Tau::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Tau::Value(v)),
            _ => Err(format!("expected `auto` or a finite number, got '{s}'")),
        }
    }
}

fn parse_delta(s: &str) -> Result<f64, String> {
    match s.trim().parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
        _ => Err(format!("expected a finite number >= 0, got '{s}'")),
    }
}

fn parse_solver(s: &str) -> Result<String, String> {
    let s = s.trim();
    if SOLVER_NAMES.contains(&s) {
        Ok(s.to_string())
    } else {
        Err(format!(
            "unknown solver '{s}' (known: {})",
            SOLVER_NAMES.join(", ")
        ))
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        let code = match &e {
            HarnessError::Io { .. } => EXIT_IO,
            HarnessError::Solver(
                SolverError::StepCap { .. }
                | SolverError::Contract { .. }
                | SolverError::Geometry { .. },
            ) => EXIT_NOT_CONVERGED,
            _ => EXIT_USAGE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => LevelFilter::Warn,
        1 => LevelFilter::Debug,
        _ => LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();

    let result = match cli.command {
        Command::Check { problem, json } => cmd_check(&problem, json.as_deref()),
        Command::Run {
            common,
            solver,
            delta,
        } => cmd_run(&common, &solver, delta),
        Command::Sweep {
            common,
            solver,
            deltas,
        } => cmd_sweep(&common, &solver, &deltas),
        Command::Compare {
            common,
            solvers,
            delta,
        } => cmd_compare(&common, &solvers, delta),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load(spec: &str) -> Result<ForwardProblem, Failure> {
    load_problem(spec).map_err(|e| Failure::usage(e.to_string()))
}

fn config_for(problem: &ForwardProblem, common: &Common) -> Result<SolverConfig, Failure> {
    let ctc = problem.certificate.ctc;
    let mut config = SolverConfig::for_problem(problem);
    if let Tau::Value(tau) = common.tau {
        let bound = tau_lower_bound(ctc);
        if !(tau > bound) {
            return Err(Failure::usage(format!(
                "tau = {tau} is too small for {}: it must exceed (1+ctc)/(1-ctc) = {bound} (ctc = {ctc})",
                problem.name
            )));
        }
        config = config.with_tau(tau);
    }
    if let Some(n) = common.max_iter {
        config = config.with_max_iter(n);
    }
    if let Some(n) = common.history_depth {
        config = config.with_history_depth(n);
    }
    config
        .validate(ctc)
        .map_err(|e| Failure::usage(e.to_string()))?;
    Ok(config)
}

fn output_path(common: &Common, default_name: String) -> PathBuf {
    if let Some(p) = &common.out {
        return p.clone();
    }
    let dir = std::env::var_os(OUT_DIR_VAR)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."));
    dir.join(default_name)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6e}")).unwrap_or_else(|| "-".into())
}

fn fmt_index(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "-".into())
}

fn cmd_check(spec: &str, json_out: Option<&Path>) -> Result<u8, Failure> {
    let problem = load(spec)?;
    let cert = &problem.certificate;
    let adjoint_ok = cert.adjoint_defect <= ADJOINT_TOL;
    let taylor_ok = cert.taylor_order.is_second_order(SLOPE_TOL);
    let ctc_ok = (0.0..1.0).contains(&cert.ctc);
    let cf_ok = cert.c_f.is_finite() && cert.c_f > 0.0;
    let half_ball_ok = problem.half_ball_holds();
    let mark = |ok: bool| if ok { "ok" } else { "FAILED" };

    println!("problem        {}", problem.name);
    println!(
        "dimensions     x: {}, y: {}",
        problem.operator.dim_x(),
        problem.operator.dim_y()
    );
    println!(
        "adjoint defect {:.3e}  [{}]",
        cert.adjoint_defect,
        mark(adjoint_ok)
    );
    println!(
        "taylor slope   {}  [{}]",
        cert.taylor_order,
        mark(taylor_ok)
    );
    match cert.ctc_provenance {
        Provenance::Analytic => {
            println!("ctc            {} (analytic)  [{}]", cert.ctc, mark(ctc_ok));
        }
        Provenance::Empirical => {
            println!(
                "ctc            {:.6} (empirical: sampled max {} x{TCC_SAFETY_FACTOR} safety factor)  [{}]",
                cert.ctc,
                fmt_opt(cert.ctc_sampled),
                mark(ctc_ok)
            );
        }
    }
    println!("c_F            {:.6}  [{}]", cert.c_f, mark(cf_ok));
    println!(
        "half ball      ||x+ - x0|| = {:.6} <= rho/2 = {:.6}  [{}]",
        problem.x_plus.distance(problem.x0()),
        0.5 * problem.ball.radius,
        mark(half_ball_ok)
    );
    if ctc_ok {
        println!(
            "tau bound      {:.6} (auto tau {:.6})",
            tau_lower_bound(cert.ctc),
            default_tau(cert.ctc)
        );
    }
    let all_ok = adjoint_ok && taylor_ok && ctc_ok && cf_ok && half_ball_ok;

    if let Some(path) = json_out {
        let report = json!({
            "problem": problem.name,
            "certificate": cert,
            "half_ball": half_ball_ok,
            "radius": problem.ball.radius,
            "passed": all_ok,
        });
        save_json(&report, path)?;
    }
    Ok(if all_ok { EXIT_OK } else { EXIT_USAGE })
}

fn cmd_run(common: &Common, solver: &str, delta: f64) -> Result<u8, Failure> {
    let problem = load(&common.problem)?;
    let config = config_for(&problem, common)?;
    let spec = NoiseSpec::new(delta, common.seed)?;
    let trace = run_once(&problem, solver, &config, spec)?;
    let path = output_path(
        common,
        format!("trace-{}-{solver}-{delta:e}.csv", file_stem(&problem.name)),
    );
    save_trace_csv(&trace, &path)?;

    println!("problem        {}", problem.name);
    println!("solver         {solver}");
    println!("delta          {delta:e}");
    println!("tau            {:.6}", config.tau);
    println!("stop reason    {}", trace.stop_reason);
    println!("n*             {}", fmt_index(trace.stop_index));
    println!("steps          {}", trace.steps());
    println!("final residual {:.6e}", trace.final_residual());
    println!("final error    {}", fmt_opt(trace.final_error()));
    for w in &trace.warnings {
        log::warn!("{w:?}");
    }
    println!("trace          {}", path.display());
    Ok(if trace.stop_reason.converged() {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}

fn cmd_sweep(common: &Common, solver: &str, deltas: &[f64]) -> Result<u8, Failure> {
    let problem = load(&common.problem)?;
    let config = config_for(&problem, common)?;
    let report = regularization_sweep(&problem, solver, &config, deltas, common.seed)?;
    let path = output_path(
        common,
        format!("sweep-{}-{solver}.json", file_stem(&problem.name)),
    );
    save_json(&report, &path)?;

    println!(
        "{} / {solver}, tau = {:.6}, seed = {}",
        problem.name, config.tau, common.seed
    );
    println!(
        "{:>10} {:>8} {:>14} {:>14} {:>10}  stop",
        "delta", "n*", "residual", "error", "time [s]"
    );
    for r in &report.rows {
        println!(
            "{:>10.1e} {:>8} {:>14} {:>14} {:>10.3}  {}",
            r.delta,
            fmt_index(r.n_star),
            fmt_opt(r.final_residual),
            fmt_opt(r.final_error),
            r.wall_time_s,
            r.stop_reason
        );
    }
    println!(
        "error trend    {} (largest delta {}, smallest delta {})",
        if report.trend.decreased {
            "decreasing"
        } else {
            "not decreasing"
        },
        fmt_opt(report.trend.error_at_largest_delta),
        fmt_opt(report.trend.error_at_smallest_delta)
    );
    println!("report         {}", path.display());
    Ok(if report.failed {
        EXIT_NOT_CONVERGED
    } else {
        EXIT_OK
    })
}

fn cmd_compare(common: &Common, solvers: &[String], delta: f64) -> Result<u8, Failure> {
    let problem = load(&common.problem)?;
    let config = config_for(&problem, common)?;
    let names: Vec<&str> = solvers.iter().map(String::as_str).collect();
    let spec = NoiseSpec::new(delta, common.seed)?;
    let report = compare_solvers(&problem, &names, &config, spec)?;
    let path = output_path(
        common,
        format!("compare-{}-{delta:e}.json", file_stem(&problem.name)),
    );
    save_json(&report, &path)?;

    println!(
        "{}, delta = {delta:e}, tau = {:.6}, seed = {}",
        problem.name, config.tau, common.seed
    );
    println!(
        "{:<16} {:>8} {:>14} {:>14} {:>9} {:>9}  stop",
        "solver", "n*", "residual", "error", "forward", "adjoint"
    );
    for r in &report.rows {
        println!(
            "{:<16} {:>8} {:>14.6e} {:>14} {:>9} {:>9}  {}",
            r.solver,
            fmt_index(r.n_star),
            r.final_residual,
            fmt_opt(r.final_error),
            r.forward_evals,
            r.adjoint_evals,
            r.stop_reason
        );
    }
    println!("report         {}", path.display());
    Ok(if report.failed {
        EXIT_NOT_CONVERGED
    } else {
        EXIT_OK
    })
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}
