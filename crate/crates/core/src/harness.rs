//! Noisy data, single runs, δ-sweeps, solver comparisons and their
//! CSV/JSON artifacts.

use std::collections::HashSet;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::corpus::ForwardProblem;
use crate::operators::{CountingOperator, OperationCounts};
use crate::sampling::{seeded_rng, unit_vector, RNG_ALGORITHM};
use crate::solvers::{
    solve_landweber_variant, solve_resesop_linear, solve_resesop_linear_two,
    solve_resesop_nonlinear, solve_resesop_nonlinear_two, solve_sesop_linear_exact,
    solve_sesop_nonlinear_exact, IterationTrace, SolverConfig, SolverError, StepType, StopReason,
};
use crate::vector::RealVector;

/// Registered solver identifiers accepted by [`run_once`].
pub const SOLVER_NAMES: [&str; 5] = [
    "resesop-linear",
    "resesop-linear2",
    "resesop",
    "resesop2",
    "landweber",
];

/// Header of trace CSV files.
pub const TRACE_COLUMNS: [&str; 10] = [
    "n",
    "residual_norm",
    "error_norm",
    "alpha",
    "xi",
    "step_type",
    "gamma",
    "descent_s",
    "t_current",
    "t_previous",
];

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown solver '{0}' (known: {known})", known = SOLVER_NAMES.join(", "))]
    UnknownSolver(String),
    #[error("noise level must be finite and >= 0, got {0}")]
    InvalidNoise(f64),
    #[error("invalid noise levels: {0}")]
    InvalidDeltas(String),
    #[error("a comparison needs at least two solvers, got {0}")]
    TooFewSolvers(usize),
    #[error("solver '{0}' listed more than once")]
    DuplicateSolver(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// Noise level and seed of the perturbation direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseSpec {
    pub delta: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(delta: f64, seed: u64) -> Result<Self, HarnessError> {
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(HarnessError::InvalidNoise(delta));
        }
        Ok(Self { delta, seed })
    }

    pub fn exact() -> Self {
        Self {
            delta: 0.0,
            seed: 0,
        }
    }
}

/// `y + δ e` with `e` a seeded uniform unit vector, so `||y^δ - y|| = δ`.
pub fn add_noise(y: &RealVector, spec: NoiseSpec) -> RealVector {
    if spec.delta == 0.0 || y.dim() == 0 {
        return y.clone();
    }
    let mut rng = seeded_rng(spec.seed);
    let e = unit_vector(&mut rng, y.dim());
    y.add_scaled(spec.delta, &e)
}

fn check_solver(name: &str) -> Result<(), HarnessError> {
    if SOLVER_NAMES.contains(&name) {
        Ok(())
    } else {
        Err(HarnessError::UnknownSolver(name.to_string()))
    }
}

/// Runs one registered solver on `y^δ = add_noise(y, spec)`. With `δ = 0`
/// the exact-data variant runs on the unperturbed data.
pub fn run_once(
    problem: &ForwardProblem,
    solver: &str,
    config: &SolverConfig,
    spec: NoiseSpec,
) -> Result<IterationTrace, HarnessError> {
    check_solver(solver)?;
    let spec = NoiseSpec::new(spec.delta, spec.seed)?;
    let delta = spec.delta;
    let exact = delta == 0.0;
    let y = add_noise(&problem.y_exact, spec);
    let trace = match solver {
        "resesop-linear" if exact => {
            solve_sesop_linear_exact(problem, config, config.history_depth)
        }
        "resesop-linear" => solve_resesop_linear(problem, config, delta, &y),
        "resesop-linear2" => solve_resesop_linear_two(problem, config, delta, &y),
        "resesop" if exact => solve_sesop_nonlinear_exact(problem, config),
        "resesop" => solve_resesop_nonlinear(problem, config, delta, &y),
        "resesop2" => solve_resesop_nonlinear_two(problem, config, delta, &y),
        "landweber" => solve_landweber_variant(problem, config, delta, &y),
        _ => unreachable!("checked against SOLVER_NAMES"),
    }?;
    Ok(trace)
}

/// Runs a solver with the operator wrapped in a [`CountingOperator`].
pub fn run_counted(
    problem: &ForwardProblem,
    solver: &str,
    config: &SolverConfig,
    spec: NoiseSpec,
) -> Result<(IterationTrace, OperationCounts), HarnessError> {
    let counter = Arc::new(CountingOperator::new(problem.operator.clone()));
    let counted = ForwardProblem {
        operator: counter.clone(),
        ..problem.clone()
    };
    let trace = run_once(&counted, solver, config, spec)?;
    Ok((trace, counter.counts()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub delta: f64,
    /// Discrepancy stopping index, absent if the run did not stop by it.
    pub n_star: Option<usize>,
    pub steps: usize,
    pub stop_reason: String,
    pub final_residual: Option<f64>,
    pub final_error: Option<f64>,
    pub wall_time_s: f64,
}

impl SweepRow {
    pub fn stopped_by_discrepancy(&self) -> bool {
        self.stop_reason == StopReason::Discrepancy.to_string()
    }
}

/// Final errors at the largest and smallest noise level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorTrend {
    pub error_at_largest_delta: Option<f64>,
    pub error_at_smallest_delta: Option<f64>,
    pub decreased: bool,
    /// Observed, not required: `n*` never drops as δ decreases.
    pub n_star_nondecreasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub problem: String,
    pub solver: String,
    pub tau: f64,
    pub rows: Vec<SweepRow>,
    pub seed: u64,
    pub rng: &'static str,
    pub config: SolverConfig,
    pub trend: ErrorTrend,
    pub failed: bool,
}

fn check_deltas(deltas: &[f64]) -> Result<(), HarnessError> {
    if deltas.is_empty() {
        return Err(HarnessError::InvalidDeltas("empty list".into()));
    }
    if let Some(d) = deltas.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
        return Err(HarnessError::InvalidDeltas(format!(
            "{d} is not a finite positive number"
        )));
    }
    if let Some(w) = deltas.windows(2).find(|w| !(w[0] > w[1])) {
        return Err(HarnessError::InvalidDeltas(format!(
            "must be strictly descending, found {} before {}",
            w[0], w[1]
        )));
    }
    Ok(())
}

fn sweep_row(
    problem: &ForwardProblem,
    solver: &str,
    config: &SolverConfig,
    spec: NoiseSpec,
) -> SweepRow {
    let start = Instant::now();
    let result = run_once(problem, solver, config, spec);
    let wall_time_s = start.elapsed().as_secs_f64();
    match result {
        Ok(trace) => SweepRow {
            delta: spec.delta,
            n_star: trace.stop_index,
            steps: trace.steps(),
            stop_reason: trace.stop_reason.to_string(),
            final_residual: Some(trace.final_residual()),
            final_error: trace.final_error(),
            wall_time_s,
        },
        Err(e) => SweepRow {
            delta: spec.delta,
            n_star: None,
            steps: 0,
            stop_reason: format!("error: {e}"),
            final_residual: None,
            final_error: None,
            wall_time_s,
        },
    }
}

/// One run per noise level, all with the same noise direction.
pub fn regularization_sweep(
    problem: &ForwardProblem,
    solver: &str,
    config: &SolverConfig,
    deltas: &[f64],
    seed: u64,
) -> Result<SweepReport, HarnessError> {
    check_solver(solver)?;
    check_deltas(deltas)?;
    config.validate(problem.certificate.ctc)?;

    let rows: Vec<SweepRow> = deltas
        .par_iter()
        .map(|&delta| sweep_row(problem, solver, config, NoiseSpec { delta, seed }))
        .collect();

    let first = rows.first().and_then(|r| r.final_error);
    let last = rows.last().and_then(|r| r.final_error);
    let decreased = matches!((first, last), (Some(a), Some(b)) if rows.len() > 1 && b < a);
    let n_star_nondecreasing = rows
        .windows(2)
        .all(|w| matches!((w[0].n_star, w[1].n_star), (Some(a), Some(b)) if a <= b));
    let failed = rows.iter().any(|r| !r.stopped_by_discrepancy());

    Ok(SweepReport {
        problem: problem.name.clone(),
        solver: solver.to_string(),
        tau: config.tau,
        rows,
        seed,
        rng: RNG_ALGORITHM,
        config: *config,
        trend: ErrorTrend {
            error_at_largest_delta: first,
            error_at_smallest_delta: last,
            decreased,
            n_star_nondecreasing,
        },
        failed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub solver: String,
    pub n_star: Option<usize>,
    pub steps: usize,
    pub stop_reason: String,
    pub final_residual: f64,
    pub final_error: Option<f64>,
    pub forward_evals: usize,
    pub adjoint_evals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub problem: String,
    pub delta: f64,
    pub tau: f64,
    pub seed: u64,
    pub rng: &'static str,
    pub config: SolverConfig,
    pub rows: Vec<ComparisonRow>,
    pub failed: bool,
}

/// Runs each solver on the same noisy data and records operation counts.
pub fn compare_solvers(
    problem: &ForwardProblem,
    solvers: &[&str],
    config: &SolverConfig,
    spec: NoiseSpec,
) -> Result<ComparisonReport, HarnessError> {
    if solvers.len() < 2 {
        return Err(HarnessError::TooFewSolvers(solvers.len()));
    }
    let mut seen = HashSet::new();
    for &s in solvers {
        check_solver(s)?;
        if !seen.insert(s) {
            return Err(HarnessError::DuplicateSolver(s.to_string()));
        }
    }
    let mut rows = Vec::with_capacity(solvers.len());
    for &solver in solvers {
        let (trace, counts) = run_counted(problem, solver, config, spec)?;
        rows.push(ComparisonRow {
            solver: solver.to_string(),
            n_star: trace.stop_index,
            steps: trace.steps(),
            stop_reason: trace.stop_reason.to_string(),
            final_residual: trace.final_residual(),
            final_error: trace.final_error(),
            forward_evals: counts.forward,
            adjoint_evals: counts.adjoint,
        });
        if !trace.stop_reason.converged() {
            log::warn!("{solver} stopped by {}", trace.stop_reason);
        }
    }
    let failed = rows.iter().any(|r| r.n_star.is_none());
    Ok(ComparisonReport {
        problem: problem.name.clone(),
        delta: spec.delta,
        tau: config.tau,
        seed: spec.seed,
        rng: RNG_ALGORITHM,
        config: *config,
        rows,
        failed,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the trace as CSV with the columns of [`TRACE_COLUMNS`].
pub fn write_trace_csv<W: Write>(trace: &IterationTrace, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_COLUMNS)?;
    for r in &trace.records {
        let stopped = r.step_type == StepType::Stopped;
        w.write_record([
            r.n.to_string(),
            r.residual_norm.to_string(),
            opt(r.error_norm),
            opt(r.stripe.as_ref().map(|s| s.alpha)),
            opt(r.stripe.as_ref().map(|s| s.xi)),
            r.step_type.to_string(),
            opt(r.gamma),
            if stopped {
                String::new()
            } else {
                r.descent_s.to_string()
            },
            if stopped {
                String::new()
            } else {
                r.t_current.to_string()
            },
            opt(r.t_previous),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `path` through a temporary file in the same directory and a rename.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<(), HarnessError>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    let io_err = |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(io_err)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io_err)?;
    {
        let mut buf = io::BufWriter::new(tmp.as_file_mut());
        fill(&mut buf).map_err(io_err)?;
        buf.flush().map_err(io_err)?;
    }
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

pub fn save_trace_csv(trace: &IterationTrace, path: &Path) -> Result<(), HarnessError> {
    write_atomic(path, |w| {
        write_trace_csv(trace, w).map_err(io::Error::other)
    })
}

/// Pretty JSON with a trailing newline.
pub fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<(), HarnessError> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(io::Error::other)?;
        w.write_all(b"\n")
    })
}
