//! SESOP and RESESOP iterations for linear and nonlinear operator equations.
//!
//! Every scheme runs on the same loop: evaluate `R_n = F(x_n) - y^δ`, test
//! the stopping rule, form the gradient stripe with `w = R_n`, and move
//! `x_n` into the intersection of the current stripe and the stripes kept
//! from the last `N - 1` iterations. Search directions are restricted to
//! this window of recent gradients.

mod engine;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ForwardProblem;
use crate::geometry::{GeometryError, Stripe, DEFAULT_GAMMA_MIN, DEFAULT_TOL_FEAS};
use crate::vector::RealVector;

use engine::{run, Method, StripeRule, Update};

/// Margin of the default discrepancy constant over its lower bound.
pub const TAU_MARGIN: f64 = 1.2;
pub const DEFAULT_MAX_ITER: usize = 100_000;
pub const DEFAULT_T_CAP: f64 = 1e6;
/// Absolute residual at which exact-data runs stop.
pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("tau = {tau} is not admissible: must exceed (1+ctc)/(1-ctc) = {bound}")]
    TauTooSmall { tau: f64, bound: f64 },
    #[error("noise level must be finite and >= 0, got {0}")]
    InvalidDelta(f64),
    #[error("{0} requires a linear operator")]
    NotLinear(&'static str),
    #[error("data has dimension {found}, operator range has dimension {expected}")]
    DataDimension { expected: usize, found: usize },
    #[error("step coefficient {t:e} at iteration {n} exceeds the cap {cap:e}")]
    StepCap { n: usize, t: f64, cap: f64 },
    #[error("iteration {n}: {detail}")]
    Contract { n: usize, detail: String },
    #[error("iteration {n}: {source}")]
    Geometry {
        n: usize,
        #[source]
        source: GeometryError,
    },
}

/// Lower bound `(1 + ctc) / (1 - ctc)` on the discrepancy constant.
pub fn tau_lower_bound(ctc: f64) -> f64 {
    (1.0 + ctc) / (1.0 - ctc)
}

/// `TAU_MARGIN * (1 + ctc) / (1 - ctc)`
pub fn default_tau(ctc: f64) -> f64 {
    TAU_MARGIN * tau_lower_bound(ctc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Discrepancy constant.
    pub tau: f64,
    pub max_iter: usize,
    /// Number `N` of recent gradient stripes used per step.
    pub history_depth: usize,
    /// Bound on every step coefficient.
    pub t_cap: f64,
    pub gamma_min: f64,
    pub tol_feas: f64,
    /// Residual norm at which exact-data runs stop.
    pub residual_tol: f64,
}

impl SolverConfig {
    /// Defaults with `tau` chosen by [`default_tau`] for the problem's
    /// cone constant and `N = 2`.
    pub fn for_problem(problem: &ForwardProblem) -> Self {
        Self {
            tau: default_tau(problem.certificate.ctc),
            max_iter: DEFAULT_MAX_ITER,
            history_depth: 2,
            t_cap: DEFAULT_T_CAP,
            gamma_min: DEFAULT_GAMMA_MIN,
            tol_feas: DEFAULT_TOL_FEAS,
            residual_tol: DEFAULT_RESIDUAL_TOL,
        }
    }

    pub fn with_history_depth(mut self, n: usize) -> Self {
        self.history_depth = n;
        self
    }

    pub fn with_max_iter(mut self, n: usize) -> Self {
        self.max_iter = n;
        self
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    /// Checks ranges and `tau > (1+ctc)/(1-ctc)`.
    pub fn validate(&self, ctc: f64) -> Result<(), SolverError> {
        let bad = |m: &str| Err(SolverError::InvalidConfig(m.to_string()));
        if self.max_iter < 1 {
            return bad("max_iter must be >= 1");
        }
        if self.history_depth < 1 {
            return bad("history_depth must be >= 1");
        }
        if !(self.t_cap > 0.0) {
            return bad("t_cap must be > 0");
        }
        if !(self.gamma_min > 0.0 && self.gamma_min < 1.0) {
            return bad("gamma_min must lie in (0, 1)");
        }
        if !(self.tol_feas >= 0.0 && self.tol_feas.is_finite()) {
            return bad("tol_feas must be finite and >= 0");
        }
        if !(self.residual_tol >= 0.0 && self.residual_tol.is_finite()) {
            return bad("residual_tol must be finite and >= 0");
        }
        if !(0.0..1.0).contains(&ctc) {
            return bad("cone constant must lie in [0, 1)");
        }
        let bound = tau_lower_bound(ctc);
        if !(self.tau > bound && self.tau.is_finite()) {
            return Err(SolverError::TauTooSmall {
                tau: self.tau,
                bound,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepType {
    /// One projection onto the upper bounding hyperplane of the current stripe.
    Single,
    /// Projection onto an intersection involving an earlier stripe.
    Double,
    /// No step: the iteration stopped at this index.
    Stopped,
}

impl fmt::Display for StepType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StepType::Single => "single",
            StepType::Double => "double",
            StepType::Stopped => "stopped",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Discrepancy,
    /// Exact data only: `||R_n|| <= residual_tol`.
    ResidualTolerance,
    MaxIter,
    DegenerateGradient,
}

impl StopReason {
    /// True for the two rules that certify a small residual.
    pub fn converged(&self) -> bool {
        matches!(
            self,
            StopReason::Discrepancy | StopReason::ResidualTolerance
        )
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Discrepancy => "discrepancy",
            StopReason::ResidualTolerance => "residual_tolerance",
            StopReason::MaxIter => "max_iter",
            StopReason::DegenerateGradient => "degenerate_gradient",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub n: usize,
    pub x: RealVector,
    pub residual_norm: f64,
    pub error_norm: Option<f64>,
    /// Gradient stripe built at `x_n`; absent on the stopping record.
    pub stripe: Option<Stripe>,
    pub step_type: StepType,
    pub gamma: Option<f64>,
    /// Guaranteed decrease of `||z - x_n||^2` for every solution `z`.
    pub descent_s: f64,
    /// Coefficient of the current direction in `x_{n+1} = x_n - Σ t_i u_i`.
    pub t_current: f64,
    /// Coefficient of the previous direction, when it was used.
    pub t_previous: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Warning {
    /// `x_n` lies outside the domain ball.
    LeftBall {
        n: usize,
        distance: f64,
        radius: f64,
    },
    /// Step (ii) was refused and the single projection kept.
    SingleStepFallback { n: usize, reason: String },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::LeftBall {
                n,
                distance,
                radius,
            } => {
                write!(
                    f,
                    "iterate {n} left the domain ball: distance {distance} > radius {radius}"
                )
            }
            Warning::SingleStepFallback { n, reason } => {
                write!(f, "iteration {n} fell back to a single step: {reason}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
    /// `n*(δ)` when the run stopped by the discrepancy principle or, for
    /// exact data, by the residual tolerance.
    pub stop_index: Option<usize>,
    pub stop_reason: StopReason,
    pub warnings: Vec<Warning>,
    pub tau: f64,
    pub delta: f64,
}

impl IterationTrace {
    pub fn last(&self) -> &IterationRecord {
        self.records
            .last()
            .expect("a trace always has a final record")
    }

    pub fn final_residual(&self) -> f64 {
        self.last().residual_norm
    }

    pub fn final_error(&self) -> Option<f64> {
        self.last().error_norm
    }

    /// Number of steps taken.
    pub fn steps(&self) -> usize {
        self.records.len() - 1
    }
}

fn check_data(problem: &ForwardProblem, y: &RealVector) -> Result<(), SolverError> {
    let expected = problem.operator.dim_y();
    if y.dim() != expected {
        return Err(SolverError::DataDimension {
            expected,
            found: y.dim(),
        });
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<(), SolverError> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(SolverError::InvalidDelta(delta));
    }
    Ok(())
}

/// Exact-data stripe `H(u, α, ξ)` with `u = F'(x_i)^* w`,
/// `α = <u, x_i> - <w, F(x_i) - y>` and `ξ = ctc ||w|| ||R_i||`.
pub fn build_stripe_exact(
    problem: &ForwardProblem,
    x_i: &RealVector,
    w: &RealVector,
) -> Result<Stripe, GeometryError> {
    let residual = problem.operator.apply(x_i).sub(&problem.y_exact);
    build_stripe_noisy(problem, x_i, w, &residual, 0.0)
}

/// Noisy stripe with `α = <u, x_i> - <w, R_i>` and
/// `ξ = (δ + ctc (||R_i|| + δ)) ||w||`, where `R_i = F(x_i) - y^δ`.
pub fn build_stripe_noisy(
    problem: &ForwardProblem,
    x_i: &RealVector,
    w: &RealVector,
    residual: &RealVector,
    delta: f64,
) -> Result<Stripe, GeometryError> {
    let u = problem.operator.deriv_adjoint_apply(x_i, w);
    let ctc = problem.certificate.ctc;
    let alpha = u.dot(x_i) - w.dot(residual);
    let xi = (delta + ctc * (residual.norm() + delta)) * w.norm();
    Stripe::new(u, alpha, xi)
}

/// Exact-data linear SESOP: `x_{n+1}` is the projection of `x_n` onto the
/// intersection of the hyperplanes `H(A^* R_i, <R_i, y>)` of the last
/// `directions_per_step` iterates.
pub fn solve_sesop_linear_exact(
    problem: &ForwardProblem,
    config: &SolverConfig,
    directions_per_step: usize,
) -> Result<IterationTrace, SolverError> {
    if !problem.is_linear() {
        return Err(SolverError::NotLinear("solve_sesop_linear_exact"));
    }
    let method = Method {
        rule: StripeRule::DataOffset,
        update: Update::Hyperplanes(directions_per_step),
    };
    run(problem, config, 0.0, &problem.y_exact, method)
}

/// Linear RESESOP with stripes `H(A^* R_i, <R_i, y^δ>, δ ||R_i||)` over the
/// last `history_depth` iterates.
pub fn solve_resesop_linear(
    problem: &ForwardProblem,
    config: &SolverConfig,
    delta: f64,
    y_noisy: &RealVector,
) -> Result<IterationTrace, SolverError> {
    if !problem.is_linear() {
        return Err(SolverError::NotLinear("solve_resesop_linear"));
    }
    let method = Method {
        rule: StripeRule::DataOffset,
        update: Update::window(config.history_depth),
    };
    run(problem, config, delta, y_noisy, method)
}

/// Linear RESESOP with the two search directions `A^* R_n`, `A^* R_{n-1}`.
pub fn solve_resesop_linear_two(
    problem: &ForwardProblem,
    config: &SolverConfig,
    delta: f64,
    y_noisy: &RealVector,
) -> Result<IterationTrace, SolverError> {
    if !problem.is_linear() {
        return Err(SolverError::NotLinear("solve_resesop_linear_two"));
    }
    let method = Method {
        rule: StripeRule::Linearized,
        update: Update::TwoStep,
    };
    run(problem, config, delta, y_noisy, method)
}

/// Nonlinear SESOP on exact data with `w_{n,i} = R_i` over the last
/// `history_depth` iterates.
pub fn solve_sesop_nonlinear_exact(
    problem: &ForwardProblem,
    config: &SolverConfig,
) -> Result<IterationTrace, SolverError> {
    let method = Method {
        rule: StripeRule::Linearized,
        update: Update::window(config.history_depth),
    };
    run(problem, config, 0.0, &problem.y_exact, method)
}

/// Nonlinear RESESOP over a window of `history_depth` recent gradients.
pub fn solve_resesop_nonlinear(
    problem: &ForwardProblem,
    config: &SolverConfig,
    delta: f64,
    y_noisy: &RealVector,
) -> Result<IterationTrace, SolverError> {
    let method = Method {
        rule: StripeRule::Linearized,
        update: Update::window(config.history_depth),
    };
    run(problem, config, delta, y_noisy, method)
}

/// Nonlinear RESESOP with the two search directions `u_n`, `u_{n-1}`.
pub fn solve_resesop_nonlinear_two(
    problem: &ForwardProblem,
    config: &SolverConfig,
    delta: f64,
    y_noisy: &RealVector,
) -> Result<IterationTrace, SolverError> {
    let method = Method {
        rule: StripeRule::Linearized,
        update: Update::TwoStep,
    };
    run(problem, config, delta, y_noisy, method)
}

/// Landweber-type iteration: one projection onto the current stripe,
/// `x_{n+1} = x_n - (||R|| (||R|| - δ - ctc (||R|| + δ)) / ||u||^2) u`.
pub fn solve_landweber_variant(
    problem: &ForwardProblem,
    config: &SolverConfig,
    delta: f64,
    y_noisy: &RealVector,
) -> Result<IterationTrace, SolverError> {
    let method = Method {
        rule: StripeRule::Linearized,
        update: Update::window(1),
    };
    run(problem, config, delta, y_noisy, method)
}
