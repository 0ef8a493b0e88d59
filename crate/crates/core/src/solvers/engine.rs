use std::collections::VecDeque;

use log::debug;

use super::{
    check_data, check_delta, IterationRecord, IterationTrace, SolverConfig, SolverError, StepType,
    StopReason, Warning,
};
use crate::corpus::ForwardProblem;
use crate::geometry::{
    project_hyperplane_intersection, project_stripe_intersection, project_two_halfspaces,
    GeometryError, Stripe, TwoStepOptions, MAX_STRIPES,
};
use crate::vector::RealVector;

/// `||u|| <= GRADIENT_FLOOR * c_F * ||R||` counts as a vanishing gradient.
const GRADIENT_FLOOR: f64 = 1e-14;

/// How the offset of the gradient stripe is computed (`w = R_n`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(super) enum StripeRule {
    /// `α = <w, y^δ>`, for linear operators.
    DataOffset,
    /// `α = <u, x_n> - <w, R_n>`.
    Linearized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(super) enum Update {
    /// Projection onto the hyperplanes of the last `k` iterates (exact linear data).
    Hyperplanes(usize),
    /// Projection onto the stripes of the last `k` iterates.
    Window(usize),
    /// Step (i) onto the current stripe, step (ii) with the previous one.
    TwoStep,
}

impl Update {
    /// A window of two stripes is served by the two-step rule, which
    /// computes the same projection.
    pub(super) fn window(depth: usize) -> Self {
        if depth == 2 {
            Update::TwoStep
        } else {
            Update::Window(depth)
        }
    }

    fn depth(&self) -> usize {
        match *self {
            Update::Hyperplanes(k) | Update::Window(k) => k,
            Update::TwoStep => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(super) struct Method {
    pub rule: StripeRule,
    pub update: Update,
}

struct Step {
    point: RealVector,
    step_type: StepType,
    gamma: Option<f64>,
    descent: f64,
    coefficients: Vec<f64>,
}

impl Step {
    fn t_previous(&self) -> Option<f64> {
        self.coefficients.get(1).copied()
    }
}

pub(super) fn run(
    problem: &ForwardProblem,
    config: &SolverConfig,
    delta: f64,
    y: &RealVector,
    method: Method,
) -> Result<IterationTrace, SolverError> {
    check_delta(delta)?;
    check_data(problem, y)?;
    let ctc = problem.certificate.ctc;
    config.validate(ctc)?;
    let depth = method.update.depth();
    if depth == 0 || depth > MAX_STRIPES {
        return Err(SolverError::InvalidConfig(format!(
            "history depth must lie in 1..={MAX_STRIPES}, got {depth}"
        )));
    }

    let op = problem.operator.as_ref();
    let c_f = problem.certificate.c_f;
    let mut x = problem.x0().clone();
    let mut history: VecDeque<Stripe> = VecDeque::with_capacity(depth);
    let mut records = Vec::new();
    let mut warnings = Vec::new();

    for n in 0.. {
        let residual = op.apply(&x).sub(y);
        let rn = residual.norm();
        let error = x.distance(&problem.x_plus);
        let error_norm = Some(error);
        let distance = x.distance(&problem.ball.center);
        if distance > problem.ball.radius {
            warnings.push(Warning::LeftBall {
                n,
                distance,
                radius: problem.ball.radius,
            });
        }

        let small = if delta > 0.0 {
            (rn <= config.tau * delta).then_some(StopReason::Discrepancy)
        } else {
            (rn <= config.residual_tol).then_some(StopReason::ResidualTolerance)
        };
        let mut stop = small.or((n >= config.max_iter).then_some(StopReason::MaxIter));

        let mut gradient = None;
        if stop.is_none() {
            let u = op.deriv_adjoint_apply(&x, &residual);
            let un = u.norm();
            if un.is_finite() && un > GRADIENT_FLOOR * c_f.max(1.0) * rn {
                gradient = Some(u);
            } else {
                stop = Some(StopReason::DegenerateGradient);
            }
        }

        let Some(u) = gradient else {
            let reason = stop.expect("either a gradient or a stop reason");
            debug!("n={n} residual={rn:.6e} stop={reason}");
            records.push(IterationRecord {
                n,
                x,
                residual_norm: rn,
                error_norm,
                stripe: None,
                step_type: StepType::Stopped,
                gamma: None,
                descent_s: 0.0,
                t_current: 0.0,
                t_previous: None,
            });
            return Ok(IterationTrace {
                records,
                stop_index: reason.converged().then_some(n),
                stop_reason: reason,
                warnings,
                tau: config.tau,
                delta,
            });
        };

        let alpha = match method.rule {
            StripeRule::DataOffset => residual.dot(y),
            StripeRule::Linearized => u.dot(&x) - residual.dot(&residual),
        };
        let xi = rn * (delta + ctc * (rn + delta));
        let stripe =
            Stripe::new(u, alpha, xi).map_err(|source| SolverError::Geometry { n, source })?;

        let step = match method.update {
            Update::Hyperplanes(k) => hyperplane_step(&x, &stripe, &history, k),
            Update::Window(k) => window_step(&x, &stripe, &history, k, config),
            Update::TwoStep => two_step(&x, &stripe, history.front(), config, n, &mut warnings),
        }
        .map_err(|e| e.at(n))?;

        if let Some(&t) = step
            .coefficients
            .iter()
            .find(|t| !(t.abs() <= config.t_cap))
        {
            return Err(SolverError::StepCap {
                n,
                t,
                cap: config.t_cap,
            });
        }

        debug!(
            "n={n} residual={rn:.6e} error={error:.6e} step={} gamma={:?} S={:.6e}",
            step.step_type, step.gamma, step.descent
        );
        records.push(IterationRecord {
            n,
            x: std::mem::replace(&mut x, step.point.clone()),
            residual_norm: rn,
            error_norm,
            stripe: Some(stripe.clone()),
            step_type: step.step_type,
            gamma: step.gamma,
            descent_s: step.descent,
            t_current: step.coefficients[0],
            t_previous: step.t_previous(),
        });
        history.push_front(stripe);
        history.truncate(depth.saturating_sub(1));
    }
    unreachable!("the iteration loop only exits by returning")
}

enum StepError {
    Geometry(GeometryError),
    Contract(String),
}

impl StepError {
    fn at(self, n: usize) -> SolverError {
        match self {
            StepError::Geometry(source) => SolverError::Geometry { n, source },
            StepError::Contract(detail) => SolverError::Contract { n, detail },
        }
    }
}

impl From<GeometryError> for StepError {
    fn from(e: GeometryError) -> Self {
        StepError::Geometry(e)
    }
}

/// Projection of `x_n` onto the upper bounding hyperplane `H(u, α + ξ)`.
fn first_step(x: &RealVector, stripe: &Stripe) -> Result<Step, StepError> {
    let upper = stripe.alpha + stripe.xi;
    let excess = stripe.u.dot(x) - upper;
    if !(excess > 0.0) {
        return Err(StepError::Contract(format!(
            "iterate is not above the current stripe: <u,x> - (alpha + xi) = {excess:e}"
        )));
    }
    let nsq = stripe.u.norm_squared();
    let t = excess / nsq;
    Ok(Step {
        point: x.add_scaled(-t, &stripe.u),
        step_type: StepType::Single,
        gamma: None,
        descent: excess * excess / nsq,
        coefficients: vec![t],
    })
}

fn two_step(
    x: &RealVector,
    stripe: &Stripe,
    previous: Option<&Stripe>,
    config: &SolverConfig,
    n: usize,
    warnings: &mut Vec<Warning>,
) -> Result<Step, StepError> {
    let single = first_step(x, stripe)?;
    let Some(prev) = previous else {
        return Ok(single);
    };
    if prev.contains(&single.point, config.tol_feas) {
        return Ok(single);
    }
    let h1 = stripe.upper();
    let h2 = if prev.offset(&single.point) > 0.0 {
        prev.upper()
    } else {
        prev.lower()
    };
    let opts = TwoStepOptions {
        gamma_min: config.gamma_min,
        tol_feas: config.tol_feas,
    };
    match project_two_halfspaces(x, &h1, &h2, &opts) {
        Ok(report) if report.steps_used == 2 => Ok(Step {
            descent: report.descent(),
            point: report.point,
            step_type: StepType::Double,
            gamma: report.gamma,
            coefficients: report.coefficients.to_vec(),
        }),
        Ok(_) => Ok(single),
        Err(e @ (GeometryError::NearParallel { .. } | GeometryError::KktViolation { .. })) => {
            warnings.push(Warning::SingleStepFallback {
                n,
                reason: e.to_string(),
            });
            Ok(single)
        }
        Err(e) => Err(e.into()),
    }
}

fn window_step(
    x: &RealVector,
    stripe: &Stripe,
    history: &VecDeque<Stripe>,
    depth: usize,
    config: &SolverConfig,
) -> Result<Step, StepError> {
    let single = first_step(x, stripe)?;
    let older: Vec<&Stripe> = history.iter().take(depth - 1).collect();
    if older
        .iter()
        .all(|s| s.contains(&single.point, config.tol_feas))
    {
        return Ok(single);
    }
    let window: Vec<Stripe> = std::iter::once(stripe).chain(older).cloned().collect();
    let proj = project_stripe_intersection(x, &window, config.tol_feas)?;
    Ok(Step {
        descent: proj.point.sub(x).norm_squared(),
        point: proj.point,
        step_type: StepType::Double,
        gamma: None,
        coefficients: proj.coefficients,
    })
}

fn hyperplane_step(
    x: &RealVector,
    stripe: &Stripe,
    history: &VecDeque<Stripe>,
    depth: usize,
) -> Result<Step, StepError> {
    let planes: Vec<(RealVector, f64)> = std::iter::once(stripe)
        .chain(history.iter().take(depth - 1))
        .map(|s| (s.u.clone(), s.alpha))
        .collect();
    let proj = project_hyperplane_intersection(x, &planes)?;
    let step_type = if proj.coefficients[1..].iter().any(|&t| t != 0.0) {
        StepType::Double
    } else {
        StepType::Single
    };
    Ok(Step {
        descent: proj.point.sub(x).norm_squared(),
        point: proj.point,
        step_type,
        gamma: None,
        coefficients: proj.coefficients,
    })
}
