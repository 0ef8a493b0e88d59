//! Sampling diagnostics for the standing assumptions on `F`.

use super::{DomainBall, ForwardOperator, OperatorError, TaylorOrder};
use crate::sampling::{point_in_ball, seeded_rng, unit_vector};
use crate::vector::RealVector;

/// Multiplier applied to sampled tangential cone ratios before use.
pub const TCC_SAFETY_FACTOR: f64 = 1.5;
/// Multiplier applied to the power-iteration norm estimate.
pub const CF_SAFETY_FACTOR: f64 = 1.01;

const POWER_ITERATIONS: usize = 100;
const TAYLOR_STEPS: [f64; 5] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5];
const DEGENERATE_DENOMINATOR: f64 = 1e-14;

/// Maximum sampled relative dot-product defect
/// `|<F'(x)v, w> - <v, F'(x)^* w>| / (||v|| ||w|| scale)` with
/// `scale = max(1, ||F'(x)v|| / ||v||)`.
pub fn check_adjoint(
    op: &dyn ForwardOperator,
    ball: &DomainBall,
    samples: usize,
    seed: u64,
) -> f64 {
    let mut rng = seeded_rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples.max(1) {
        let x = point_in_ball(&mut rng, &ball.center, ball.radius);
        let v = unit_vector(&mut rng, op.dim_x());
        let w = unit_vector(&mut rng, op.dim_y());
        let jv = op.deriv_apply(&x, &v);
        let jtw = op.deriv_adjoint_apply(&x, &w);
        let scale = jv.norm().max(1.0);
        worst = worst.max((jv.dot(&w) - v.dot(&jtw)).abs() / scale);
    }
    worst
}

/// Empirical order of the Taylor remainder over `h = 1e-1 .. 1e-5`.
///
/// Returns [`TaylorOrder::Exact`] when every remainder sits at rounding
/// level; otherwise the mean over samples of the least-squares slope of
/// `log r(h)` against `log h`, using the points above rounding level.
pub fn check_frechet(
    op: &dyn ForwardOperator,
    ball: &DomainBall,
    samples: usize,
    seed: u64,
) -> TaylorOrder {
    let mut rng = seeded_rng(seed);
    let mut slopes = Vec::new();
    for _ in 0..samples.max(1) {
        let x = point_in_ball(&mut rng, &ball.center, ball.radius);
        let v = unit_vector(&mut rng, op.dim_x()).scaled(ball.radius);
        let fx = op.apply(&x);
        let jv = op.deriv_apply(&x, &v);
        let floor = 1e-14 * (1.0 + fx.norm() + jv.norm());
        let points: Vec<(f64, f64)> = TAYLOR_STEPS
            .iter()
            .filter_map(|&h| {
                let mut r = op.apply(&x.add_scaled(h, &v)).sub(&fx);
                r.axpy(-h, &jv);
                let rn = r.norm();
                (rn > 100.0 * floor).then(|| (h.ln(), rn.ln()))
            })
            .collect();
        if points.len() >= 2 {
            slopes.push(fit_slope(&points));
        }
    }
    if slopes.is_empty() {
        TaylorOrder::Exact
    } else {
        TaylorOrder::Slope(slopes.iter().sum::<f64>() / slopes.len() as f64)
    }
}

fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Largest sampled ratio `||F(x) - F(x~) - F'(x)(x - x~)|| / ||F(x) - F(x~)||`
/// over pairs drawn uniformly from the ball.
///
/// The raw maximum is returned; callers apply [`TCC_SAFETY_FACTOR`].
pub fn estimate_tcc(
    op: &dyn ForwardOperator,
    ball: &DomainBall,
    samples: usize,
    seed: u64,
) -> Result<f64, OperatorError> {
    let mut rng = seeded_rng(seed);
    let mut worst: Option<f64> = None;
    let samples = samples.max(1);
    for _ in 0..samples {
        let x = point_in_ball(&mut rng, &ball.center, ball.radius);
        let xt = point_in_ball(&mut rng, &ball.center, ball.radius);
        let fx = op.apply(&x);
        let diff = fx.sub(&op.apply(&xt));
        let denom = diff.norm();
        if denom < DEGENERATE_DENOMINATOR {
            continue;
        }
        let num = diff.sub(&op.deriv_apply(&x, &x.sub(&xt))).norm();
        let ratio = num / denom;
        worst = Some(worst.map_or(ratio, |w| w.max(ratio)));
    }
    worst.ok_or(OperatorError::EstimationFailed(samples))
}

/// `||F'(x)||` by power iteration on `F'(x)^* F'(x)`.
pub fn derivative_norm(op: &dyn ForwardOperator, x: &RealVector, start: RealVector) -> f64 {
    let mut v = start;
    let mut sigma = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let n = v.norm();
        if n == 0.0 {
            return 0.0;
        }
        v = v.scaled(1.0 / n);
        let jv = op.deriv_apply(x, &v);
        sigma = jv.norm();
        v = op.deriv_adjoint_apply(x, &jv);
    }
    sigma
}

/// Maximum of `||F'(x)||` over the ball center and `samples - 1` random
/// points, times [`CF_SAFETY_FACTOR`].
pub fn estimate_cf(op: &dyn ForwardOperator, ball: &DomainBall, samples: usize, seed: u64) -> f64 {
    let mut rng = seeded_rng(seed);
    let mut worst: f64 = 0.0;
    for k in 0..samples.max(1) {
        let x = if k == 0 {
            ball.center.clone()
        } else {
            point_in_ball(&mut rng, &ball.center, ball.radius)
        };
        let start = unit_vector(&mut rng, op.dim_x());
        worst = worst.max(derivative_norm(op, &x, start));
    }
    CF_SAFETY_FACTOR * worst
}
