//! Metric projections onto hyperplanes, halfspaces, stripes and small
//! intersections of them.
//!
//! All routines are pure functions of their inputs. Comparisons against a
//! constraint use the scale-aware tolerance [`feasibility_tolerance`];
//! projections themselves use exact comparisons so that a point strictly
//! inside a set is returned untouched.

mod gram;
mod polyhedron;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vector::RealVector;

pub use gram::{solve_gram, GramSolution};
pub use polyhedron::{project_stripe_intersection, StripeIntersection, MAX_STRIPES};

/// Relative feasibility tolerance used when no explicit value is supplied.
pub const DEFAULT_TOL_FEAS: f64 = 1e-9;
/// Below this value of gamma the two-step projection refuses step (ii).
pub const DEFAULT_GAMMA_MIN: f64 = 1e-8;
/// Relative pivot threshold of the Gram factorization.
pub const GRAM_RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("direction vector has zero norm")]
    DegenerateDirection,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("stripe half-width must be finite and >= 0, got {0}")]
    InvalidWidth(f64),
    #[error("empty constraint list")]
    NoConstraints,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("directions nearly parallel: gamma = {gamma:e} < {gamma_min:e}")]
    NearParallel { gamma: f64, gamma_min: f64 },
    #[error("KKT multipliers have the wrong sign: t1 = {t1:e}, t2 = {t2:e}")]
    KktViolation { t1: f64, t2: f64 },
    #[error("stripes are inconsistent: no point satisfies all of them")]
    Infeasible,
    #[error("{count} stripes exceed the supported maximum of {max}")]
    TooManyConstraints { count: usize, max: usize },
}

pub type Result<T> = std::result::Result<T, GeometryError>;

/// `rel * (||u|| + |alpha| + xi)`: the slack allowed on one constraint.
///
/// Homogeneous in `(u, alpha, xi)`, so rescaling a constraint does not change
/// which points pass; for unit normals it equals `rel * (1 + |alpha| + xi)`.
pub fn feasibility_tolerance(rel: f64, u_norm: f64, alpha: f64, xi: f64) -> f64 {
    rel * (u_norm + alpha.abs() + xi)
}

fn check_direction(x: &RealVector, u: &RealVector) -> Result<f64> {
    if u.dim() != x.dim() {
        return Err(GeometryError::DimensionMismatch {
            expected: x.dim(),
            found: u.dim(),
        });
    }
    let nsq = u.norm_squared();
    if nsq == 0.0 || !nsq.is_finite() {
        return Err(GeometryError::DegenerateDirection);
    }
    Ok(nsq)
}

/// Orientation of a halfspace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    /// `<u, x> <= alpha`
    Le,
    /// `<u, x> >= alpha`
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Halfspace {
    pub u: RealVector,
    pub alpha: f64,
    pub sense: Sense,
}

impl Halfspace {
    pub fn le(u: RealVector, alpha: f64) -> Self {
        Self {
            u,
            alpha,
            sense: Sense::Le,
        }
    }

    pub fn ge(u: RealVector, alpha: f64) -> Self {
        Self {
            u,
            alpha,
            sense: Sense::Ge,
        }
    }

    /// Signed amount by which `x` violates the halfspace (positive outside).
    pub fn violation(&self, x: &RealVector) -> f64 {
        let s = self.u.dot(x) - self.alpha;
        match self.sense {
            Sense::Le => s,
            Sense::Ge => -s,
        }
    }

    pub fn contains(&self, x: &RealVector, tol_rel: f64) -> bool {
        self.violation(x) <= feasibility_tolerance(tol_rel, self.u.norm(), self.alpha, 0.0)
    }

    /// Equivalent `<=` form `(a, b)` with `a = ±u`, `b = ±alpha`.
    fn as_le(&self) -> (RealVector, f64) {
        match self.sense {
            Sense::Le => (self.u.clone(), self.alpha),
            Sense::Ge => (self.u.scaled(-1.0), -self.alpha),
        }
    }

    fn orientation(&self) -> f64 {
        match self.sense {
            Sense::Le => 1.0,
            Sense::Ge => -1.0,
        }
    }
}

/// The stripe `{x : |<u, x> - alpha| <= xi}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stripe {
    pub u: RealVector,
    pub alpha: f64,
    pub xi: f64,
}

impl Stripe {
    pub fn new(u: RealVector, alpha: f64, xi: f64) -> Result<Self> {
        if !(xi >= 0.0 && xi.is_finite()) {
            return Err(GeometryError::InvalidWidth(xi));
        }
        if u.norm_squared() == 0.0 {
            return Err(GeometryError::DegenerateDirection);
        }
        Ok(Self { u, alpha, xi })
    }

    /// `<u, x> - alpha`
    pub fn offset(&self, x: &RealVector) -> f64 {
        self.u.dot(x) - self.alpha
    }

    pub fn tolerance(&self, tol_rel: f64) -> f64 {
        feasibility_tolerance(tol_rel, self.u.norm(), self.alpha, self.xi)
    }

    pub fn contains(&self, x: &RealVector, tol_rel: f64) -> bool {
        self.offset(x).abs() <= self.xi + self.tolerance(tol_rel)
    }

    /// `H_<=(u, alpha + xi)`
    pub fn upper(&self) -> Halfspace {
        Halfspace::le(self.u.clone(), self.alpha + self.xi)
    }

    /// `H_>=(u, alpha - xi)`
    pub fn lower(&self) -> Halfspace {
        Halfspace::ge(self.u.clone(), self.alpha - self.xi)
    }
}

/// Result of [`project_two_halfspaces`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionReport {
    pub point: RealVector,
    /// 1 when the first projection was already feasible, 2 otherwise.
    pub steps_used: u8,
    /// Summands of the guaranteed decrease of `||z - x||^2`.
    pub descent_terms: Vec<f64>,
    /// Present iff `steps_used == 2`.
    pub gamma: Option<f64>,
    /// `point = x - coefficients[0] * u1 - coefficients[1] * u2` with the
    /// direction vectors as passed in.
    pub coefficients: [f64; 2],
}

impl ProjectionReport {
    pub fn descent(&self) -> f64 {
        self.descent_terms.iter().sum()
    }
}

/// `x - ((<u, x> - alpha) / ||u||^2) u`
pub fn project_hyperplane(x: &RealVector, u: &RealVector, alpha: f64) -> Result<RealVector> {
    let nsq = check_direction(x, u)?;
    let t = (u.dot(x) - alpha) / nsq;
    Ok(x.add_scaled(-t, u))
}

pub fn project_halfspace(x: &RealVector, h: &Halfspace) -> Result<RealVector> {
    check_direction(x, &h.u)?;
    if h.violation(x) > 0.0 {
        project_hyperplane(x, &h.u, h.alpha)
    } else {
        Ok(x.clone())
    }
}

pub fn project_stripe(x: &RealVector, s: &Stripe) -> Result<RealVector> {
    check_direction(x, &s.u)?;
    let offset = s.offset(x);
    if offset > s.xi {
        project_hyperplane(x, &s.u, s.alpha + s.xi)
    } else if offset < -s.xi {
        project_hyperplane(x, &s.u, s.alpha - s.xi)
    } else {
        Ok(x.clone())
    }
}

/// Projection onto an intersection of hyperplanes.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperplaneProjection {
    pub point: RealVector,
    /// `point = x - sum_i coefficients[i] * u_i`; zero for dropped planes.
    pub coefficients: Vec<f64>,
    /// Planes whose normals were linearly dependent on earlier ones.
    pub dropped: Vec<usize>,
}

/// Projects onto `∩ H(u_i, alpha_i)` by minimizing
/// `h(t) = ½||x - Σ t_i u_i||² + Σ t_i alpha_i`, i.e. solving `G t = <u, x> - alpha`
/// with the Gram matrix `G_ij = <u_i, u_j>`.
pub fn project_hyperplane_intersection(
    x: &RealVector,
    planes: &[(RealVector, f64)],
) -> Result<HyperplaneProjection> {
    if planes.is_empty() {
        return Err(GeometryError::NoConstraints);
    }
    for (u, _) in planes {
        check_direction(x, u)?;
    }
    let n = planes.len();
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let g = planes[i].0.dot(&planes[j].0);
            gram[i * n + j] = g;
            gram[j * n + i] = g;
        }
    }
    let rhs: Vec<f64> = planes.iter().map(|(u, a)| u.dot(x) - a).collect();
    let sol = solve_gram(&gram, n, &rhs, GRAM_RANK_TOL);
    let mut point = x.clone();
    for ((u, _), t) in planes.iter().zip(&sol.coefficients) {
        if *t != 0.0 {
            point.axpy(-t, u);
        }
    }
    Ok(HyperplaneProjection {
        point,
        coefficients: sol.coefficients,
        dropped: sol.dropped,
    })
}

/// `(1 - (|<u1,u2>| / (||u1|| ||u2||))^2)^(1/2)`, the sine of the angle
/// between the two normals.
///
/// Evaluated as the relative norm of the part of `u2` orthogonal to `u1`,
/// which stays accurate for nearly parallel vectors.
pub fn gamma_factor(u1: &RealVector, u2: &RealVector) -> f64 {
    let perp = u2.add_scaled(-u1.dot(u2) / u1.norm_squared(), u1);
    (perp.norm() / u2.norm()).min(1.0)
}

/// Knobs of [`project_two_halfspaces`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoStepOptions {
    pub gamma_min: f64,
    pub tol_feas: f64,
}

impl Default for TwoStepOptions {
    fn default() -> Self {
        Self {
            gamma_min: DEFAULT_GAMMA_MIN,
            tol_feas: DEFAULT_TOL_FEAS,
        }
    }
}

/// Projects `x` onto `h1 ∩ h2` with at most two hyperplane projections.
///
/// Requires `x` outside `h1` and inside `h2`. Step (i) projects onto the
/// bounding hyperplane of `h1`; if that point violates `h2`, step (ii)
/// projects it onto the intersection of both bounding hyperplanes and checks
/// the KKT signs of the combined multipliers.
pub fn project_two_halfspaces(
    x: &RealVector,
    h1: &Halfspace,
    h2: &Halfspace,
    opts: &TwoStepOptions,
) -> Result<ProjectionReport> {
    check_direction(x, &h1.u)?;
    check_direction(x, &h2.u)?;
    let (a1, b1) = h1.as_le();
    let (a2, b2) = h2.as_le();
    let tol2 = feasibility_tolerance(opts.tol_feas, a2.norm(), b2, 0.0);

    let r1 = a1.dot(x) - b1;
    if !(r1 > 0.0) {
        return Err(GeometryError::Precondition(format!(
            "x must lie strictly outside the first halfspace (violation {r1:e})"
        )));
    }
    let r2_at_x = a2.dot(x) - b2;
    if r2_at_x > tol2 {
        return Err(GeometryError::Precondition(format!(
            "x must lie inside the second halfspace (violation {r2_at_x:e} > {tol2:e})"
        )));
    }

    let n1sq = a1.norm_squared();
    let t_first = r1 / n1sq;
    let x1 = x.add_scaled(-t_first, &a1);
    let d1 = r1 * r1 / n1sq;

    let r2 = a2.dot(&x1) - b2;
    if r2 <= tol2 {
        return Ok(ProjectionReport {
            point: x1,
            steps_used: 1,
            descent_terms: vec![d1],
            gamma: None,
            coefficients: [t_first * h1.orientation(), 0.0],
        });
    }

    let n2sq = a2.norm_squared();
    let g12 = a1.dot(&a2);
    let gamma = gamma_factor(&a1, &a2);
    if gamma < opts.gamma_min {
        return Err(GeometryError::NearParallel {
            gamma,
            gamma_min: opts.gamma_min,
        });
    }

    // Step (ii): x1 onto H(a1, b1) ∩ H(a2, b2). The 2x2 system is solved
    // directly; its determinant is n1sq * n2sq * gamma^2.
    let c1 = a1.dot(&x1) - b1;
    let det = n1sq * n2sq - g12 * g12;
    let s1 = (n2sq * c1 - g12 * r2) / det;
    let s2 = (n1sq * r2 - g12 * c1) / det;
    let mut x2 = x1.add_scaled(-s1, &a1);
    x2.axpy(-s2, &a2);

    let t1 = t_first + s1;
    let t2 = s2;
    let slack = 1e-10 * t1.abs().max(t2.abs());
    if t1 < -slack || t2 < -slack {
        return Err(GeometryError::KktViolation { t1, t2 });
    }

    let d2 = (r2 / (gamma * n2sq.sqrt())).powi(2);
    Ok(ProjectionReport {
        point: x2,
        steps_used: 2,
        descent_terms: vec![d1, d2],
        gamma: Some(gamma),
        coefficients: [t1 * h1.orientation(), t2 * h2.orientation()],
    })
}

#[cfg(test)]
mod tests;
