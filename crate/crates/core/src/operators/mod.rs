//! Forward operators with Fréchet derivative and adjoint-derivative actions.
//!
//! Weak sequential closedness is not checked: in finite dimensions it
//! follows from continuity of the operator.

mod diagnostics;

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vector::RealVector;

pub use diagnostics::{
    check_adjoint, check_frechet, derivative_norm, estimate_cf, estimate_tcc, CF_SAFETY_FACTOR,
    TCC_SAFETY_FACTOR,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OperatorError {
    #[error("ball radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
    #[error("tangential cone estimation failed: all {0} sampled pairs were degenerate")]
    EstimationFailed(usize),
}

/// A (possibly nonlinear) map `F: X -> Y` between finite-dimensional spaces.
///
/// Implementations must be deterministic. `deriv_apply(x, ·)` and
/// `deriv_adjoint_apply(x, ·)` are linear and mutually adjoint.
pub trait ForwardOperator: Send + Sync + fmt::Debug {
    fn dim_x(&self) -> usize;
    fn dim_y(&self) -> usize;
    /// `F(x)`
    fn apply(&self, x: &RealVector) -> RealVector;
    /// `F'(x) v`
    fn deriv_apply(&self, x: &RealVector, v: &RealVector) -> RealVector;
    /// `F'(x)^* w`
    fn deriv_adjoint_apply(&self, x: &RealVector, w: &RealVector) -> RealVector;
    /// True when `F` is linear, so that `F'(x) = F` for every `x`.
    fn is_linear(&self) -> bool {
        false
    }
}

/// The closed ball `B_radius(center)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBall {
    pub center: RealVector,
    pub radius: f64,
}

impl DomainBall {
    pub fn new(center: RealVector, radius: f64) -> Result<Self, OperatorError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(OperatorError::InvalidRadius(radius));
        }
        Ok(Self { center, radius })
    }

    pub fn contains(&self, x: &RealVector) -> bool {
        x.distance(&self.center) <= self.radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Analytic,
    Empirical,
}

/// Observed order of the Taylor remainder `||F(x+hv) - F(x) - h F'(x) v||`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaylorOrder {
    /// Remainder at rounding level for every step size (linear operators).
    Exact,
    /// Fitted slope of log remainder against log h.
    Slope(f64),
}

impl TaylorOrder {
    /// Passes when exact or when the slope is within `tol` of 2.
    pub fn is_second_order(&self, tol: f64) -> bool {
        match *self {
            TaylorOrder::Exact => true,
            TaylorOrder::Slope(s) => (s - 2.0).abs() <= tol,
        }
    }
}

impl fmt::Display for TaylorOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaylorOrder::Exact => write!(f, "exact"),
            TaylorOrder::Slope(s) => write!(f, "{s:.4}"),
        }
    }
}

/// Constants certifying the standing assumptions on a ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorCertificate {
    /// Tangential cone constant used to build stripes, in `[0, 1)`.
    pub ctc: f64,
    pub ctc_provenance: Provenance,
    /// Raw sampled maximum before the safety factor (empirical only).
    pub ctc_sampled: Option<f64>,
    /// Bound on `||F'(x)||` over the ball.
    pub c_f: f64,
    pub adjoint_defect: f64,
    pub taylor_order: TaylorOrder,
}

/// `F(x) = A x` for a dense matrix `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixOperator {
    matrix: DMatrix<f64>,
}

impl MatrixOperator {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        Self { matrix }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    fn mul(m: &DMatrix<f64>, x: &RealVector) -> RealVector {
        let out = m * DVector::from_column_slice(x.as_slice());
        RealVector::from(out.as_slice().to_vec())
    }
}

impl ForwardOperator for MatrixOperator {
    fn dim_x(&self) -> usize {
        self.matrix.ncols()
    }

    fn dim_y(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply(&self, x: &RealVector) -> RealVector {
        Self::mul(&self.matrix, x)
    }

    fn deriv_apply(&self, _x: &RealVector, v: &RealVector) -> RealVector {
        Self::mul(&self.matrix, v)
    }

    fn deriv_adjoint_apply(&self, _x: &RealVector, w: &RealVector) -> RealVector {
        let out = self
            .matrix
            .tr_mul(&DVector::from_column_slice(w.as_slice()));
        RealVector::from(out.as_slice().to_vec())
    }

    fn is_linear(&self) -> bool {
        true
    }
}

/// `F_i(x) = x_i + q x_i^2`, with `F'(x) = diag(1 + 2 q x_i)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagonalQuadratic {
    pub q: f64,
    pub dim: usize,
}

impl ForwardOperator for DiagonalQuadratic {
    fn dim_x(&self) -> usize {
        self.dim
    }

    fn dim_y(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &RealVector) -> RealVector {
        RealVector::from(
            x.iter()
                .map(|&xi| xi + self.q * xi * xi)
                .collect::<Vec<_>>(),
        )
    }

    fn deriv_apply(&self, x: &RealVector, v: &RealVector) -> RealVector {
        RealVector::from(
            x.iter()
                .zip(v)
                .map(|(&xi, &vi)| (1.0 + 2.0 * self.q * xi) * vi)
                .collect::<Vec<_>>(),
        )
    }

    fn deriv_adjoint_apply(&self, x: &RealVector, w: &RealVector) -> RealVector {
        self.deriv_apply(x, w)
    }

    fn is_linear(&self) -> bool {
        self.q == 0.0
    }
}

/// Discrete causal autoconvolution on `[0, 1]` with mesh width `h = 1/dim`:
/// `F(x)_k = h Σ_{j<=k} x_{k-j} x_j`.
///
/// `F'(x) v = 2 h (x * v)` truncated to `dim` entries; the adjoint is the
/// corresponding correlation `(F'(x)^* w)_j = 2 h Σ_{k>=j} x_{k-j} w_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Autoconvolution {
    pub dim: usize,
}

impl Autoconvolution {
    pub fn mesh_width(&self) -> f64 {
        1.0 / self.dim as f64
    }

    fn convolve(a: &RealVector, b: &RealVector, scale: f64) -> RealVector {
        let n = a.dim();
        let mut out = vec![0.0; n];
        for (k, o) in out.iter_mut().enumerate() {
            *o = scale * (0..=k).map(|j| a[k - j] * b[j]).sum::<f64>();
        }
        RealVector::from(out)
    }
}

impl ForwardOperator for Autoconvolution {
    fn dim_x(&self) -> usize {
        self.dim
    }

    fn dim_y(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &RealVector) -> RealVector {
        Self::convolve(x, x, self.mesh_width())
    }

    fn deriv_apply(&self, x: &RealVector, v: &RealVector) -> RealVector {
        Self::convolve(x, v, 2.0 * self.mesh_width())
    }

    fn deriv_adjoint_apply(&self, x: &RealVector, w: &RealVector) -> RealVector {
        let n = self.dim;
        let scale = 2.0 * self.mesh_width();
        let mut out = vec![0.0; n];
        for (j, o) in out.iter_mut().enumerate() {
            *o = scale * (j..n).map(|k| x[k - j] * w[k]).sum::<f64>();
        }
        RealVector::from(out)
    }
}

/// Wraps an operator and counts calls, for cost comparisons.
#[derive(Debug)]
pub struct CountingOperator {
    inner: Arc<dyn ForwardOperator>,
    forward: AtomicUsize,
    derivative: AtomicUsize,
    adjoint: AtomicUsize,
}

/// Snapshot of [`CountingOperator`] counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct OperationCounts {
    pub forward: usize,
    pub derivative: usize,
    pub adjoint: usize,
}

impl CountingOperator {
    pub fn new(inner: Arc<dyn ForwardOperator>) -> Self {
        Self {
            inner,
            forward: AtomicUsize::new(0),
            derivative: AtomicUsize::new(0),
            adjoint: AtomicUsize::new(0),
        }
    }

    pub fn counts(&self) -> OperationCounts {
        OperationCounts {
            forward: self.forward.load(Ordering::Relaxed),
            derivative: self.derivative.load(Ordering::Relaxed),
            adjoint: self.adjoint.load(Ordering::Relaxed),
        }
    }
}

impl ForwardOperator for CountingOperator {
    fn dim_x(&self) -> usize {
        self.inner.dim_x()
    }

    fn dim_y(&self) -> usize {
        self.inner.dim_y()
    }

    fn apply(&self, x: &RealVector) -> RealVector {
        self.forward.fetch_add(1, Ordering::Relaxed);
        self.inner.apply(x)
    }

    fn deriv_apply(&self, x: &RealVector, v: &RealVector) -> RealVector {
        self.derivative.fetch_add(1, Ordering::Relaxed);
        self.inner.deriv_apply(x, v)
    }

    fn deriv_adjoint_apply(&self, x: &RealVector, w: &RealVector) -> RealVector {
        self.adjoint.fetch_add(1, Ordering::Relaxed);
        self.inner.deriv_adjoint_apply(x, w)
    }

    fn is_linear(&self) -> bool {
        self.inner.is_linear()
    }
}

/// Dense Jacobian `F'(x)` assembled column by column from `deriv_apply`.
pub fn assemble_jacobian(op: &dyn ForwardOperator, x: &RealVector) -> DMatrix<f64> {
    let (m, n) = (op.dim_y(), op.dim_x());
    let mut jac = DMatrix::zeros(m, n);
    for j in 0..n {
        let col = op.deriv_apply(x, &RealVector::basis(n, j));
        for i in 0..m {
            jac[(i, j)] = col[i];
        }
    }
    jac
}
