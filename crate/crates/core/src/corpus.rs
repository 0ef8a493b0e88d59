//! Test problems with known exact solutions, exact data and certificates.
//!
//! Three families are provided: dense linear maps (`ctc = 0`), the
//! diagonal quadratic `F_i(x) = x_i + q x_i^2` with an analytic cone
//! constant, and discrete autoconvolution with an empirical one. These are
//! constructed test cases, not taken from published experiments.
//!
//! Uniqueness of `x_plus` inside the ball is assumed, not verified.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Deserialize;
use thiserror::Error;

use crate::operators::{
    check_adjoint, check_frechet, estimate_cf, estimate_tcc, Autoconvolution, DiagonalQuadratic,
    DomainBall, ForwardOperator, MatrixOperator, OperatorCertificate, OperatorError, Provenance,
    TCC_SAFETY_FACTOR,
};
use crate::sampling::{gaussian_vector, seeded_rng};
use crate::vector::RealVector;

/// Seed used for every certificate diagnostic.
pub const CERTIFICATE_SEED: u64 = 0x5e50;
const ADJOINT_SAMPLES: usize = 100;
const FRECHET_SAMPLES: usize = 20;
/// Pairs sampled for an empirical tangential cone constant.
pub const TCC_SAMPLES: usize = 10_000;
const CF_SAMPLES: usize = 100;

/// Names accepted by [`named_problem`].
pub const PROBLEM_NAMES: [&str; 4] = ["linear-diag", "linear-random", "diagquad", "autoconv-16"];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("x_plus lies outside the half ball: ||x_plus - x0|| = {distance} > rho/2 = {limit}")]
    OutsideHalfBall { distance: f64, limit: f64 },
    #[error("tangential cone constant {ctc} is not below 1 on this ball")]
    ConeConstantTooLarge { ctc: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("unknown problem '{0}' (expected one of linear-diag, linear-random, diagquad, autoconv-16, or a JSON file)")]
    UnknownProblem(String),
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Which operator family a problem belongs to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Linear,
    DiagonalQuadratic { q: f64 },
    Autoconvolution,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Linear => write!(f, "linear"),
            Family::DiagonalQuadratic { q } => write!(f, "diagonal-quadratic(q={q})"),
            Family::Autoconvolution => write!(f, "autoconvolution"),
        }
    }
}

/// An operator equation `F(x) = y` with known solution and certificate.
#[derive(Debug, Clone)]
pub struct ForwardProblem {
    pub name: String,
    pub family: Family,
    pub operator: Arc<dyn ForwardOperator>,
    pub ball: DomainBall,
    pub certificate: OperatorCertificate,
    pub x_plus: RealVector,
    pub y_exact: RealVector,
}

impl ForwardProblem {
    pub fn x0(&self) -> &RealVector {
        &self.ball.center
    }

    pub fn is_linear(&self) -> bool {
        self.operator.is_linear()
    }

    /// `||x_plus - x0|| <= rho / 2`
    pub fn half_ball_holds(&self) -> bool {
        self.x_plus.distance(&self.ball.center) <= 0.5 * self.ball.radius
    }

    /// Same problem under a different name.
    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

fn check_dim(what: &'static str, expected: usize, v: &RealVector) -> Result<(), CorpusError> {
    if v.dim() != expected {
        return Err(CorpusError::DimensionMismatch {
            what,
            expected,
            found: v.dim(),
        });
    }
    if !v.is_finite() {
        return Err(CorpusError::InvalidParameter(format!(
            "{what} has non-finite entries"
        )));
    }
    Ok(())
}

fn make_ball(x_plus: &RealVector, x0: RealVector, rho: f64) -> Result<DomainBall, CorpusError> {
    let ball = DomainBall::new(x0, rho)?;
    let distance = x_plus.distance(&ball.center);
    if distance > 0.5 * rho {
        return Err(CorpusError::OutsideHalfBall {
            distance,
            limit: 0.5 * rho,
        });
    }
    Ok(ball)
}

pub fn make_linear_problem(
    matrix: DMatrix<f64>,
    x_plus: RealVector,
    x0: RealVector,
    rho: f64,
) -> Result<ForwardProblem, CorpusError> {
    if matrix.is_empty() {
        return Err(CorpusError::InvalidParameter("matrix is empty".into()));
    }
    if matrix.iter().any(|a| !a.is_finite()) {
        return Err(CorpusError::InvalidParameter(
            "matrix has non-finite entries".into(),
        ));
    }
    check_dim("x_plus", matrix.ncols(), &x_plus)?;
    check_dim("x0", matrix.ncols(), &x0)?;
    let ball = make_ball(&x_plus, x0, rho)?;
    let c_f = matrix.singular_values().max();
    if !(c_f > 0.0) {
        return Err(CorpusError::InvalidParameter("matrix is zero".into()));
    }
    let op = MatrixOperator::new(matrix);
    let certificate = OperatorCertificate {
        ctc: 0.0,
        ctc_provenance: Provenance::Analytic,
        ctc_sampled: None,
        c_f,
        adjoint_defect: check_adjoint(&op, &ball, ADJOINT_SAMPLES, CERTIFICATE_SEED),
        taylor_order: check_frechet(&op, &ball, FRECHET_SAMPLES, CERTIFICATE_SEED),
    };
    let y_exact = op.apply(&x_plus);
    Ok(ForwardProblem {
        name: "linear".into(),
        family: Family::Linear,
        operator: Arc::new(op),
        ball,
        certificate,
        x_plus,
        y_exact,
    })
}

/// Analytic cone constant of `x + q x^2` on `B_rho(x0)`.
///
/// The remainder is `-q (x - x~)^2` elementwise and
/// `F(x) - F(x~) = diag(1 + q (x_i + x~_i)) (x - x~)`. With
/// `M = ||x0||_inf + rho` bounding every coordinate on the ball this gives
/// `ctc = 2 q rho / (1 - 2 q M)`, valid while `2 q M < 1`.
pub fn diagonal_quadratic_ctc(q: f64, x0: &RealVector, rho: f64) -> Option<f64> {
    let m = x0.max_abs() + rho;
    let denom = 1.0 - 2.0 * q * m;
    (denom > 0.0).then(|| 2.0 * q * rho / denom)
}

pub fn make_diagonal_quadratic(
    q: f64,
    dim: usize,
    x_plus: RealVector,
    x0: RealVector,
    rho: f64,
) -> Result<ForwardProblem, CorpusError> {
    if !(q >= 0.0 && q.is_finite()) {
        return Err(CorpusError::InvalidParameter(format!(
            "q must be finite and >= 0, got {q}"
        )));
    }
    if dim == 0 {
        return Err(CorpusError::InvalidParameter(
            "dimension must be positive".into(),
        ));
    }
    check_dim("x_plus", dim, &x_plus)?;
    check_dim("x0", dim, &x0)?;
    let ball = make_ball(&x_plus, x0, rho)?;
    let ctc = diagonal_quadratic_ctc(q, &ball.center, rho).unwrap_or(f64::INFINITY);
    if !(ctc < 1.0) {
        return Err(CorpusError::ConeConstantTooLarge { ctc });
    }
    let c_f = 1.0 + 2.0 * q * (ball.center.max_abs() + rho);
    let op = DiagonalQuadratic { q, dim };
    let certificate = OperatorCertificate {
        ctc,
        ctc_provenance: Provenance::Analytic,
        ctc_sampled: None,
        c_f,
        adjoint_defect: check_adjoint(&op, &ball, ADJOINT_SAMPLES, CERTIFICATE_SEED),
        taylor_order: check_frechet(&op, &ball, FRECHET_SAMPLES, CERTIFICATE_SEED),
    };
    let y_exact = op.apply(&x_plus);
    Ok(ForwardProblem {
        name: "diagquad".into(),
        family: Family::DiagonalQuadratic { q },
        operator: Arc::new(op),
        ball,
        certificate,
        x_plus,
        y_exact,
    })
}

pub fn make_autoconvolution(
    dim: usize,
    x_plus: RealVector,
    x0: RealVector,
    rho: f64,
) -> Result<ForwardProblem, CorpusError> {
    if dim == 0 {
        return Err(CorpusError::InvalidParameter(
            "dimension must be positive".into(),
        ));
    }
    check_dim("x_plus", dim, &x_plus)?;
    check_dim("x0", dim, &x0)?;
    if let Some((i, v)) = x_plus.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(CorpusError::InvalidParameter(format!(
            "x_plus must be strictly positive, entry {i} is {v}"
        )));
    }
    let ball = make_ball(&x_plus, x0, rho)?;
    let op = Autoconvolution { dim };
    let sampled = estimate_tcc(&op, &ball, TCC_SAMPLES, CERTIFICATE_SEED)?;
    let ctc = TCC_SAFETY_FACTOR * sampled;
    if !(ctc < 1.0) {
        return Err(CorpusError::ConeConstantTooLarge { ctc });
    }
    let certificate = OperatorCertificate {
        ctc,
        ctc_provenance: Provenance::Empirical,
        ctc_sampled: Some(sampled),
        c_f: estimate_cf(&op, &ball, CF_SAMPLES, CERTIFICATE_SEED),
        adjoint_defect: check_adjoint(&op, &ball, ADJOINT_SAMPLES, CERTIFICATE_SEED),
        taylor_order: check_frechet(&op, &ball, FRECHET_SAMPLES, CERTIFICATE_SEED),
    };
    let y_exact = op.apply(&x_plus);
    Ok(ForwardProblem {
        name: format!("autoconv-{dim}"),
        family: Family::Autoconvolution,
        operator: Arc::new(op),
        ball,
        certificate,
        x_plus,
        y_exact,
    })
}

/// Random `n x n` matrix `U diag(1/(1+i)) V^T` with orthogonal factors from
/// seeded Gaussian matrices.
pub fn graded_random_matrix(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = seeded_rng(seed);
    let mut orthogonal = || {
        let g = gaussian_vector(&mut rng, n * n);
        DMatrix::from_column_slice(n, n, g.as_slice()).qr().q()
    };
    let u = orthogonal();
    let v = orthogonal();
    let s = DMatrix::from_fn(
        n,
        n,
        |i, j| if i == j { 1.0 / (1.0 + i as f64) } else { 0.0 },
    );
    u * s * v.transpose()
}

/// Positive profile `1 + 0.03 sin(2 pi j / dim)` used by `autoconv-16`.
pub fn autoconvolution_profile(dim: usize) -> RealVector {
    RealVector::from(
        (0..dim)
            .map(|j| 1.0 + 0.03 * (2.0 * std::f64::consts::PI * j as f64 / dim as f64).sin())
            .collect::<Vec<_>>(),
    )
}

/// Builds one of [`PROBLEM_NAMES`].
pub fn named_problem(name: &str) -> Result<ForwardProblem, CorpusError> {
    let problem = match name {
        "linear-diag" => make_linear_problem(
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.1, 0.01])),
            RealVector::from([1.0, 1.0, 1.0]),
            RealVector::zeros(3),
            4.0,
        )?,
        "linear-random" => {
            let mut rng = seeded_rng(17);
            let x = gaussian_vector(&mut rng, 10);
            let x_plus = x.scaled(1.0 / x.norm());
            make_linear_problem(
                graded_random_matrix(10, 17),
                x_plus,
                RealVector::zeros(10),
                2.5,
            )?
        }
        "diagquad" => make_diagonal_quadratic(
            0.1,
            2,
            RealVector::from([0.3, -0.2]),
            RealVector::zeros(2),
            1.0,
        )?,
        "autoconv-16" => {
            let x_plus = autoconvolution_profile(16);
            make_autoconvolution(16, x_plus, RealVector::from(vec![1.0; 16]), AUTOCONV_RADIUS)?
        }
        other => return Err(CorpusError::UnknownProblem(other.to_string())),
    };
    Ok(problem.renamed(name))
}

/// Ball radius of `autoconv-16`.
pub const AUTOCONV_RADIUS: f64 = 0.18;

pub fn all_named_problems() -> Result<Vec<ForwardProblem>, CorpusError> {
    PROBLEM_NAMES.iter().map(|n| named_problem(n)).collect()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearProblemFile {
    name: String,
    matrix: Vec<Vec<f64>>,
    x_plus: Vec<f64>,
    x0: Vec<f64>,
    rho: f64,
}

/// Parses the JSON schema `{"name", "matrix": [[...]], "x_plus", "x0", "rho"}`.
///
/// `origin` labels error messages (usually the file path).
pub fn parse_linear_problem(text: &str, origin: &str) -> Result<ForwardProblem, CorpusError> {
    let parse_err = |message: String| CorpusError::Parse {
        path: origin.to_string(),
        message,
    };
    let file: LinearProblemFile =
        serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?;
    let rows = file.matrix.len();
    if rows == 0 {
        return Err(parse_err("field \"matrix\" has no rows".into()));
    }
    let cols = file.matrix[0].len();
    if cols == 0 {
        return Err(parse_err("matrix row 0 is empty".into()));
    }
    for (i, row) in file.matrix.iter().enumerate() {
        if row.len() != cols {
            return Err(parse_err(format!(
                "matrix row {i} has {} entries, expected {cols}",
                row.len()
            )));
        }
    }
    for (field, v) in [("x_plus", &file.x_plus), ("x0", &file.x0)] {
        if v.len() != cols {
            return Err(parse_err(format!(
                "field \"{field}\" has {} entries, expected {cols} (matrix columns)",
                v.len()
            )));
        }
    }
    let matrix = DMatrix::from_fn(rows, cols, |i, j| file.matrix[i][j]);
    let problem = make_linear_problem(
        matrix,
        RealVector::from(file.x_plus),
        RealVector::from(file.x0),
        file.rho,
    )
    .map_err(|e| parse_err(e.to_string()))?;
    Ok(problem.renamed(file.name))
}

/// Resolves a problem name from the corpus, or else loads a JSON file.
pub fn load_problem(spec: &str) -> Result<ForwardProblem, CorpusError> {
    if PROBLEM_NAMES.contains(&spec) {
        return named_problem(spec);
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(CorpusError::UnknownProblem(spec.to_string()));
    }
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: spec.to_string(),
        source,
    })?;
    parse_linear_problem(&text, spec)
}
