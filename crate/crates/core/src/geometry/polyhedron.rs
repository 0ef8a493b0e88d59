//! Exact projection onto an intersection of a few stripes.
//!
//! Each stripe contributes two opposite halfspaces, of which at most one can
//! be active at the projection. The projection is therefore
//! `x - Σ s_i u_i` where `s_i > 0` means the upper bounding hyperplane of
//! stripe `i` is active, `s_i < 0` the lower one, and `s_i = 0` neither.
//! Active patterns are enumerated by increasing size; the first one whose
//! equality-constrained projection is primal feasible and carries
//! multipliers of the right sign satisfies the KKT conditions and is the
//! unique projection. Rank-deficient patterns are skipped: by the conic
//! Carathéodory theorem an independent pattern with the same point exists.

use super::{check_direction, solve_gram, GeometryError, Result, Stripe, GRAM_RANK_TOL};
use crate::vector::RealVector;

/// Largest number of stripes accepted (3^N patterns in the worst case).
pub const MAX_STRIPES: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct StripeIntersection {
    pub point: RealVector,
    /// `point = x - Σ coefficients[i] * u_i`.
    pub coefficients: Vec<f64>,
}

impl StripeIntersection {
    /// Indices of stripes with an active bounding hyperplane.
    pub fn active(&self) -> Vec<usize> {
        (0..self.coefficients.len())
            .filter(|&i| self.coefficients[i] != 0.0)
            .collect()
    }
}

/// Metric projection of `x` onto `∩ stripes`.
///
/// `tol_rel` scales the per-constraint slack accepted when testing
/// feasibility of a candidate (see [`super::feasibility_tolerance`]).
pub fn project_stripe_intersection(
    x: &RealVector,
    stripes: &[Stripe],
    tol_rel: f64,
) -> Result<StripeIntersection> {
    let n = stripes.len();
    if n == 0 {
        return Err(GeometryError::NoConstraints);
    }
    if n > MAX_STRIPES {
        return Err(GeometryError::TooManyConstraints {
            count: n,
            max: MAX_STRIPES,
        });
    }
    for s in stripes {
        check_direction(x, &s.u)?;
        if !(s.xi >= 0.0) {
            return Err(GeometryError::InvalidWidth(s.xi));
        }
    }

    let offsets: Vec<f64> = stripes.iter().map(|s| s.offset(x)).collect();
    let tols: Vec<f64> = stripes.iter().map(|s| s.tolerance(tol_rel)).collect();
    if offsets.iter().zip(stripes).all(|(o, s)| o.abs() <= s.xi) {
        return Ok(StripeIntersection {
            point: x.clone(),
            coefficients: vec![0.0; n],
        });
    }

    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let g = stripes[i].u.dot(&stripes[j].u);
            gram[i * n + j] = g;
            gram[j * n + i] = g;
        }
    }

    for size in 1..=n {
        for subset in Combinations::new(n, size) {
            let sub_gram: Vec<f64> = subset
                .iter()
                .flat_map(|&i| subset.iter().map(move |&j| (i, j)))
                .map(|(i, j)| gram[i * n + j])
                .collect();
            for signs in 0u32..(1 << size) {
                let sign = |k: usize| if signs >> k & 1 == 0 { 1.0 } else { -1.0 };
                // Degenerate stripes have a single bounding hyperplane.
                if (0..size).any(|k| sign(k) < 0.0 && stripes[subset[k]].xi == 0.0) {
                    continue;
                }
                let rhs: Vec<f64> = (0..size)
                    .map(|k| offsets[subset[k]] - sign(k) * stripes[subset[k]].xi)
                    .collect();
                let sol = solve_gram(&sub_gram, size, &rhs, GRAM_RANK_TOL);
                if !sol.dropped.is_empty() {
                    continue;
                }
                let scale = sol.coefficients.iter().fold(0.0f64, |m, c| m.max(c.abs()));
                // A stripe with xi = 0 is an equality: its multiplier is free.
                let dual_ok = (0..size).all(|k| {
                    stripes[subset[k]].xi == 0.0 || sign(k) * sol.coefficients[k] >= -1e-10 * scale
                });
                if !dual_ok {
                    continue;
                }
                let mut coefficients = vec![0.0; n];
                for (k, &i) in subset.iter().enumerate() {
                    coefficients[i] = sol.coefficients[k];
                }
                // Offsets of the candidate, via the Gram matrix.
                let feasible = (0..n).all(|j| {
                    let shift: f64 = subset
                        .iter()
                        .map(|&i| gram[j * n + i] * coefficients[i])
                        .sum();
                    (offsets[j] - shift).abs() - stripes[j].xi <= tols[j]
                });
                if feasible {
                    return Ok(assemble(x, stripes, coefficients));
                }
            }
        }
    }
    Err(GeometryError::Infeasible)
}

fn assemble(x: &RealVector, stripes: &[Stripe], coefficients: Vec<f64>) -> StripeIntersection {
    let mut point = x.clone();
    for (s, c) in stripes.iter().zip(&coefficients) {
        if *c != 0.0 {
            point.axpy(-c, &s.u);
        }
    }
    StripeIntersection {
        point,
        coefficients,
    }
}

/// Lexicographic k-subsets of `0..n`.
struct Combinations {
    n: usize,
    current: Option<Vec<usize>>,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Self {
            n,
            current: (k <= n).then(|| (0..k).collect()),
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.clone()?;
        let k = out.len();
        let mut next = out.clone();
        let mut i = k;
        loop {
            if i == 0 {
                self.current = None;
                break;
            }
            i -= 1;
            if next[i] < self.n - k + i {
                next[i] += 1;
                for j in i + 1..k {
                    next[j] = next[j - 1] + 1;
                }
                self.current = Some(next);
                break;
            }
        }
        Some(out)
    }
}
