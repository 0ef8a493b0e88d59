//! Brute-force projection oracle and random instance generators shared by
//! the integration tests and the acceptance runner.
#![allow(dead_code)]

use rand::Rng;
use sesop::geometry::{
    project_halfspace, project_hyperplane, project_hyperplane_intersection, project_stripe,
    project_stripe_intersection, project_two_halfspaces, Halfspace, Sense, Stripe, TwoStepOptions,
    DEFAULT_TOL_FEAS,
};
use sesop::sampling::{gaussian_vector, seeded_rng, SeededRng};
use sesop::RealVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kind {
    Le,
    Eq,
}

/// `<a, x> <= b` or `<a, x> = b`.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub a: Vec<f64>,
    pub b: f64,
    pub kind: Kind,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Hildreth's dual coordinate ascent for `min ½||x - z||^2` subject to
/// linear constraints. Returns the minimizer.
pub fn hildreth(z: &[f64], cons: &[Constraint]) -> Vec<f64> {
    let norms: Vec<f64> = cons.iter().map(|c| dot(&c.a, &c.a)).collect();
    let mut lambda = vec![0.0; cons.len()];
    let mut x = z.to_vec();
    let scale = 1.0 + z.iter().map(|v| v.abs()).fold(0.0, f64::max);
    for sweep in 0..2_000_000 {
        let mut change: f64 = 0.0;
        for (i, c) in cons.iter().enumerate() {
            let g = (dot(&c.a, &x) - c.b) / norms[i];
            let mut next = lambda[i] + g;
            if c.kind == Kind::Le {
                next = next.max(0.0);
            }
            let d = next - lambda[i];
            if d != 0.0 {
                lambda[i] = next;
                for (xk, ak) in x.iter_mut().zip(&c.a) {
                    *xk -= d * ak;
                }
                change = change.max(d.abs() * norms[i].sqrt());
            }
        }
        if change <= 1e-14 * scale && sweep > 2 {
            break;
        }
        // Periodic re-synchronization against accumulated rounding.
        if sweep % 1000 == 999 {
            x = z.to_vec();
            for (c, l) in cons.iter().zip(&lambda) {
                for (xk, ak) in x.iter_mut().zip(&c.a) {
                    *xk -= l * ak;
                }
            }
        }
    }
    x
}

pub fn le(h: &Halfspace) -> Constraint {
    let sign = match h.sense {
        Sense::Le => 1.0,
        Sense::Ge => -1.0,
    };
    Constraint {
        a: h.u.iter().map(|v| sign * v).collect(),
        b: sign * h.alpha,
        kind: Kind::Le,
    }
}

pub fn stripe_constraints(s: &Stripe) -> [Constraint; 2] {
    [le(&s.upper()), le(&s.lower())]
}

pub fn max_abs_diff(a: &RealVector, b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn dim<R: Rng>(rng: &mut R) -> usize {
    rng.random_range(2..=20)
}

fn point<R: Rng>(rng: &mut R, n: usize, scale: f64) -> RealVector {
    gaussian_vector(rng, n).scaled(scale)
}

/// Per-operation outcome of the oracle comparison.
#[derive(Debug, Clone)]
pub struct OracleOutcome {
    pub operation: &'static str,
    pub instances: usize,
    pub max_error: f64,
    pub failures: Vec<String>,
}

impl OracleOutcome {
    fn new(operation: &'static str) -> Self {
        Self {
            operation,
            instances: 0,
            max_error: 0.0,
            failures: Vec::new(),
        }
    }

    fn record(&mut self, err: f64, tol: f64, what: impl FnOnce() -> String) {
        self.instances += 1;
        self.max_error = self.max_error.max(err);
        if !(err <= tol) {
            self.failures.push(format!("{} (error {err:e})", what()));
        }
    }
}

pub fn hyperplane_instances(count: usize, seed: u64, tol: f64) -> OracleOutcome {
    let mut rng = seeded_rng(seed);
    let mut out = OracleOutcome::new("project_hyperplane");
    for k in 0..count {
        let n = dim(&mut rng);
        let u = point(&mut rng, n, 1.0);
        let alpha = rng.random_range(-3.0..3.0);
        let x = point(&mut rng, n, 2.0);
        let got = project_hyperplane(&x, &u, alpha).unwrap();
        let want = hildreth(
            x.as_slice(),
            &[Constraint {
                a: u.as_slice().to_vec(),
                b: alpha,
                kind: Kind::Eq,
            }],
        );
        out.record(max_abs_diff(&got, &want), tol, || {
            format!("instance {k}, dim {n}")
        });
    }
    out
}

pub fn halfspace_instances(count: usize, seed: u64, tol: f64) -> OracleOutcome {
    let mut rng = seeded_rng(seed);
    let mut out = OracleOutcome::new("project_halfspace");
    for k in 0..count {
        let n = dim(&mut rng);
        let u = point(&mut rng, n, 1.0);
        let alpha = rng.random_range(-3.0..3.0);
        let h = if rng.random_bool(0.5) {
            Halfspace::le(u, alpha)
        } else {
            Halfspace::ge(u, alpha)
        };
        let x = point(&mut rng, n, 2.0);
        let got = project_halfspace(&x, &h).unwrap();
        let want = hildreth(x.as_slice(), &[le(&h)]);
        out.record(max_abs_diff(&got, &want), tol, || {
            format!("instance {k}, dim {n}")
        });
    }
    out
}

pub fn stripe_instances(count: usize, seed: u64, tol: f64) -> OracleOutcome {
    let mut rng = seeded_rng(seed);
    let mut out = OracleOutcome::new("project_stripe");
    for k in 0..count {
        let n = dim(&mut rng);
        let u = point(&mut rng, n, 1.0);
        let alpha = rng.random_range(-3.0..3.0);
        let xi = rng.random_range(0.0..1.0);
        let s = Stripe::new(u, alpha, xi).unwrap();
        let x = point(&mut rng, n, 2.0);
        let got = project_stripe(&x, &s).unwrap();
        let want = hildreth(x.as_slice(), &stripe_constraints(&s));
        out.record(max_abs_diff(&got, &want), tol, || {
            format!("instance {k}, dim {n}")
        });
    }
    out
}

pub fn hyperplane_intersection_instances(count: usize, seed: u64, tol: f64) -> OracleOutcome {
    let mut rng = seeded_rng(seed);
    let mut out = OracleOutcome::new("project_hyperplane_intersection");
    for k in 0..count {
        let n = dim(&mut rng);
        let m = rng.random_range(1..=n.min(5));
        let anchor = point(&mut rng, n, 1.0);
        let mut planes: Vec<(RealVector, f64)> = (0..m)
            .map(|_| {
                let u = point(&mut rng, n, 1.0);
                let a = u.dot(&anchor);
                (u, a)
            })
            .collect();
        // Occasionally repeat a plane as a combination of the others.
        if m >= 2 && rng.random_bool(0.2) {
            let c = rng.random_range(-2.0..2.0);
            let u = planes[0].0.add_scaled(c, &planes[1].0);
            let a = u.dot(&anchor);
            planes.push((u, a));
        }
        let x = point(&mut rng, n, 2.0);
        let got = project_hyperplane_intersection(&x, &planes).unwrap().point;
        let cons: Vec<Constraint> = planes
            .iter()
            .map(|(u, a)| Constraint {
                a: u.as_slice().to_vec(),
                b: *a,
                kind: Kind::Eq,
            })
            .collect();
        let want = hildreth(x.as_slice(), &cons);
        out.record(max_abs_diff(&got, &want), tol, || {
            format!("instance {k}, dim {n}, {} planes", planes.len())
        });
    }
    out
}

/// A random two-halfspace instance meeting the preconditions: `x` strictly
/// outside `h1`, inside `h2`, and normals not nearly parallel.
pub fn two_halfspace_instance(rng: &mut SeededRng) -> (RealVector, Halfspace, Halfspace) {
    loop {
        let n = dim(rng);
        let make = |rng: &mut SeededRng| {
            let u = point(rng, n, 1.0);
            let alpha = rng.random_range(-2.0..2.0);
            if rng.random_bool(0.5) {
                Halfspace::le(u, alpha)
            } else {
                Halfspace::ge(u, alpha)
            }
        };
        let h1 = make(rng);
        let h2 = make(rng);
        if sesop::geometry::gamma_factor(&h1.u, &h2.u) < 1e-2 {
            continue;
        }
        let x = point(rng, n, 2.0);
        if h1.violation(&x) > 1e-3 && h2.violation(&x) <= 0.0 {
            return (x, h1, h2);
        }
    }
}

pub fn two_halfspace_instances(count: usize, seed: u64, tol: f64) -> OracleOutcome {
    let mut rng = seeded_rng(seed);
    let mut out = OracleOutcome::new("project_two_halfspaces");
    let opts = TwoStepOptions::default();
    for k in 0..count {
        let (x, h1, h2) = two_halfspace_instance(&mut rng);
        let got = match project_two_halfspaces(&x, &h1, &h2, &opts) {
            Ok(r) => r.point,
            Err(e) => {
                out.instances += 1;
                out.failures.push(format!("instance {k}: {e}"));
                continue;
            }
        };
        let want = hildreth(x.as_slice(), &[le(&h1), le(&h2)]);
        out.record(max_abs_diff(&got, &want), tol, || {
            format!("instance {k}, dim {}", x.dim())
        });
    }
    out
}

pub fn stripe_intersection_instances(count: usize, seed: u64, tol: f64) -> OracleOutcome {
    let mut rng = seeded_rng(seed);
    let mut out = OracleOutcome::new("project_stripe_intersection");
    for k in 0..count {
        let n = dim(&mut rng);
        let m = rng.random_range(1..=4);
        let anchor = point(&mut rng, n, 1.0);
        let stripes: Vec<Stripe> = (0..m)
            .map(|_| {
                let u = point(&mut rng, n, 1.0);
                let xi = if rng.random_bool(0.1) {
                    0.0
                } else {
                    rng.random_range(0.0..0.5)
                };
                let shift = rng.random_range(-1.0..=1.0) * xi;
                Stripe::new(u.clone(), u.dot(&anchor) + shift, xi).unwrap()
            })
            .collect();
        let x = point(&mut rng, n, 2.0);
        let got = match project_stripe_intersection(&x, &stripes, DEFAULT_TOL_FEAS) {
            Ok(r) => r.point,
            Err(e) => {
                out.instances += 1;
                out.failures.push(format!("instance {k}: {e}"));
                continue;
            }
        };
        let cons: Vec<Constraint> = stripes
            .iter()
            .flat_map(|s| {
                if s.xi == 0.0 {
                    vec![Constraint {
                        a: s.u.as_slice().to_vec(),
                        b: s.alpha,
                        kind: Kind::Eq,
                    }]
                } else {
                    stripe_constraints(s).to_vec()
                }
            })
            .collect();
        let want = hildreth(x.as_slice(), &cons);
        out.record(max_abs_diff(&got, &want), tol, || {
            format!("instance {k}, dim {n}, {m} stripes")
        });
    }
    out
}

/// All projection operations against the oracle.
pub fn all_oracle_outcomes(count: usize, seed: u64, tol: f64) -> Vec<OracleOutcome> {
    vec![
        hyperplane_instances(count, seed, tol),
        halfspace_instances(count, seed + 1, tol),
        stripe_instances(count, seed + 2, tol),
        hyperplane_intersection_instances(count, seed + 3, tol),
        two_halfspace_instances(count, seed + 4, tol),
        stripe_intersection_instances(count, seed + 5, tol),
    ]
}

/// Checks `||z - x2||^2 <= ||z - x||^2 - Σ descent + slack` for sampled
/// feasible `z`. Returns the largest violation seen (negative when all pass).
pub fn two_halfspace_descent(instances: usize, samples: usize, seed: u64) -> (f64, usize) {
    let mut rng = seeded_rng(seed);
    let opts = TwoStepOptions::default();
    let mut worst = f64::NEG_INFINITY;
    let mut checked = 0;
    for _ in 0..instances {
        let (x, h1, h2) = two_halfspace_instance(&mut rng);
        let report = project_two_halfspaces(&x, &h1, &h2, &opts).unwrap();
        let descent = report.descent();
        let mut taken = 0;
        while taken < samples {
            let r = 10f64.powf(rng.random_range(-2.0..1.0));
            let z = report.point.add(&point(&mut rng, x.dim(), r));
            if h1.violation(&z) > 0.0 || h2.violation(&z) > 0.0 {
                continue;
            }
            let lhs = z.sub(&report.point).norm_squared();
            let rhs = z.sub(&x).norm_squared() - descent;
            worst = worst.max(lhs - rhs);
            taken += 1;
            checked += 1;
        }
    }
    (worst, checked)
}
