use proptest::prelude::*;

use super::*;

fn v<const N: usize>(a: [f64; N]) -> RealVector {
    RealVector::from(a)
}

fn assert_close(a: &RealVector, b: &RealVector, tol: f64) {
    assert!(a.distance(b) <= tol, "{a:?} vs {b:?}");
}

#[test]
fn hyperplane_examples() {
    assert_eq!(
        project_hyperplane(&v([2.0, 0.0]), &v([1.0, 0.0]), 1.0).unwrap(),
        v([1.0, 0.0])
    );
    assert_eq!(
        project_hyperplane(&v([0.0, 0.0]), &v([0.0, 1.0]), 2.0).unwrap(),
        v([0.0, 2.0])
    );
    assert_eq!(
        project_hyperplane(&v([1.0, 1.0]), &v([0.0, 0.0]), 1.0),
        Err(GeometryError::DegenerateDirection)
    );
    assert!(matches!(
        project_hyperplane(&v([1.0, 1.0]), &v([1.0]), 1.0),
        Err(GeometryError::DimensionMismatch {
            expected: 2,
            found: 1
        })
    ));
}

#[test]
fn halfspace_examples() {
    let h = Halfspace::le(v([1.0, 0.0]), 1.0);
    assert_eq!(
        project_halfspace(&v([3.0, 0.0]), &h).unwrap(),
        v([1.0, 0.0])
    );
    assert_eq!(
        project_halfspace(&v([0.0, 0.0]), &h).unwrap(),
        v([0.0, 0.0])
    );
    let g = Halfspace::ge(v([1.0, 0.0]), 1.0);
    assert_eq!(
        project_halfspace(&v([0.0, 5.0]), &g).unwrap(),
        v([1.0, 5.0])
    );
    assert_eq!(
        project_halfspace(&v([4.0, 5.0]), &g).unwrap(),
        v([4.0, 5.0])
    );
}

#[test]
fn stripe_examples() {
    let s = Stripe::new(v([1.0, 0.0]), 0.0, 1.0).unwrap();
    assert_eq!(project_stripe(&v([3.0, 0.0]), &s).unwrap(), v([1.0, 0.0]));
    assert_eq!(project_stripe(&v([0.5, 7.0]), &s).unwrap(), v([0.5, 7.0]));
    assert_eq!(project_stripe(&v([-3.0, 0.0]), &s).unwrap(), v([-1.0, 0.0]));
}

#[test]
fn stripe_validation() {
    assert_eq!(
        Stripe::new(v([1.0]), 0.0, -1.0),
        Err(GeometryError::InvalidWidth(-1.0))
    );
    assert_eq!(
        Stripe::new(v([0.0]), 0.0, 1.0),
        Err(GeometryError::DegenerateDirection)
    );
    // xi = 0 is the hyperplane.
    let s = Stripe::new(v([0.0, 2.0]), 2.0, 0.0).unwrap();
    assert_eq!(
        project_stripe(&v([3.0, 5.0]), &s).unwrap(),
        project_hyperplane(&v([3.0, 5.0]), &s.u, 2.0).unwrap()
    );
}

#[test]
fn hyperplane_intersection_examples() {
    let planes = vec![(v([1.0, 0.0]), 0.0), (v([0.0, 1.0]), 0.0)];
    let p = project_hyperplane_intersection(&v([1.0, 1.0]), &planes).unwrap();
    assert_close(&p.point, &v([0.0, 0.0]), 1e-15);
    assert!(p.dropped.is_empty());

    let x = v([0.3, -1.2, 4.0]);
    let u = v([1.0, 2.0, -0.5]);
    let single = project_hyperplane_intersection(&x, &[(u.clone(), 0.7)]).unwrap();
    assert_close(
        &single.point,
        &project_hyperplane(&x, &u, 0.7).unwrap(),
        1e-14,
    );
}

#[test]
fn hyperplane_intersection_drops_dependent_planes() {
    // Second plane is a scaled copy of the first (consistent).
    let planes = vec![
        (v([1.0, 1.0, 0.0]), 1.0),
        (v([2.0, 2.0, 0.0]), 2.0),
        (v([0.0, 0.0, 1.0]), 3.0),
    ];
    let p = project_hyperplane_intersection(&v([0.0, 0.0, 0.0]), &planes).unwrap();
    assert_eq!(p.dropped, vec![1]);
    assert_close(&p.point, &v([0.5, 0.5, 3.0]), 1e-14);
    assert_eq!(
        project_hyperplane_intersection(&v([0.0]), &[]),
        Err(GeometryError::NoConstraints)
    );
}

#[test]
fn two_halfspaces_single_step() {
    let h1 = Halfspace::le(v([1.0, 0.0]), 0.0);
    let h2 = Halfspace::le(v([0.0, 1.0]), 0.0);
    let r = project_two_halfspaces(&v([1.0, -1.0]), &h1, &h2, &TwoStepOptions::default()).unwrap();
    assert_eq!(r.point, v([0.0, -1.0]));
    assert_eq!(r.steps_used, 1);
    assert_eq!(r.gamma, None);
    assert_eq!(r.descent_terms, vec![1.0]);
}

#[test]
fn two_halfspaces_double_step() {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let h1 = Halfspace::le(v([1.0, 0.0]), 0.0);
    let h2 = Halfspace::le(v([-s, s]), 0.0);
    let r = project_two_halfspaces(&v([2.0, 1.0]), &h1, &h2, &TwoStepOptions::default()).unwrap();
    assert_eq!(r.steps_used, 2);
    assert_close(&r.point, &v([0.0, 0.0]), 1e-15);
    assert!((r.coefficients[0] - 3.0).abs() < 1e-14);
    assert!((r.coefficients[1] - 2f64.sqrt()).abs() < 1e-14);
    // gamma = sin(45°)
    assert!((r.gamma.unwrap() - s).abs() < 1e-15);
    // d1 = 4; x1 = (0,1), <u2,x1> = s, d2 = (s / s)^2 = 1
    assert!((r.descent_terms[0] - 4.0).abs() < 1e-14);
    assert!((r.descent_terms[1] - 1.0).abs() < 1e-14);
}

#[test]
fn orthogonal_normals_never_need_step_two() {
    let opts = TwoStepOptions::default();
    let h1 = Halfspace::le(v([1.0, 0.0, 0.0]), 0.0);
    for h2 in [
        Halfspace::le(v([0.0, 1.0, 0.0]), 0.0),
        Halfspace::ge(v([0.0, 0.0, 2.0]), -1.0),
    ] {
        let r = project_two_halfspaces(&v([1.0, 0.0, 0.0]), &h1, &h2, &opts).unwrap();
        assert_eq!(r.steps_used, 1);
    }
    assert_eq!(gamma_factor(&v([1.0, 0.0, 0.0]), &v([0.0, 3.0, -1.0])), 1.0);
    assert_eq!(gamma_factor(&v([1.0, 1.0]), &v([-2.0, -2.0])), 0.0);
}

#[test]
fn two_halfspaces_preconditions() {
    let h1 = Halfspace::le(v([1.0, 0.0]), 0.0);
    let h2 = Halfspace::le(v([0.0, 1.0]), 0.0);
    let opts = TwoStepOptions::default();
    // x inside h1
    assert!(matches!(
        project_two_halfspaces(&v([-1.0, -1.0]), &h1, &h2, &opts),
        Err(GeometryError::Precondition(_))
    ));
    // x outside h2
    assert!(matches!(
        project_two_halfspaces(&v([1.0, 1.0]), &h1, &h2, &opts),
        Err(GeometryError::Precondition(_))
    ));
}

#[test]
fn two_halfspaces_near_parallel() {
    let eps = 1e-10;
    let h1 = Halfspace::le(v([1.0, 0.0]), 0.0);
    let h2 = Halfspace::ge(v([1.0, eps]), -1.0);
    let opts = TwoStepOptions::default();
    // <u1,x> = 1 > 0; <u2,x> = 1 - eps*... inside h2 (>= -1). After step one,
    // x1 = (0, y); need <u2,x1> = eps*y < -1 => y < -1/eps.
    let x = v([1.0, -2.0 / eps]);
    match project_two_halfspaces(&x, &h1, &h2, &opts) {
        Err(GeometryError::NearParallel { gamma, gamma_min }) => {
            assert!(gamma < gamma_min);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn stripe_intersection_examples() {
    let x = v([3.0, -4.0]);
    let s1 = Stripe::new(v([1.0, 0.0]), 0.0, 1.0).unwrap();
    let s2 = Stripe::new(v([0.0, 1.0]), 0.0, 2.0).unwrap();
    let p = project_stripe_intersection(&x, &[s1.clone(), s2.clone()], DEFAULT_TOL_FEAS).unwrap();
    assert_close(&p.point, &v([1.0, -2.0]), 1e-15);
    assert_eq!(p.coefficients, vec![2.0, -2.0]);

    let single =
        project_stripe_intersection(&x, std::slice::from_ref(&s1), DEFAULT_TOL_FEAS).unwrap();
    assert_eq!(single.point, project_stripe(&x, &s1).unwrap());

    let inside = project_stripe_intersection(&v([0.0, 0.0]), &[s1, s2], DEFAULT_TOL_FEAS).unwrap();
    assert_eq!(inside.point, v([0.0, 0.0]));
    assert!(inside.active().is_empty());
}

#[test]
fn stripe_intersection_with_zero_width_matches_hyperplanes() {
    let x = v([1.0, 1.0]);
    let s1 = Stripe::new(v([1.0, 0.0]), 2.0, 0.0).unwrap();
    let s2 = Stripe::new(v([0.0, 1.0]), 0.0, 0.0).unwrap();
    let p = project_stripe_intersection(&x, &[s1, s2], DEFAULT_TOL_FEAS).unwrap();
    assert_close(&p.point, &v([2.0, 0.0]), 1e-15);
    assert_eq!(p.coefficients, vec![-1.0, 1.0]);
}

fn vec_strategy(dim: usize) -> impl Strategy<Value = RealVector> {
    prop::collection::vec(-3.0f64..3.0, dim).prop_map(RealVector::from)
}

fn dir_strategy(dim: usize) -> impl Strategy<Value = RealVector> {
    vec_strategy(dim).prop_filter("nonzero", |u| u.norm() > 1e-2)
}

fn stripe_strategy(dim: usize) -> impl Strategy<Value = Stripe> {
    (dir_strategy(dim), -2.0f64..2.0, 0.0f64..1.0)
        .prop_map(|(u, alpha, xi)| Stripe::new(u, alpha, xi).unwrap())
}

/// Stripes all containing `z`, so the intersection is nonempty.
fn consistent_stripes(
    dim: usize,
    count: usize,
) -> impl Strategy<Value = (RealVector, Vec<Stripe>)> {
    (
        vec_strategy(dim),
        prop::collection::vec((dir_strategy(dim), -1.0f64..1.0, 0.0f64..1.0), count),
    )
        .prop_map(|(z, raw)| {
            let stripes = raw
                .into_iter()
                .map(|(u, pos, xi)| {
                    let alpha = u.dot(&z) - pos * xi;
                    Stripe::new(u, alpha, xi).unwrap()
                })
                .collect();
            (z, stripes)
        })
}

proptest! {
    #[test]
    fn stripe_projection_is_feasible_idempotent_and_descends(
        (x, s, z_pos, z_dir) in (2usize..8).prop_flat_map(|d| (
            vec_strategy(d), stripe_strategy(d), -1.0f64..1.0, vec_strategy(d)))
    ) {
        let p = project_stripe(&x, &s).unwrap();
        prop_assert!(s.contains(&p, DEFAULT_TOL_FEAS));
        let pp = project_stripe(&p, &s).unwrap();
        prop_assert!(pp.distance(&p) <= 1e-12 * (1.0 + p.norm()));
        // A point of the stripe: move z_dir onto the plane at offset z_pos*xi.
        let z = project_hyperplane(&z_dir, &s.u, s.alpha + z_pos * s.xi).unwrap();
        let lhs = z.sub(&p).norm_squared();
        let rhs = z.sub(&x).norm_squared() - p.sub(&x).norm_squared();
        prop_assert!(lhs <= rhs + 1e-9 * (1.0 + z.sub(&x).norm_squared()));
    }

    #[test]
    fn two_halfspace_descent_holds(
        (x, u1, u2, a1_gap, a2_gap, zs) in (2usize..6).prop_flat_map(|d| (
            vec_strategy(d), dir_strategy(d), dir_strategy(d), 0.01f64..3.0, 0.0f64..3.0,
            prop::collection::vec(vec_strategy(d), 20)))
    ) {
        // x violates h1 by a1_gap and satisfies h2 with slack a2_gap.
        let h1 = Halfspace::le(u1.clone(), u1.dot(&x) - a1_gap);
        let h2 = Halfspace::le(u2.clone(), u2.dot(&x) + a2_gap);
        let r = match project_two_halfspaces(&x, &h1, &h2, &TwoStepOptions::default()) {
            Ok(r) => r,
            Err(GeometryError::NearParallel { .. }) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(format!("{e}"))),
        };
        prop_assert!(h1.contains(&r.point, 1e-9) && h2.contains(&r.point, 1e-9));
        prop_assert_eq!(r.gamma.is_some(), r.steps_used == 2);
        if let Some(g) = r.gamma {
            prop_assert!(g > 0.0 && g <= 1.0);
        }
        prop_assert!(r.descent_terms.iter().all(|d| *d >= 0.0));
        let total = r.descent();
        for w in &zs {
            // Push w into h1 ∩ h2 with the exact projection; it is a feasible z.
            let z = match project_stripe_intersection(
                w,
                &[
                    Stripe::new(u1.clone(), h1.alpha - 50.0, 50.0).unwrap(),
                    Stripe::new(u2.clone(), h2.alpha - 50.0, 50.0).unwrap(),
                ],
                1e-12,
            ) {
                Ok(p) => p.point,
                Err(_) => continue,
            };
            if !(h1.contains(&z, 0.0) && h2.contains(&z, 0.0)) {
                continue;
            }
            let lhs = z.sub(&r.point).norm_squared();
            let rhs = z.sub(&x).norm_squared() - total;
            prop_assert!(lhs <= rhs + 1e-9 * (1.0 + z.sub(&x).norm_squared()), "{} > {}", lhs, rhs);
        }
    }

    #[test]
    fn stripe_intersection_is_feasible_and_idempotent(
        (_z, stripes, x) in (2usize..7, 1usize..5).prop_flat_map(|(d, n)| (
            consistent_stripes(d, n), vec_strategy(d)).prop_map(|((z, s), x)| (z, s, x)))
    ) {
        let p = project_stripe_intersection(&x, &stripes, DEFAULT_TOL_FEAS).unwrap();
        for s in &stripes {
            prop_assert!(s.contains(&p.point, 1e-8));
        }
        let again = project_stripe_intersection(&p.point, &stripes, DEFAULT_TOL_FEAS).unwrap();
        prop_assert!(again.point.distance(&p.point) <= 1e-9 * (1.0 + p.point.norm()));
    }

    #[test]
    fn stripe_intersection_matches_two_step_rule(
        (x, u1, u2, a1_gap, xi1, xi2, pos2) in (2usize..6).prop_flat_map(|d| (
            vec_strategy(d), dir_strategy(d), dir_strategy(d), 0.01f64..2.0,
            0.0f64..1.0, 0.0f64..1.0, -1.0f64..1.0))
    ) {
        // Current stripe H1 with x above its upper bound, previous stripe H2
        // containing x: the setting of the two-direction iteration.
        let s1 = Stripe::new(u1.clone(), u1.dot(&x) - a1_gap - xi1, xi1).unwrap();
        let s2 = Stripe::new(u2.clone(), u2.dot(&x) - pos2 * xi2, xi2).unwrap();
        let x1 = project_hyperplane(&x, &s1.u, s1.alpha + s1.xi).unwrap();
        let h2 = if s2.offset(&x1) > s2.xi { s2.upper() } else { s2.lower() };
        let r = match project_two_halfspaces(&x, &s1.upper(), &h2, &TwoStepOptions::default()) {
            Ok(r) => r,
            Err(GeometryError::NearParallel { .. }) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(format!("{e}"))),
        };
        let exact = project_stripe_intersection(&x, &[s1, s2], DEFAULT_TOL_FEAS).unwrap();
        let scale = 1.0 + x.norm();
        prop_assert!(r.point.distance(&exact.point) <= 1e-8 * scale,
            "{:?} vs {:?}", r.point, exact.point);
    }
}
