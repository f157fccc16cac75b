use approx::assert_abs_diff_eq;
use hadamard_prox::prelude::*;

fn e2() -> Space {
    Space::euclidean(2).unwrap()
}

fn pt(s: &Space, v: &[f64]) -> Point {
    s.point(v.to_vec()).unwrap()
}

#[test]
fn busemann_matches_truncated_limit() {
    let s = e2();
    let ray = s.ray(&pt(&s, &[0.0, 0.0]), RayDirection::Vector(vec![1.0, 0.0])).unwrap();
    let b = Functional::busemann(&s, ray.clone()).unwrap();
    let x = pt(&s, &[2.0, 1.0]);
    let t = 1e6;
    let truncated = s.distance(&x, &s.ray_point(&ray, t).unwrap()).unwrap() - t;
    assert_abs_diff_eq!(b.evaluate(&x).unwrap(), truncated, epsilon = 1e-5);
    assert_eq!(b.evaluate(&x).unwrap(), -2.0);
}

#[test]
fn hyperbolic_busemann_matches_truncated_limit() {
    let h = Space::hyperbolic(2).unwrap();
    let o = h.lift(&[0.3, -0.2]).unwrap();
    let ray = h.ray(&o, RayDirection::Vector(vec![0.6, 0.8])).unwrap();
    let b = Functional::busemann(&h, ray.clone()).unwrap();
    let x = h.lift(&[-1.0, 0.5]).unwrap();
    let t = 30.0;
    let truncated = h.distance(&x, &h.ray_point(&ray, t).unwrap()).unwrap() - t;
    assert_abs_diff_eq!(b.evaluate(&x).unwrap(), truncated, epsilon = 1e-5);
    assert_abs_diff_eq!(b.evaluate(&o).unwrap(), 0.0, epsilon = 1e-12);
}

#[test]
fn displacement_of_translation_is_constant() {
    let s = e2();
    let f = Functional::displacement(&s, Isometry::translation(vec![3.0, 4.0])).unwrap();
    for v in [[0.0, 0.0], [-7.0, 2.5], [1e3, 1.0]] {
        assert_abs_diff_eq!(f.evaluate(&pt(&s, &v)).unwrap(), 5.0, epsilon = 1e-12);
    }
}

#[test]
fn non_isometries_are_rejected() {
    let s = e2();
    let q = nalgebra::DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
    assert!(matches!(
        Functional::displacement(&s, Isometry::Euclidean { q, b: vec![0.0, 0.0] }),
        Err(Error::Validation(_))
    ));
}

#[test]
fn indicator_is_infinite_off_the_set() {
    let s = e2();
    let ball = ConvexSet::Ball { center: pt(&s, &[0.0, 0.0]), radius: 1.0 };
    let f = Functional::indicator(&s, ball).unwrap();
    assert_eq!(f.evaluate(&pt(&s, &[2.0, 0.0])).unwrap(), f64::INFINITY);
    assert_eq!(f.evaluate(&pt(&s, &[0.5, 0.0])).unwrap(), 0.0);
}

#[test]
fn convexity_residual_examples() {
    let s = e2();
    let (a, b) = (pt(&s, &[0.0, 0.0]), pt(&s, &[2.0, 0.0]));
    // weight 2 makes the functional the plain square d(., 0)^2: 0.5 * 0 + 0.5 * 4 - 1
    let f = Functional::squared_distance(&s, a.clone(), 2.0).unwrap();
    assert_abs_diff_eq!(f.convexity_residual(&a, &b, 0.5).unwrap(), 1.0, epsilon = 1e-15);
    assert_eq!(f.convexity_residual(&a, &b, 0.0).unwrap(), 0.0);
    let half = Functional::squared_distance(&s, a.clone(), 1.0).unwrap();
    assert_abs_diff_eq!(half.convexity_residual(&a, &b, 0.5).unwrap(), 0.5, epsilon = 1e-15);

    let ind = Functional::indicator(&s, ConvexSet::Singleton(a.clone())).unwrap();
    assert_eq!(ind.convexity_residual(&a, &b, 0.5).unwrap(), 0.0);
}

#[test]
fn uniform_convexity_examples() {
    let s = e2();
    let anchor = pt(&s, &[0.5, -0.5]);
    let f = Functional::squared_distance(&s, anchor.clone(), 2.0).unwrap();
    let square = |r: f64| r * r;
    // parallelogram identity: exact equality in the plane
    let pairs = [([1.0, 2.0], [-3.0, 0.5], 0.3), ([0.0, 0.0], [4.0, 4.0], 0.9), ([7.0, -1.0], [2.0, 2.0], 0.5)];
    for (a, b, t) in pairs {
        let r = f.uniform_convexity_residual(&pt(&s, &a), &pt(&s, &b), t, &square).unwrap();
        assert!(r.abs() <= 1e-9, "{r}");
    }
    assert_eq!(f.uniform_convexity_residual(&pt(&s, &[1.0, 1.0]), &anchor, 1.0, &square).unwrap(), 0.0);

    // plain distance along a line through its anchor: (1-t)·1 + t·3 - 2 - t(1-t)·4 at t = 1/2
    let d = Functional::distance(&s, pt(&s, &[0.0, 0.0]), 1.0).unwrap();
    let r = d.uniform_convexity_residual(&pt(&s, &[1.0, 0.0]), &pt(&s, &[3.0, 0.0]), 0.5, &square).unwrap();
    assert_abs_diff_eq!(r, -1.0, epsilon = 1e-15);
}

#[test]
fn minimizing_certificate_examples() {
    let s = e2();
    let m = pt(&s, &[1.0, -1.0]);
    let sq = Functional::squared_distance(&s, m.clone(), 1.0).unwrap();
    let r = sq.is_minimizing_certificate(&m, 500, 1).unwrap();
    assert!(!r.improvement_found && r.heuristic);

    let d = Functional::distance(&s, m.clone(), 1.0).unwrap();
    assert!(d.is_minimizing_certificate(&pt(&s, &[0.0, 0.0]), 500, 1).unwrap().improvement_found);

    // barycenter of weights 1 and 3 at (0,0) and (4,0) is (3,0)
    let sum = Functional::weighted_sum(
        &s,
        vec![
            (1.0, Functional::squared_distance(&s, pt(&s, &[0.0, 0.0]), 1.0).unwrap()),
            (3.0, Functional::squared_distance(&s, pt(&s, &[4.0, 0.0]), 1.0).unwrap()),
        ],
    )
    .unwrap();
    assert!(!sum.is_minimizing_certificate(&pt(&s, &[3.0, 0.0]), 500, 2).unwrap().improvement_found);
    assert!(sq.is_minimizing_certificate(&m, 0, 1).is_err());
}

#[test]
fn metadata_must_agree() {
    let s = e2();
    let m = pt(&s, &[1.0, 0.0]);
    let f = Functional::squared_distance(&s, m.clone(), 1.0).unwrap();
    assert!(f.clone().with_metadata(Some(0.0), Some(m.clone())).is_ok());
    assert!(matches!(f.with_metadata(Some(1.0), Some(m)), Err(Error::Validation(_))));
}

#[test]
fn weights_must_be_positive() {
    let s = e2();
    assert!(Functional::squared_distance(&s, pt(&s, &[0.0, 0.0]), 0.0).is_err());
    assert!(Functional::distance(&s, pt(&s, &[0.0, 0.0]), -1.0).is_err());
    assert!(Functional::distance(&s, pt(&s, &[0.0, 0.0]), f64::NAN).is_err());
}

#[test]
fn spd_busemann_is_not_provided() {
    let s = Space::spd(2).unwrap();
    let o = s.base_point();
    let dir = RayDirection::Matrix(nalgebra::DMatrix::identity(2, 2));
    let ray = s.ray(&o, dir).unwrap();
    assert!(matches!(Functional::busemann(&s, ray), Err(Error::Validation(_))));
}

#[test]
fn lipschitz_constants() {
    let s = e2();
    let o = pt(&s, &[0.0, 0.0]);
    assert_eq!(Functional::distance(&s, o.clone(), 1.0).unwrap().lipschitz(), Some(1.0));
    assert_eq!(Functional::displacement(&s, Isometry::translation(vec![1.0, 0.0])).unwrap().lipschitz(), Some(2.0));
    assert_eq!(Functional::squared_distance(&s, o, 1.0).unwrap().lipschitz(), None);
}
