//! Randomized properties over all four backends.

use hadamard_prox::descriptor::PointSpec;
use hadamard_prox::prelude::*;
use hadamard_prox::sampling;
use proptest::prelude::*;
use rand::Rng;

fn space(kind: u8, seed: u64) -> Space {
    match kind % 4 {
        0 => Space::euclidean(1 + (seed % 4) as usize).unwrap(),
        1 => Space::hyperbolic(1 + (seed % 3) as usize).unwrap(),
        2 => Space::spd(1 + (seed % 3) as usize).unwrap(),
        _ => Space::tree(sampling::tree(&mut sampling::rng(seed, 99), 2 + (seed % 9) as usize)),
    }
}

fn points(s: &Space, seed: u64, n: usize) -> Vec<Point> {
    let mut rng = sampling::rng(seed, 0);
    (0..n).map(|_| sampling::point(s, &mut rng, 2.0)).collect()
}

fn config() -> ProptestConfig {
    ProptestConfig { cases: 96, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn euclidean_cat0_is_an_equality(
        x in prop::collection::vec(-5.0..5.0f64, 3),
        a in prop::collection::vec(-5.0..5.0f64, 3),
        b in prop::collection::vec(-5.0..5.0f64, 3),
        t in 0.0..=1.0f64,
    ) {
        let s = Space::euclidean(3).unwrap();
        let r = s.cat0_residual(&s.point(x).unwrap(), &s.point(a).unwrap(), &s.point(b).unwrap(), t).unwrap();
        prop_assert!(r.abs() <= 1e-10, "{r}");
    }

    #[test]
    fn metric_geodesic_and_cat0(kind in 0u8..4, seed in any::<u64>(), s1 in 0.0..=1.0f64, s2 in 0.0..=1.0f64) {
        let s = space(kind, seed);
        let p = points(&s, seed, 3);
        let (x, a, b) = (&p[0], &p[1], &p[2]);
        let d = |u: &Point, v: &Point| s.distance(u, v).unwrap();
        prop_assert!(d(a, b) >= 0.0);
        prop_assert!(d(a, a) <= 1e-10);
        prop_assert!((d(a, b) - d(b, a)).abs() <= 1e-10);
        prop_assert!(d(x, b) <= d(x, a) + d(a, b) + 1e-9);
        let g1 = s.geodesic_point(a, b, s1).unwrap();
        let g2 = s.geodesic_point(a, b, s2).unwrap();
        prop_assert!((d(&g1, &g2) - (s1 - s2).abs() * d(a, b)).abs() <= 1e-8);
        prop_assert!(s.cat0_residual(x, a, b, s1).unwrap() >= -1e-8);
    }

    #[test]
    fn projections(kind in 0u8..4, seed in any::<u64>(), t in 0.0..=1.0f64, radius in 0.1..2.0f64) {
        let s = space(kind, seed);
        let p = points(&s, seed, 4);
        let d = |u: &Point, v: &Point| s.distance(u, v).unwrap();
        for set in [
            ConvexSet::Ball { center: p[0].clone(), radius },
            ConvexSet::Segment(p[0].clone(), p[1].clone()),
        ] {
            let (x, y) = (&p[2], &p[3]);
            let px = s.project(&set, x).unwrap();
            let py = s.project(&set, y).unwrap();
            prop_assert!(s.contains(&set, &px).unwrap());
            prop_assert!(d(&s.project(&set, &px).unwrap(), &px) <= 1e-8);
            prop_assert!(d(&px, &py) <= d(x, y) + 1e-9);
            let between = s.geodesic_point(x, &px, t).unwrap();
            prop_assert!(d(&s.project(&set, &between).unwrap(), &px) <= 1e-8);
            let z = s.geodesic_point(&p[0], &py, t).unwrap();
            prop_assert!(d(x, &z).powi(2) >= d(x, &px).powi(2) + d(&px, &z).powi(2) - 1e-8);
        }
    }

    #[test]
    fn functionals_are_convex_and_lipschitz(kind in 0u8..4, seed in any::<u64>(), t in 0.0..=1.0f64) {
        let s = space(kind, seed);
        let p = points(&s, seed, 4);
        let mut rng = sampling::rng(seed, 1);
        let mut fs = vec![
            Functional::squared_distance(&s, p[0].clone(), 0.5 + rng.gen::<f64>()).unwrap(),
            Functional::distance(&s, p[1].clone(), 1.0).unwrap(),
            Functional::distance_to_set(&s, ConvexSet::Segment(p[0].clone(), p[1].clone())).unwrap(),
            Functional::displacement(&s, sampling::isometry(&s, &mut rng)).unwrap(),
        ];
        if !matches!(s.kind(), SpaceKind::Spd { .. }) {
            let dir = sampling::direction(&s, &mut rng, &p[1]);
            fs.push(Functional::busemann(&s, s.ray(&p[1], dir).unwrap()).unwrap());
        }
        let (a, b) = (&p[2], &p[3]);
        let dab = s.distance(a, b).unwrap();
        for f in &fs {
            prop_assert!(f.convexity_residual(a, b, t).unwrap() >= -1e-8, "{}", f.label());
            if let Some(l) = f.lipschitz() {
                let gap = (f.evaluate(a).unwrap() - f.evaluate(b).unwrap()).abs();
                prop_assert!(gap <= l * dab + 1e-8, "{}", f.label());
            }
            if let Modulus::Quadratic(c) = f.uniform_convexity_modulus() {
                let r = f.uniform_convexity_residual(a, b, t, &|r| c * r * r).unwrap();
                prop_assert!(r >= -1e-8);
            }
        }
    }

    #[test]
    fn resolvent_properties(kind in 0u8..4, seed in any::<u64>(), lambda in 0.01..5.0f64) {
        let s = space(kind, seed);
        let p = points(&s, seed, 5);
        let f = Functional::weighted_sum(&s, vec![
            (1.0, Functional::squared_distance(&s, p[0].clone(), 1.0).unwrap()),
            (0.5, Functional::distance(&s, p[1].clone(), 1.0).unwrap()),
        ]).unwrap();
        let opts = ResolventOptions::default();
        let x = &p[2];
        prop_assert_eq!(&resolve(&f, x, 0.0, &opts).unwrap().point, x);
        let r = resolve(&f, x, lambda, &opts).unwrap();
        let big_f = |y: &Point| f.evaluate(y).unwrap() + s.distance(y, x).unwrap().powi(2) / (2.0 * lambda);
        let fj = big_f(&r.point);
        for probe in [&p[3], &p[4], &p[0], &p[1], x] {
            prop_assert!(fj <= big_f(probe) + 1e-9 * fj.abs().max(1.0), "{fj} vs {}", big_f(probe));
        }
        prop_assert!(f.evaluate(&r.point).unwrap() <= f.evaluate(x).unwrap() + 1e-9);
        let pairs = vec![(p[3].clone(), p[4].clone())];
        prop_assert!(nonexpansiveness_check(&f, &pairs, lambda, &opts).unwrap().passed());
    }

    #[test]
    fn ppa_is_fejer_monotone_and_deterministic(kind in 0u8..4, seed in any::<u64>(), harmonic in any::<bool>()) {
        let s = space(kind, seed);
        let p = points(&s, seed, 2);
        let f = Functional::squared_distance(&s, p[0].clone(), 1.0).unwrap();
        let sched = if harmonic { StepSchedule::harmonic(2.0).unwrap() } else { StepSchedule::constant(0.7).unwrap() };
        let run = || run_ppa(&f, &p[1], &sched, &StopRule::iterations(25), &ResolventOptions::default()).unwrap();
        let t = run();
        prop_assert!(t.values.windows(2).all(|w| w[1] <= w[0] + 1e-9));
        let d0 = s.distance(&p[1], &p[0]).unwrap();
        prop_assert!(t.iterates.iter().all(|x| s.distance(x, &p[0]).unwrap() <= d0 + 1e-9));
        for name in ["fejer", "rate", "estimate", "strong_convergence"] {
            prop_assert!(t.certificate(name).unwrap().passed(), "{}", name);
        }
        prop_assert_eq!(t.csv_string(), run().csv_string());
        prop_assert_eq!(&t.iterates, &run().iterates);
    }

    #[test]
    fn flow_at_zero_is_the_identity(kind in 0u8..4, seed in any::<u64>()) {
        let s = space(kind, seed);
        let p = points(&s, seed, 2);
        let f = Functional::distance(&s, p[0].clone(), 1.0).unwrap();
        prop_assert_eq!(&flow_apply(&f, &p[1], 0.0, &FlowOptions::default()).unwrap().point, &p[1]);
    }

    #[test]
    fn point_descriptors_round_trip(kind in 0u8..4, seed in any::<u64>()) {
        let s = space(kind, seed);
        let p = points(&s, seed, 1).remove(0);
        let spec = PointSpec::from_point(&s, &p);
        let json = serde_json::to_string(&spec).unwrap();
        let back: PointSpec = serde_json::from_str(&json).unwrap();
        prop_assert!(s.distance(&back.build(&s).unwrap(), &p).unwrap() <= 1e-12);
    }
}
