//! Randomized checks of the metric, geodesic, projection and convexity
//! invariants of a backend.
//!
//! Sample `i` draws from its own generator stream, so a report depends only
//! on the seed and budget, not on the execution mode.

use serde::Serialize;

use crate::certificate::CertificateReport;
use crate::error::{Error, Result};
use crate::functionals::{Functional, Modulus};
use crate::geometry::{ConvexSet, Point, Space, SpaceKind};
use crate::par::{self, Execution};
use crate::sampling;

const SCALE: f64 = 2.0;
const METRIC_TOL: f64 = 1e-10;
const TRIANGLE_TOL: f64 = 1e-9;
const GEODESIC_TOL: f64 = 1e-8;
const CAT0_TOL: f64 = 1e-9;
const FLAT_TOL: f64 = 1e-10;
const PROJECTION_TOL: f64 = 1e-8;
const CONVEXITY_TOL: f64 = 1e-8;
const BUSEMANN_TOL: f64 = 1e-5;
/// Ray parameter for the Busemann limit check. Hyperbolic coordinates grow
/// like `e^t`, so that backend uses a shorter ray; the remaining error is
/// of order `e^(-2t)`.
const BUSEMANN_T: f64 = 1e6;
const BUSEMANN_T_HYPERBOLIC: f64 = 30.0;

#[derive(Clone, Copy, Debug)]
pub struct VerifyOptions {
    pub budget: usize,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            budget: 1000,
            seed: 0,
            execution: Execution::Parallel,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub space: String,
    pub dimension: usize,
    pub budget: usize,
    pub seed: u64,
    pub checks: Vec<CertificateReport>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed())
    }

    pub fn check(&self, name: &str) -> Option<&CertificateReport> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Worst negative part of the CAT(0) inequality over `budget` random
/// triples and parameters.
pub fn cat0_sweep(space: &Space, budget: usize, seed: u64, exec: Execution) -> CertificateReport {
    let residuals = par::map_indexed(exec, budget, |i| {
        let mut rng = sampling::rng(seed, i as u64);
        let x = sampling::point(space, &mut rng, SCALE);
        let a = sampling::point(space, &mut rng, SCALE);
        let b = sampling::point(space, &mut rng, SCALE);
        let t = rand::Rng::gen_range(&mut rng, 0.0..=1.0);
        -space.cat0_residual(&x, &a, &b, t).expect("sampled points belong to the space")
    });
    CertificateReport::from_residuals("cat0_inequality", CAT0_TOL, residuals.into_iter().enumerate())
}

struct Fixture {
    sets: Vec<(&'static str, ConvexSet, Point)>,
    functionals: Vec<(&'static str, Functional)>,
}

fn fixture(space: &Space, seed: u64) -> Result<Fixture> {
    let mut rng = sampling::rng(seed, u64::MAX);
    let c = sampling::point(space, &mut rng, 1.0);
    let a = sampling::point(space, &mut rng, SCALE);
    let b = sampling::point(space, &mut rng, SCALE);
    let ball = ConvexSet::Ball { center: c.clone(), radius: 1.0 };
    let segment = ConvexSet::Segment(a.clone(), b.clone());
    let mut functionals = vec![
        ("squared_distance", Functional::squared_distance(space, a.clone(), 1.5)?),
        ("distance", Functional::distance(space, b.clone(), 0.7)?),
        ("distance_to_set", Functional::distance_to_set(space, ball.clone())?),
        ("displacement", Functional::displacement(space, sampling::isometry(space, &mut rng))?),
    ];
    if !matches!(space.kind(), SpaceKind::Spd { .. }) {
        let dir = sampling::direction(space, &mut rng, &c);
        functionals.push(("busemann", Functional::busemann(space, space.ray(&c, dir)?)?));
    }
    let sum = Functional::weighted_sum(
        space,
        functionals.iter().map(|(_, f)| (0.5, f.clone())).collect(),
    )?;
    functionals.push(("weighted_sum", sum));
    Ok(Fixture {
        sets: vec![("ball", ball, c), ("segment", segment, a)],
        functionals,
    })
}

type Sample = Vec<(usize, f64)>;

/// Runs every invariant on `budget` random samples. Points in `given` are
/// used as the first sample points.
pub fn verify_space(space: &Space, given: &[Point], opts: &VerifyOptions) -> Result<VerifyReport> {
    if opts.budget == 0 {
        return Err(Error::validation("budget must be at least 1"));
    }
    for p in given {
        space.check(p)?;
    }
    let fx = fixture(space, opts.seed)?;
    let flat = matches!(space.kind(), SpaceKind::Euclidean { .. });

    let mut names: Vec<(String, f64)> = vec![
        ("metric_nonnegativity".into(), METRIC_TOL),
        ("metric_symmetry".into(), METRIC_TOL),
        ("triangle_inequality".into(), TRIANGLE_TOL),
        ("geodesic_parameterization".into(), GEODESIC_TOL),
        ("cat0_inequality".into(), CAT0_TOL),
    ];
    if flat {
        names.push(("cat0_flat".into(), FLAT_TOL));
    }
    for (set, ..) in &fx.sets {
        for check in ["membership", "idempotent", "nonexpansive", "segment", "obtuse_angle"] {
            names.push((format!("projection_{check}_{set}"), PROJECTION_TOL));
        }
    }
    for (name, f) in &fx.functionals {
        names.push((format!("convexity_{name}"), CONVEXITY_TOL));
        if !f.uniform_convexity_modulus().is_none() {
            names.push((format!("uniform_convexity_{name}"), CONVEXITY_TOL));
        }
        if f.lipschitz().is_some() {
            names.push((format!("lipschitz_{name}"), CONVEXITY_TOL));
        }
    }
    let busemann = fx.functionals.iter().find(|(n, _)| *n == "busemann").map(|(_, f)| f);
    if busemann.is_some() {
        names.push(("busemann_limit".into(), BUSEMANN_TOL));
    }

    let samples: Vec<Result<Sample>> = par::map_indexed(opts.execution, opts.budget, |i| {
        let mut rng = sampling::rng(opts.seed, i as u64);
        let p = match given.get(i) {
            Some(p) => p.clone(),
            None => sampling::point(space, &mut rng, SCALE),
        };
        let q = sampling::point(space, &mut rng, SCALE);
        let r = sampling::point(space, &mut rng, SCALE);
        let s1: f64 = rand::Rng::gen_range(&mut rng, 0.0..=1.0);
        let s2: f64 = rand::Rng::gen_range(&mut rng, 0.0..=1.0);
        let d = |x: &Point, y: &Point| space.distance(x, y);
        let mut out = Vec::with_capacity(names.len());
        let mut k = 0;
        let mut push = |out: &mut Sample, v: f64| {
            out.push((k, v));
            k += 1;
        };

        let pq = d(&p, &q)?;
        push(&mut out, (-pq).max(d(&p, &p)?));
        push(&mut out, (pq - d(&q, &p)?).abs());
        push(&mut out, d(&p, &r)? - pq - d(&q, &r)?);
        let g1 = space.geodesic_point(&p, &q, s1)?;
        let g2 = space.geodesic_point(&p, &q, s2)?;
        let ends = d(&space.geodesic_point(&p, &q, 0.0)?, &p)?.max(d(&space.geodesic_point(&p, &q, 1.0)?, &q)?);
        push(&mut out, ((d(&g1, &g2)? - (s1 - s2).abs() * pq).abs()).max(ends));
        let cat0 = space.cat0_residual(&r, &p, &q, s1)?;
        push(&mut out, -cat0);
        if flat {
            push(&mut out, cat0.abs());
        }

        for (_, set, anchor) in &fx.sets {
            let px = space.project(set, &p)?;
            let pq_proj = space.project(set, &q)?;
            push(&mut out, if space.contains(set, &px)? { 0.0 } else { 1.0 });
            push(&mut out, d(&space.project(set, &px)?, &px)?);
            push(&mut out, d(&px, &pq_proj)? - pq);
            let y = space.geodesic_point(&p, &px, s1)?;
            push(&mut out, d(&space.project(set, &y)?, &px)?);
            // z ranges over the set: a point on [anchor, P q] lies in it
            let z = space.geodesic_point(anchor, &pq_proj, s2)?;
            let (a, b, c) = (d(&p, &px)?, d(&px, &z)?, d(&p, &z)?);
            push(&mut out, a * a + b * b - c * c);
        }

        for (_, f) in &fx.functionals {
            push(&mut out, -f.convexity_residual(&p, &q, s1)?);
            let modulus = f.uniform_convexity_modulus();
            if let Modulus::Quadratic(_) | Modulus::Custom(_) = modulus {
                let phi = |r: f64| modulus.eval(r).unwrap_or(0.0);
                push(&mut out, -f.uniform_convexity_residual(&p, &q, s1, &phi)?);
            }
            if let Some(l) = f.lipschitz() {
                push(&mut out, (f.evaluate(&p)? - f.evaluate(&q)?).abs() - l * pq);
            }
        }

        if let Some(b) = busemann {
            if let crate::functionals::FunctionalKind::Busemann(ray) = b.kind() {
                let t = match space.kind() {
                    SpaceKind::Hyperbolic { .. } => BUSEMANN_T_HYPERBOLIC,
                    SpaceKind::MetricTree(tree) => match ray.direction() {
                        crate::geometry::RayDirection::TreeEnd(leaf) => {
                            tree.distance_to_vertex(&ray.origin().locus().expect("tree point"), *leaf)
                        }
                        _ => unreachable!("tree rays end at leaves"),
                    },
                    _ => BUSEMANN_T,
                };
                let far = space.ray_point(ray, t)?;
                push(&mut out, (b.evaluate(&p)? - (d(&p, &far)? - t)).abs());
            }
        }
        debug_assert_eq!(k, names.len());
        Ok(out)
    });

    let mut per_check: Vec<Vec<(usize, f64)>> = vec![Vec::with_capacity(opts.budget); names.len()];
    for (i, sample) in samples.into_iter().enumerate() {
        for (k, v) in sample? {
            per_check[k].push((i, v));
        }
    }
    let checks = names
        .iter()
        .zip(per_check)
        .map(|((name, tol), rs)| CertificateReport::from_residuals(name, *tol, rs))
        .collect();
    Ok(VerifyReport {
        space: space.name().to_string(),
        dimension: space.dimension(),
        budget: opts.budget,
        seed: opts.seed,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spaces() -> Vec<Space> {
        let mut rng = sampling::rng(5, 0);
        vec![
            Space::euclidean(3).unwrap(),
            Space::hyperbolic(2).unwrap(),
            Space::spd(3).unwrap(),
            Space::tree(sampling::tree(&mut rng, 9)),
        ]
    }

    #[test]
    fn all_backends_pass() {
        for space in spaces() {
            let report = verify_space(&space, &[], &VerifyOptions { budget: 200, seed: 3, ..Default::default() }).unwrap();
            for c in &report.checks {
                assert!(c.passed(), "{}: {c:?}", space.name());
            }
        }
    }

    #[test]
    fn execution_mode_does_not_change_the_report() {
        let space = Space::hyperbolic(3).unwrap();
        let run = |execution| {
            let opts = VerifyOptions { budget: 64, seed: 11, execution };
            serde_json::to_string(&verify_space(&space, &[], &opts).unwrap()).unwrap()
        };
        assert_eq!(run(Execution::Parallel), run(Execution::Sequential));
    }

    #[test]
    fn sweep_matches_suite_entry() {
        let space = Space::euclidean(2).unwrap();
        let sweep = cat0_sweep(&space, 100, 1, Execution::Sequential);
        assert!(sweep.passed());
        assert_eq!(sweep.checked, 100);
    }
}
