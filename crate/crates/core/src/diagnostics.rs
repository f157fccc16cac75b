//! Finite-window surrogates for asymptotic centers, weak convergence,
//! Fejér monotonicity and weak lower semicontinuity. `limsup` and `liminf`
//! over a sequence become `max` and `min` over a window of its tail.

use rand::Rng;
use serde::Serialize;

use crate::certificate::{CertificateReport, Verdict};
use crate::error::{Error, Result};
use crate::functionals::Functional;
use crate::geometry::{ConvexSet, Point, Space};
use crate::par::{self, Execution};
use crate::ppa::Trace;
use crate::sampling;

/// Default window length for tail statistics.
pub const DEFAULT_WINDOW: usize = 50;
pub const WEAK_TOLERANCE: f64 = 1e-3;
const LSC_TOLERANCE: f64 = 1e-6;
const FEJER_TOLERANCE: f64 = 1e-9;
const GOLDEN: f64 = 0.618_033_988_749_894_9;

#[derive(Clone, Debug)]
pub struct SequenceWindow {
    points: Vec<Point>,
    origin_trace_id: String,
}

impl SequenceWindow {
    pub fn new(points: Vec<Point>, origin_trace_id: impl Into<String>) -> Result<SequenceWindow> {
        let Some(first) = points.first() else {
            return Err(Error::validation("window is empty"));
        };
        if points.iter().any(|p| p.space_id() != first.space_id()) {
            return Err(Error::domain("window points come from different spaces"));
        }
        Ok(SequenceWindow {
            points,
            origin_trace_id: origin_trace_id.into(),
        })
    }

    /// The last `len` iterates of a trace.
    pub fn tail(trace: &Trace, len: usize, origin_trace_id: impl Into<String>) -> Result<SequenceWindow> {
        let n = trace.iterates.len();
        SequenceWindow::new(trace.iterates[n.saturating_sub(len)..].to_vec(), origin_trace_id)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn origin_trace_id(&self) -> &str {
        &self.origin_trace_id
    }
}

/// Candidate budget and optional restriction for [`asymptotic_center`].
#[derive(Clone, Debug)]
pub struct CenterSearch {
    pub budget: usize,
    pub seed: u64,
    /// Candidates are projected onto this set when present.
    pub within: Option<ConvexSet>,
}

impl Default for CenterSearch {
    fn default() -> Self {
        CenterSearch { budget: 200, seed: 0, within: None }
    }
}

fn radius(space: &Space, window: &SequenceWindow, y: &Point) -> f64 {
    window.points.iter().map(|p| space.dist(p, y)).fold(0.0, f64::max)
}

/// Minimizes `t -> g(t)` on `[0, 1]` for convex `g`.
fn golden_unit(mut g: impl FnMut(f64) -> f64) -> (f64, f64) {
    let (mut a, mut b) = (0.0f64, 1.0f64);
    let mut x1 = b - GOLDEN * (b - a);
    let mut x2 = a + GOLDEN * (b - a);
    let (mut f1, mut f2) = (g(x1), g(x2));
    for _ in 0..80 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLDEN * (b - a);
            f1 = g(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN * (b - a);
            f2 = g(x2);
        }
    }
    let ends = [(0.0, g(0.0)), (1.0, g(1.0)), (x1, f1), (x2, f2)];
    ends.into_iter().fold((0.0, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best })
}

/// Finite-window asymptotic center: the minimizer of `y -> max_p d(p, y)`
/// over sampled candidates, refined by line searches along geodesics toward
/// the farthest window points.
pub fn asymptotic_center(space: &Space, window: &SequenceWindow, search: &CenterSearch) -> Result<Point> {
    if window.is_empty() {
        return Err(Error::validation("window is empty"));
    }
    for p in &window.points {
        space.check(p)?;
    }
    if let Some(set) = &search.within {
        space.validate_set(set)?;
    }
    let restrict = |p: Point| -> Result<Point> {
        match &search.within {
            Some(set) => space.project(set, &p),
            None => Ok(p),
        }
    };
    let pts = &window.points;
    let mut candidates: Vec<Point> = pts.iter().take(search.budget.max(1)).cloned().collect();
    // midpoints of the two most distant points from the first one
    let far = |from: &Point| -> usize {
        (0..pts.len())
            .max_by(|&i, &j| space.dist(from, &pts[i]).total_cmp(&space.dist(from, &pts[j])))
            .expect("nonempty")
    };
    let i = far(&pts[0]);
    let j = far(&pts[i]);
    candidates.push(space.geo(&pts[i], &pts[j], 0.5));
    let mut rng = sampling::rng(search.seed, 0);
    while candidates.len() < search.budget {
        let a = &pts[rng.gen_range(0..pts.len())];
        let b = &pts[rng.gen_range(0..pts.len())];
        candidates.push(space.geo(a, b, rng.gen_range(0.0..=1.0)));
    }
    let mut best: Option<(f64, Point)> = None;
    for c in candidates {
        let c = restrict(c)?;
        let r = radius(space, window, &c);
        if best.as_ref().is_none_or(|(br, _)| r < *br) {
            best = Some((r, c));
        }
    }
    let (mut r, mut y) = best.expect("at least one candidate");
    for _ in 0..200 {
        let k = far(&y);
        let target = pts[k].clone();
        let mut line = |t: f64| match restrict(space.geo(&y, &target, t)) {
            Ok(p) => radius(space, window, &p),
            Err(_) => f64::INFINITY,
        };
        let (t, rt) = golden_unit(&mut line);
        if rt < r - 1e-15 * r.max(1e-300) {
            y = restrict(space.geo(&y, &target, t))?;
            r = radius(space, window, &y);
        } else {
            break;
        }
    }
    Ok(y)
}

#[derive(Clone, Debug, Serialize)]
pub struct WeakConvergenceReport {
    #[serde(skip)]
    pub candidate_limit: Point,
    /// Per probe geodesic, the tail maximum of `d(x, P_γ(x_n))`.
    pub gaps: Vec<f64>,
    pub max_gap: f64,
    pub tolerance: f64,
    pub window_len: usize,
    pub verdict: Verdict,
}

impl WeakConvergenceReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// A geodesic segment through `x`, with `x` inside it when possible.
fn probe_geodesic<R: Rng>(space: &Space, rng: &mut R, x: &Point) -> (Point, Point) {
    if space.has_tangent() {
        loop {
            let z = sampling::near(space, rng, x, 2.0);
            if space.dist(x, &z) < 1e-3 {
                continue;
            }
            let s: f64 = rng.gen_range(0.1..0.9);
            let back = space.log_map(x, &z).expect("manifold").scale(-s / (1.0 - s));
            return (space.exp_map(x, &back), z);
        }
    }
    // trees: look for a pair of points whose geodesic passes through x
    let mut fallback = None;
    for _ in 0..32 {
        let a = sampling::point(space, rng, 1.0);
        let b = sampling::point(space, rng, 1.0);
        let (da, db, ab) = (space.dist(&a, x), space.dist(x, &b), space.dist(&a, &b));
        if da > 1e-6 && db > 1e-6 && (da + db - ab).abs() <= 1e-12 * ab.max(1.0) {
            return (a, b);
        }
        if fallback.is_none() && da > 1e-6 {
            fallback = Some(a);
        }
    }
    let z = fallback.unwrap_or_else(|| space.vertex_point(0).expect("tree vertex"));
    (x.clone(), z)
}

/// Projection-gap test for weak convergence of the window to `x`: along
/// random geodesics `γ` through `x`, the projections of the window points
/// onto `γ` must approach `x`.
pub fn weak_convergence_check(
    space: &Space,
    window: &SequenceWindow,
    x: &Point,
    geodesic_budget: usize,
    seed: u64,
    execution: Execution,
) -> Result<WeakConvergenceReport> {
    if geodesic_budget == 0 {
        return Err(Error::validation("geodesic budget must be at least 1"));
    }
    space.check(x)?;
    for p in &window.points {
        space.check(p)?;
    }
    let gaps: Vec<f64> = par::map_indexed(execution, geodesic_budget, |i| {
        let mut rng = sampling::rng(seed, i as u64);
        let (a, b) = probe_geodesic(space, &mut rng, x);
        let segment = ConvexSet::Segment(a, b);
        window
            .points
            .iter()
            .map(|p| space.dist(x, &space.project(&segment, p).expect("segment in space")))
            .fold(0.0, f64::max)
    });
    let max_gap = gaps.iter().copied().fold(0.0, f64::max);
    Ok(WeakConvergenceReport {
        candidate_limit: x.clone(),
        gaps,
        max_gap,
        tolerance: WEAK_TOLERANCE,
        window_len: window.len(),
        verdict: if max_gap <= WEAK_TOLERANCE { Verdict::Pass } else { Verdict::Fail },
    })
}

/// Fejér analysis with respect to `C`: distances to a fixed point of `C`
/// stay below their initial value, and `d_C(x_{n+1}) <= d_C(x_n)`.
pub fn fejer_analysis(space: &Space, window: &SequenceWindow, set: &ConvexSet) -> Result<CertificateReport> {
    let c = space.set_representative(set)?;
    let mut d_c = Vec::with_capacity(window.len());
    for p in &window.points {
        let proj = space.project(set, p)?;
        d_c.push(space.dist(p, &proj));
    }
    let d0 = space.dist(&window.points[0], &c);
    let residuals = (1..window.len()).map(|n| {
        let bounded = space.dist(&window.points[n], &c) - d0;
        let monotone = d_c[n] - d_c[n - 1];
        (n, bounded.max(monotone))
    });
    Ok(CertificateReport::from_residuals("fejer_analysis", FEJER_TOLERANCE, residuals))
}

/// `min_n f(x_n) >= f(x) - 1e-6`, the window form of `liminf f(x_n) >= f(x)`.
pub fn weak_lsc_probe(f: &Functional, window: &SequenceWindow, x: &Point) -> Result<CertificateReport> {
    let fx = f.evaluate(x)?;
    let mut residuals = Vec::with_capacity(window.len());
    for (n, p) in window.points.iter().enumerate() {
        residuals.push((n, fx - f.evaluate(p)?));
    }
    Ok(CertificateReport::from_residuals("weak_lsc", LSC_TOLERANCE, residuals))
}
