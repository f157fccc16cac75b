//! Geodesically convex lower semicontinuous functionals.
//!
//! `SquaredDistance { weight: w }` is `(w / 2) d(., a)^2`, so its resolvent
//! moves the fraction `w λ / (1 + w λ)` of the way to the anchor.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{
    hyperbolic, ConvexSet, GeodesicRay, Locus, Payload, Point, RayDirection, Space, SpaceKind,
};
use crate::sampling;

/// Pairs checked when an isometry is constructed.
const ISOMETRY_PROBES: u64 = 32;
const METADATA_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug)]
pub enum FunctionalKind {
    SquaredDistance { anchor: Point, weight: f64 },
    Distance { anchor: Point, weight: f64 },
    DistanceToSet(ConvexSet),
    Busemann(GeodesicRay),
    Displacement(Isometry),
    Indicator(ConvexSet),
    /// Flat: no term is itself a sum.
    WeightedSum(Vec<(f64, Functional)>),
}

#[derive(Clone, Debug)]
pub struct Functional {
    space: Space,
    kind: FunctionalKind,
    known_infimum: Option<f64>,
    known_minimizer: Option<Point>,
}

/// Distance-preserving self-maps, one family per backend.
#[derive(Clone, Debug, PartialEq)]
pub enum Isometry {
    /// `x -> Q x + b` with `Q` orthogonal.
    Euclidean { q: DMatrix<f64>, b: Vec<f64> },
    /// `x -> L x` with `L` preserving the Minkowski form and the upper sheet.
    Hyperbolic { l: DMatrix<f64> },
    /// `X -> G^T X G` with `G` invertible.
    Spd { g: DMatrix<f64> },
    /// Vertex permutation preserving adjacency and edge lengths.
    Tree { permutation: Vec<usize> },
}

/// Modulus `φ` of uniform convexity: `f(γ(t)) <= (1-t) f(a) + t f(b) - t(1-t) φ(d(a, b))`.
#[derive(Clone, Default)]
pub enum Modulus {
    #[default]
    None,
    /// `φ(r) = c r^2`.
    Quadratic(f64),
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Modulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Modulus::None => write!(f, "None"),
            Modulus::Quadratic(c) => write!(f, "Quadratic({c})"),
            Modulus::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl Modulus {
    pub fn eval(&self, r: f64) -> Option<f64> {
        match self {
            Modulus::None => None,
            Modulus::Quadratic(c) => Some(c * r * r),
            Modulus::Custom(phi) => Some(phi(r)),
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, Modulus::None)
    }
}

/// Sampled evidence about whether a point minimizes a functional. Heuristic:
/// finding no improvement proves nothing.
#[derive(Clone, Debug, Serialize)]
pub struct MinimizingReport {
    pub value: f64,
    pub best_sampled_value: f64,
    pub samples: usize,
    pub improvement_found: bool,
    pub heuristic: bool,
}

fn check_weight(w: f64) -> Result<()> {
    if w.is_finite() && w > 0.0 {
        Ok(())
    } else {
        Err(Error::validation(format!("weight must be positive and finite, got {w}")))
    }
}

impl Functional {
    fn new(space: &Space, kind: FunctionalKind) -> Functional {
        Functional {
            space: space.clone(),
            kind,
            known_infimum: None,
            known_minimizer: None,
        }
    }

    pub fn squared_distance(space: &Space, anchor: Point, weight: f64) -> Result<Functional> {
        space.check(&anchor)?;
        check_weight(weight)?;
        let mut f = Functional::new(space, FunctionalKind::SquaredDistance { anchor: anchor.clone(), weight });
        f.known_infimum = Some(0.0);
        f.known_minimizer = Some(anchor);
        Ok(f)
    }

    pub fn distance(space: &Space, anchor: Point, weight: f64) -> Result<Functional> {
        space.check(&anchor)?;
        check_weight(weight)?;
        let mut f = Functional::new(space, FunctionalKind::Distance { anchor: anchor.clone(), weight });
        f.known_infimum = Some(0.0);
        f.known_minimizer = Some(anchor);
        Ok(f)
    }

    pub fn distance_to_set(space: &Space, set: ConvexSet) -> Result<Functional> {
        let rep = space.set_representative(&set)?;
        let mut f = Functional::new(space, FunctionalKind::DistanceToSet(set));
        f.known_infimum = Some(0.0);
        f.known_minimizer = Some(rep);
        Ok(f)
    }

    pub fn indicator(space: &Space, set: ConvexSet) -> Result<Functional> {
        let rep = space.set_representative(&set)?;
        let mut f = Functional::new(space, FunctionalKind::Indicator(set));
        f.known_infimum = Some(0.0);
        f.known_minimizer = Some(rep);
        Ok(f)
    }

    /// Busemann function of a ray. Not available on SPD spaces.
    pub fn busemann(space: &Space, ray: GeodesicRay) -> Result<Functional> {
        space.check(ray.origin())?;
        if matches!(space.kind(), SpaceKind::Spd { .. }) {
            return Err(Error::validation(
                "Busemann functions are not provided for SPD spaces",
            ));
        }
        // revalidate so hand-built directions are normalized
        let ray = space.ray(ray.origin(), ray.direction().clone())?;
        Ok(Functional::new(space, FunctionalKind::Busemann(ray)))
    }

    pub fn displacement(space: &Space, iso: Isometry) -> Result<Functional> {
        iso.validate(space)?;
        Ok(Functional::new(space, FunctionalKind::Displacement(iso)))
    }

    /// Weighted sum; nested sums are flattened. The empty sum is `f = 0`.
    pub fn weighted_sum(space: &Space, terms: Vec<(f64, Functional)>) -> Result<Functional> {
        let mut flat = Vec::with_capacity(terms.len());
        for (w, f) in terms {
            check_weight(w)?;
            if f.space.id() != space.id() {
                return Err(Error::domain("sum term lives in another space"));
            }
            match f.kind {
                FunctionalKind::WeightedSum(inner) => {
                    flat.extend(inner.into_iter().map(|(v, g)| (w * v, g)))
                }
                _ => flat.push((w, f)),
            }
        }
        let mut out = Functional::new(space, FunctionalKind::WeightedSum(Vec::new()));
        match flat.as_slice() {
            [] => out.known_infimum = Some(0.0),
            [(w, f)] => {
                out.known_infimum = f.known_infimum.map(|v| w * v);
                out.known_minimizer = f.known_minimizer.clone();
            }
            _ => {
                // terms sharing a minimizer make it a minimizer of the sum
                let first = flat[0].1.known_minimizer.clone();
                if let Some(m) = first {
                    let shared = flat.iter().all(|(_, g)| {
                        g.known_minimizer
                            .as_ref()
                            .is_some_and(|p| space.dist(p, &m) <= METADATA_TOLERANCE)
                            && g.known_infimum.is_some()
                    });
                    if shared {
                        out.known_infimum =
                            Some(flat.iter().map(|(w, g)| w * g.known_infimum.unwrap()).sum());
                        out.known_minimizer = Some(m);
                    }
                }
            }
        }
        out.kind = FunctionalKind::WeightedSum(flat);
        Ok(out)
    }

    /// The zero functional.
    pub fn zero(space: &Space) -> Functional {
        Functional::weighted_sum(space, Vec::new()).expect("empty sum is valid")
    }

    /// Attaches minimizer metadata. With only a minimizer, the infimum is
    /// taken as its value; with both, they must agree within `1e-9`.
    pub fn with_metadata(mut self, infimum: Option<f64>, minimizer: Option<Point>) -> Result<Functional> {
        if let Some(m) = &minimizer {
            self.space.check(m)?;
            let v = self.evaluate(m)?;
            if !v.is_finite() {
                return Err(Error::validation("declared minimizer is outside the domain"));
            }
            match infimum {
                Some(inf) if (inf - v).abs() > METADATA_TOLERANCE => {
                    return Err(Error::validation(format!(
                        "declared infimum {inf} differs from f(minimizer) = {v}"
                    )))
                }
                Some(inf) => self.known_infimum = Some(inf),
                None => self.known_infimum = Some(v),
            }
            self.known_minimizer = minimizer;
        } else {
            if let Some(inf) = infimum {
                if !inf.is_finite() {
                    return Err(Error::validation("declared infimum must be finite"));
                }
            }
            self.known_infimum = infimum;
            self.known_minimizer = None;
        }
        Ok(self)
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn kind(&self) -> &FunctionalKind {
        &self.kind
    }

    pub fn known_infimum(&self) -> Option<f64> {
        self.known_infimum
    }

    pub fn known_minimizer(&self) -> Option<&Point> {
        self.known_minimizer.as_ref()
    }

    /// Short name of the variant, for reports.
    pub fn label(&self) -> &'static str {
        match self.kind {
            FunctionalKind::SquaredDistance { .. } => "squared_distance",
            FunctionalKind::Distance { .. } => "distance",
            FunctionalKind::DistanceToSet(_) => "distance_to_set",
            FunctionalKind::Busemann(_) => "busemann",
            FunctionalKind::Displacement(_) => "displacement",
            FunctionalKind::Indicator(_) => "indicator",
            FunctionalKind::WeightedSum(_) => "weighted_sum",
        }
    }

    /// Value at `x`, possibly `+inf`.
    pub fn evaluate(&self, x: &Point) -> Result<f64> {
        self.space.check(x)?;
        self.eval(x)
    }

    pub(crate) fn eval(&self, x: &Point) -> Result<f64> {
        let s = &self.space;
        Ok(match &self.kind {
            FunctionalKind::SquaredDistance { anchor, weight } => {
                let d = s.dist(x, anchor);
                0.5 * weight * d * d
            }
            FunctionalKind::Distance { anchor, weight } => weight * s.dist(x, anchor),
            FunctionalKind::DistanceToSet(set) => {
                let p = s.project(set, x)?;
                s.dist(x, &p)
            }
            FunctionalKind::Busemann(ray) => busemann_value(s, ray, x),
            FunctionalKind::Displacement(iso) => s.dist(x, &iso.apply(s, x)),
            FunctionalKind::Indicator(set) => {
                if s.contains(set, x)? {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            FunctionalKind::WeightedSum(terms) => {
                let mut total = 0.0;
                for (w, f) in terms {
                    total += w * f.eval(x)?;
                }
                total
            }
        })
    }

    /// Lipschitz constant when the functional is globally Lipschitz.
    pub fn lipschitz(&self) -> Option<f64> {
        match &self.kind {
            FunctionalKind::Distance { weight, .. } => Some(*weight),
            FunctionalKind::DistanceToSet(_) | FunctionalKind::Busemann(_) => Some(1.0),
            FunctionalKind::Displacement(_) => Some(2.0),
            FunctionalKind::SquaredDistance { .. } | FunctionalKind::Indicator(_) => None,
            FunctionalKind::WeightedSum(terms) => terms
                .iter()
                .map(|(w, f)| f.lipschitz().map(|l| w * l))
                .sum(),
        }
    }

    /// Modulus of uniform convexity implied by the structure of `f`.
    /// `(w/2) d(., a)^2` contributes `φ(r) = (w/2) r^2`.
    pub fn uniform_convexity_modulus(&self) -> Modulus {
        match self.quadratic_modulus() {
            Some(c) if c > 0.0 => Modulus::Quadratic(c),
            _ => Modulus::None,
        }
    }

    fn quadratic_modulus(&self) -> Option<f64> {
        match &self.kind {
            FunctionalKind::SquaredDistance { weight, .. } => Some(0.5 * weight),
            FunctionalKind::WeightedSum(terms) => {
                let c: f64 = terms.iter().filter_map(|(w, f)| f.quadratic_modulus().map(|c| w * c)).sum();
                (c > 0.0).then_some(c)
            }
            _ => None,
        }
    }

    /// `(1-t) f(a) + t f(b) - f(γ(t))`, nonnegative for convex `f`.
    /// Zero (vacuous) when `f(a)` or `f(b)` is infinite.
    pub fn convexity_residual(&self, a: &Point, b: &Point, t: f64) -> Result<f64> {
        self.uniform_residual(a, b, t, &|_| 0.0)
    }

    /// `(1-t) f(a) + t f(b) - f(γ(t)) - t(1-t) φ(d(a, b))`.
    pub fn uniform_convexity_residual(
        &self,
        a: &Point,
        b: &Point,
        t: f64,
        modulus: &dyn Fn(f64) -> f64,
    ) -> Result<f64> {
        self.uniform_residual(a, b, t, modulus)
    }

    fn uniform_residual(&self, a: &Point, b: &Point, t: f64, phi: &dyn Fn(f64) -> f64) -> Result<f64> {
        let g = self.space.geodesic_point(a, b, t)?;
        if t == 0.0 || t == 1.0 {
            return Ok(0.0);
        }
        let fa = self.eval(a)?;
        let fb = self.eval(b)?;
        if !(fa.is_finite() && fb.is_finite()) {
            return Ok(0.0);
        }
        let fg = self.eval(&g)?;
        Ok((1.0 - t) * fa + t * fb - fg - t * (1.0 - t) * phi(self.space.dist(a, b)))
    }

    /// Compares `f(x)` with random points and short geodesic moves from `x`.
    pub fn is_minimizing_certificate(&self, x: &Point, sample_budget: usize, seed: u64) -> Result<MinimizingReport> {
        if sample_budget == 0 {
            return Err(Error::validation("sample budget must be at least 1"));
        }
        let value = self.evaluate(x)?;
        let mut rng = sampling::rng(seed, 0);
        let mut best = f64::INFINITY;
        for k in 0..sample_budget {
            let far = sampling::point(&self.space, &mut rng, 2.0);
            let candidate = if k % 2 == 0 {
                far
            } else {
                let t = 10f64.powi(-(1 + (k / 2 % 4) as i32));
                self.space.geo(x, &far, t)
            };
            best = best.min(self.eval(&candidate)?);
        }
        let margin = 1e-12 * value.abs().max(1.0);
        Ok(MinimizingReport {
            value,
            best_sampled_value: best,
            samples: sample_budget,
            improvement_found: best < value - margin,
            heuristic: true,
        })
    }
}

fn busemann_value(space: &Space, ray: &GeodesicRay, x: &Point) -> f64 {
    match (ray.origin().payload(), ray.direction(), x.payload()) {
        (Payload::Coords(o), RayDirection::Vector(u), Payload::Coords(p)) => {
            -p.iter().zip(o).zip(u).map(|((pi, oi), ui)| (pi - oi) * ui).sum::<f64>()
        }
        (Payload::Minkowski(o), RayDirection::Vector(u), Payload::Minkowski(p)) => {
            let ideal: Vec<f64> = o.iter().zip(u).map(|(a, b)| a + b).collect();
            (-hyperbolic::minkowski(p, &ideal)).ln()
        }
        (Payload::Locus(o), RayDirection::TreeEnd(leaf), Payload::Locus(p)) => {
            let t = space.metric_tree().expect("tree space");
            t.distance_to_vertex(p, *leaf) - t.distance_to_vertex(o, *leaf)
        }
        _ => unreachable!("Busemann rays are validated at construction"),
    }
}

impl Isometry {
    /// Translation of Euclidean space by `v`.
    pub fn translation(v: Vec<f64>) -> Isometry {
        let n = v.len();
        Isometry::Euclidean {
            q: DMatrix::identity(n, n),
            b: v,
        }
    }

    pub fn apply(&self, space: &Space, x: &Point) -> Point {
        let payload = match (self, x.payload()) {
            (Isometry::Euclidean { q, b }, Payload::Coords(p)) => {
                let y = q * nalgebra::DVector::from_column_slice(p);
                Payload::Coords(y.iter().zip(b).map(|(a, c)| a + c).collect())
            }
            (Isometry::Hyperbolic { l }, Payload::Minkowski(p)) => {
                let mut y: Vec<f64> = (l * nalgebra::DVector::from_column_slice(p)).iter().copied().collect();
                hyperbolic::renormalize(&mut y);
                Payload::Minkowski(y)
            }
            (Isometry::Spd { g }, Payload::Matrix(m)) => {
                Payload::Matrix(crate::geometry::linalg::symmetrize(&(g.transpose() * m * g)))
            }
            (Isometry::Tree { permutation }, Payload::Locus(l)) => {
                let t = space.metric_tree().expect("tree space");
                let e = t.edge(l.edge);
                let (u, v) = (permutation[e.u], permutation[e.v]);
                let image = t.edge_between(u, v).expect("validated automorphism");
                let offset = if t.edge(image).u == u { l.offset } else { t.edge(image).length - l.offset };
                Payload::Locus(t.canonical(Locus { edge: image, offset }))
            }
            _ => unreachable!("isometry kind is validated against the space"),
        };
        space
            .point_from_payload(payload)
    }

    /// Structural checks plus `d(Tx, Ty) = d(x, y)` on random pairs.
    pub fn validate(&self, space: &Space) -> Result<()> {
        let bad = |m: &str| Err(Error::validation(format!("isometry: {m}")));
        match (self, space.kind()) {
            (Isometry::Euclidean { q, b }, SpaceKind::Euclidean { dimension }) => {
                let n = *dimension;
                if q.nrows() != n || q.ncols() != n || b.len() != n {
                    return bad("shape does not match the dimension");
                }
                if !q.iter().chain(b.iter()).all(|v| v.is_finite()) {
                    return bad("non-finite entries");
                }
            }
            (Isometry::Hyperbolic { l }, SpaceKind::Hyperbolic { dimension }) => {
                let n = dimension + 1;
                if l.nrows() != n || l.ncols() != n || !l.iter().all(|v| v.is_finite()) {
                    return bad("shape does not match the dimension");
                }
                let mut j = DMatrix::identity(n, n);
                j[(0, 0)] = -1.0;
                let defect = (l.transpose() * &j * l - &j).amax();
                if defect > 1e-9 * l.amax().powi(2).max(1.0) {
                    return bad("matrix does not preserve the Minkowski form");
                }
                if l[(0, 0)] <= 0.0 {
                    return bad("matrix swaps the hyperboloid sheets");
                }
            }
            (Isometry::Spd { g }, SpaceKind::Spd { order }) => {
                if g.nrows() != *order || g.ncols() != *order || !g.iter().all(|v| v.is_finite()) {
                    return bad("shape does not match the order");
                }
                let svd = g.clone().svd(false, false);
                let smin = svd.singular_values.min();
                if smin <= 1e-12 * svd.singular_values.max().max(1.0) {
                    return bad("congruence matrix is singular");
                }
            }
            (Isometry::Tree { permutation }, SpaceKind::MetricTree(t)) => {
                let n = t.vertex_count();
                let mut seen = vec![false; n];
                if permutation.len() != n {
                    return bad("permutation has the wrong length");
                }
                for &p in permutation {
                    if p >= n || seen[p] {
                        return bad("not a permutation of the vertices");
                    }
                    seen[p] = true;
                }
                for e in t.edges() {
                    match t.edge_between(permutation[e.u], permutation[e.v]) {
                        Some(i) if (t.edge(i).length - e.length).abs() <= 1e-12 * e.length.max(1.0) => {}
                        _ => return bad("permutation does not preserve weighted edges"),
                    }
                }
            }
            _ => return bad("kind does not match the space"),
        }
        let mut rng = sampling::rng(0x1503_e7e7, 0);
        for _ in 0..ISOMETRY_PROBES {
            let x = sampling::point(space, &mut rng, 1.0);
            let y = sampling::point(space, &mut rng, 1.0);
            let before = space.dist(&x, &y);
            let after = space.dist(&self.apply(space, &x), &self.apply(space, &y));
            if (before - after).abs() > 1e-9 * before.max(1.0) {
                return bad(&format!("distance {before} mapped to {after}"));
            }
        }
        Ok(())
    }
}
