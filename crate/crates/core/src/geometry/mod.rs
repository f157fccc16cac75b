//! Geodesic spaces of nonpositive curvature.
//!
//! A [`Space`] is a geodesic oracle over one of four backends. Points carry
//! the id of the space that validated them, so every operation can reject
//! points from a different space. Geodesics are parameterized by the fraction
//! of the way travelled: `geodesic_point(a, b, 0) = a`, `geodesic_point(a, b, 1) = b`.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub mod hyperbolic;
pub mod linalg;
pub mod spd;
pub mod tree;

pub use tree::{Locus, MetricTree, TreeEdge};

use crate::error::{Error, Result};
use crate::functionals::Functional;

/// Absolute tolerance for distance comparisons unless a space overrides it.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;
/// Largest supported SPD matrix order.
pub const MAX_SPD_ORDER: usize = 16;
/// Allowed deviation of `<p,p>` from `-1`, relative to `max(1, p_0^2)`.
pub const SHEET_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpaceId(u64);

#[derive(Clone, Debug)]
pub enum SpaceKind {
    Euclidean { dimension: usize },
    Hyperbolic { dimension: usize },
    Spd { order: usize },
    MetricTree(Arc<MetricTree>),
}

#[derive(Clone, Debug)]
pub struct Space {
    id: SpaceId,
    kind: SpaceKind,
    tolerance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Coords(Vec<f64>),
    /// Point on the upper hyperboloid sheet, time coordinate first.
    Minkowski(Vec<f64>),
    Matrix(DMatrix<f64>),
    Locus(Locus),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    space: SpaceId,
    payload: Payload,
}

impl Point {
    pub fn space_id(&self) -> SpaceId {
        self.space
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }

    /// Coordinates for Euclidean points, the Minkowski vector for
    /// hyperboloid points.
    pub fn coords(&self) -> Option<&[f64]> {
        match &self.payload {
            Payload::Coords(v) | Payload::Minkowski(v) => Some(v),
            _ => None,
        }
    }

    pub fn matrix(&self) -> Option<&DMatrix<f64>> {
        match &self.payload {
            Payload::Matrix(m) => Some(m),
            _ => None,
        }
    }

    pub fn locus(&self) -> Option<Locus> {
        match &self.payload {
            Payload::Locus(l) => Some(*l),
            _ => None,
        }
    }
}

/// Tangent vectors for the manifold backends. SPD tangents are whitened at
/// their base point (see [`spd`]).
#[derive(Clone, Debug)]
pub(crate) enum Tangent {
    Vector(Vec<f64>),
    Matrix(DMatrix<f64>),
}

impl Tangent {
    pub(crate) fn scale(&self, c: f64) -> Tangent {
        match self {
            Tangent::Vector(v) => Tangent::Vector(v.iter().map(|x| x * c).collect()),
            Tangent::Matrix(m) => Tangent::Matrix(m * c),
        }
    }

    /// `self + c * other`.
    pub(crate) fn add_scaled(&mut self, c: f64, other: &Tangent) {
        match (self, other) {
            (Tangent::Vector(a), Tangent::Vector(b)) => {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += c * y)
            }
            (Tangent::Matrix(a), Tangent::Matrix(b)) => *a += b * c,
            _ => unreachable!("tangent kinds differ"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicSegment {
    pub a: Point,
    pub b: Point,
    pub length: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RayDirection {
    /// Unit direction: Euclidean vector, or a Minkowski tangent at the origin.
    Vector(Vec<f64>),
    /// Whitened symmetric unit direction at an SPD origin `A`; the ray is
    /// `A^{1/2} exp(t S) A^{1/2}`.
    Matrix(DMatrix<f64>),
    /// A leaf of a metric tree standing in for the ray's end.
    TreeEnd(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicRay {
    origin: Point,
    direction: RayDirection,
}

impl GeodesicRay {
    pub fn origin(&self) -> &Point {
        &self.origin
    }

    pub fn direction(&self) -> &RayDirection {
        &self.direction
    }
}

/// Closed convex subsets with a computable metric projection.
#[derive(Clone, Debug)]
pub enum ConvexSet {
    Singleton(Point),
    Segment(Point, Point),
    Ball { center: Point, radius: f64 },
    /// `{x : f(x) <= level}`; projection needs `f`'s known minimizer.
    Sublevel { functional: Box<Functional>, level: f64 },
    /// Union of the edges whose endpoints both lie in the vertex set.
    Subtree(Vec<usize>),
}

fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn sq(x: f64) -> f64 {
    x * x
}

impl Space {
    fn with_kind(kind: SpaceKind) -> Space {
        let mut bytes: Vec<u8> = Vec::new();
        match &kind {
            SpaceKind::Euclidean { dimension } => {
                bytes.extend(b"euclidean");
                bytes.extend(dimension.to_le_bytes());
            }
            SpaceKind::Hyperbolic { dimension } => {
                bytes.extend(b"hyperbolic");
                bytes.extend(dimension.to_le_bytes());
            }
            SpaceKind::Spd { order } => {
                bytes.extend(b"spd");
                bytes.extend(order.to_le_bytes());
            }
            SpaceKind::MetricTree(t) => {
                bytes.extend(b"tree");
                for name in t.names() {
                    bytes.extend(name.as_bytes());
                    bytes.push(0);
                }
                for e in t.edges() {
                    bytes.extend(e.u.to_le_bytes());
                    bytes.extend(e.v.to_le_bytes());
                    bytes.extend(e.length.to_bits().to_le_bytes());
                }
            }
        }
        Space {
            id: SpaceId(fnv1a(bytes)),
            kind,
            tolerance: DEFAULT_TOLERANCE,
        }
    }

    pub fn euclidean(dimension: usize) -> Result<Space> {
        if dimension == 0 {
            return Err(Error::validation("dimension must be at least 1"));
        }
        Ok(Space::with_kind(SpaceKind::Euclidean { dimension }))
    }

    /// Hyperbolic space of the given dimension, embedded in Minkowski space
    /// of one more dimension.
    pub fn hyperbolic(dimension: usize) -> Result<Space> {
        if dimension == 0 {
            return Err(Error::validation("dimension must be at least 1"));
        }
        Ok(Space::with_kind(SpaceKind::Hyperbolic { dimension }))
    }

    pub fn spd(order: usize) -> Result<Space> {
        if order == 0 || order > MAX_SPD_ORDER {
            return Err(Error::validation(format!(
                "SPD order must be in 1..={MAX_SPD_ORDER}, got {order}"
            )));
        }
        Ok(Space::with_kind(SpaceKind::Spd { order }))
    }

    pub fn tree(tree: MetricTree) -> Space {
        Space::with_kind(SpaceKind::MetricTree(Arc::new(tree)))
    }

    /// Overrides the distance-comparison tolerance.
    pub fn with_tolerance(mut self, tolerance: f64) -> Result<Space> {
        if !(tolerance.is_finite() && tolerance > 0.0) {
            return Err(Error::validation("tolerance must be positive"));
        }
        self.tolerance = tolerance;
        Ok(self)
    }

    pub fn id(&self) -> SpaceId {
        self.id
    }

    pub fn kind(&self) -> &SpaceKind {
        &self.kind
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            SpaceKind::Euclidean { .. } => "euclidean",
            SpaceKind::Hyperbolic { .. } => "hyperbolic",
            SpaceKind::Spd { .. } => "spd",
            SpaceKind::MetricTree(_) => "tree",
        }
    }

    /// Manifold dimension parameter (matrix order for SPD, 1 for trees).
    pub fn dimension(&self) -> usize {
        match &self.kind {
            SpaceKind::Euclidean { dimension } | SpaceKind::Hyperbolic { dimension } => *dimension,
            SpaceKind::Spd { order } => *order,
            SpaceKind::MetricTree(_) => 1,
        }
    }

    pub fn metric_tree(&self) -> Option<&MetricTree> {
        match &self.kind {
            SpaceKind::MetricTree(t) => Some(t),
            _ => None,
        }
    }

    pub(crate) fn point_from_payload(&self, payload: Payload) -> Point {
        self.wrap(payload)
    }

    fn wrap(&self, payload: Payload) -> Point {
        Point {
            space: self.id,
            payload,
        }
    }

    /// Builds a point from flat coordinates: a Euclidean vector, a Minkowski
    /// vector of length `dimension + 1`, or a row-major SPD matrix.
    pub fn point(&self, values: Vec<f64>) -> Result<Point> {
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::validation("point has non-finite coordinates"));
        }
        match &self.kind {
            SpaceKind::Euclidean { dimension } => {
                if values.len() != *dimension {
                    return Err(Error::validation(format!(
                        "expected {dimension} coordinates, got {}",
                        values.len()
                    )));
                }
                Ok(self.wrap(Payload::Coords(values)))
            }
            SpaceKind::Hyperbolic { dimension } => {
                if values.len() != dimension + 1 {
                    return Err(Error::validation(format!(
                        "expected {} Minkowski coordinates, got {}",
                        dimension + 1,
                        values.len()
                    )));
                }
                let form = hyperbolic::minkowski(&values, &values);
                if values[0] <= 0.0 {
                    return Err(Error::validation("hyperboloid point must have t > 0"));
                }
                if (form + 1.0).abs() > SHEET_TOLERANCE * values[0].powi(2).max(1.0) {
                    return Err(Error::validation(format!(
                        "point is off the hyperboloid: <p,p> = {form}"
                    )));
                }
                Ok(self.wrap(Payload::Minkowski(values)))
            }
            SpaceKind::Spd { order } => {
                if values.len() != order * order {
                    return Err(Error::validation(format!(
                        "expected {} matrix entries, got {}",
                        order * order,
                        values.len()
                    )));
                }
                self.spd_point(DMatrix::from_row_slice(*order, *order, &values))
            }
            SpaceKind::MetricTree(_) => Err(Error::validation(
                "tree points are loci (edge, offset), not coordinate vectors",
            )),
        }
    }

    /// Hyperboloid point above the given spatial coordinates.
    pub fn lift(&self, spatial: &[f64]) -> Result<Point> {
        match &self.kind {
            SpaceKind::Hyperbolic { dimension } if spatial.len() == *dimension => {
                if spatial.iter().any(|x| !x.is_finite()) {
                    return Err(Error::validation("point has non-finite coordinates"));
                }
                Ok(self.wrap(Payload::Minkowski(hyperbolic::lift(spatial))))
            }
            SpaceKind::Hyperbolic { dimension } => Err(Error::validation(format!(
                "expected {dimension} spatial coordinates, got {}",
                spatial.len()
            ))),
            _ => Err(Error::domain("lift applies to hyperbolic spaces only")),
        }
    }

    pub fn spd_point(&self, m: DMatrix<f64>) -> Result<Point> {
        match &self.kind {
            SpaceKind::Spd { order } => {
                if m.nrows() != *order || m.ncols() != *order {
                    return Err(Error::validation(format!(
                        "expected a {order}x{order} matrix, got {}x{}",
                        m.nrows(),
                        m.ncols()
                    )));
                }
                spd::validate(&m).map_err(Error::Validation)?;
                Ok(self.wrap(Payload::Matrix(m)))
            }
            _ => Err(Error::domain("matrix points belong to SPD spaces")),
        }
    }

    fn tree_ref(&self) -> Result<&MetricTree> {
        self.metric_tree()
            .ok_or_else(|| Error::domain(format!("{} space is not a metric tree", self.name())))
    }

    pub fn locus(&self, edge: usize, offset: f64) -> Result<Point> {
        let t = self.tree_ref()?;
        let l = Locus { edge, offset };
        t.check_locus(&l)?;
        Ok(self.wrap(Payload::Locus(t.canonical(l))))
    }

    pub fn vertex(&self, name: &str) -> Result<Point> {
        let t = self.tree_ref()?;
        let v = t
            .vertex_index(name)
            .ok_or_else(|| Error::validation(format!("unknown vertex '{name}'")))?;
        Ok(self.wrap(Payload::Locus(t.vertex_locus(v))))
    }

    pub fn vertex_point(&self, v: usize) -> Result<Point> {
        let t = self.tree_ref()?;
        if v >= t.vertex_count() {
            return Err(Error::validation(format!("vertex {v} does not exist")));
        }
        Ok(self.wrap(Payload::Locus(t.vertex_locus(v))))
    }

    /// A fixed reference point: the origin, the sheet apex, the identity
    /// matrix, or the first vertex.
    pub fn base_point(&self) -> Point {
        match &self.kind {
            SpaceKind::Euclidean { dimension } => self.wrap(Payload::Coords(vec![0.0; *dimension])),
            SpaceKind::Hyperbolic { dimension } => {
                self.wrap(Payload::Minkowski(hyperbolic::lift(&vec![0.0; *dimension])))
            }
            SpaceKind::Spd { order } => {
                self.wrap(Payload::Matrix(DMatrix::identity(*order, *order)))
            }
            SpaceKind::MetricTree(t) => self.wrap(Payload::Locus(t.vertex_locus(0))),
        }
    }

    pub fn check(&self, p: &Point) -> Result<()> {
        if p.space != self.id {
            return Err(Error::domain(format!(
                "point belongs to a different space than this {} space",
                self.name()
            )));
        }
        Ok(())
    }

    // ---- unchecked kernels; callers guarantee membership ----

    pub(crate) fn dist(&self, p: &Point, q: &Point) -> f64 {
        match (&self.kind, &p.payload, &q.payload) {
            (SpaceKind::Euclidean { .. }, Payload::Coords(a), Payload::Coords(b)) => {
                a.iter().zip(b).map(|(x, y)| sq(x - y)).sum::<f64>().sqrt()
            }
            (SpaceKind::Hyperbolic { .. }, Payload::Minkowski(a), Payload::Minkowski(b)) => {
                hyperbolic::distance(a, b)
            }
            (SpaceKind::Spd { .. }, Payload::Matrix(a), Payload::Matrix(b)) => {
                if a == b {
                    0.0
                } else {
                    spd::distance(a, b)
                }
            }
            (SpaceKind::MetricTree(t), Payload::Locus(a), Payload::Locus(b)) => t.distance(a, b),
            _ => unreachable!("payload does not match space kind"),
        }
    }

    pub(crate) fn geo(&self, a: &Point, b: &Point, t: f64) -> Point {
        if t == 0.0 {
            return a.clone();
        }
        if t == 1.0 {
            return b.clone();
        }
        let payload = match (&self.kind, &a.payload, &b.payload) {
            (SpaceKind::Euclidean { .. }, Payload::Coords(x), Payload::Coords(y)) => {
                Payload::Coords(x.iter().zip(y).map(|(p, q)| p + t * (q - p)).collect())
            }
            (SpaceKind::Hyperbolic { .. }, Payload::Minkowski(x), Payload::Minkowski(y)) => {
                Payload::Minkowski(hyperbolic::geodesic(x, y, t))
            }
            (SpaceKind::Spd { .. }, Payload::Matrix(x), Payload::Matrix(y)) => {
                Payload::Matrix(spd::geodesic(x, y, t))
            }
            (SpaceKind::MetricTree(tr), Payload::Locus(x), Payload::Locus(y)) => {
                Payload::Locus(tr.geodesic(x, y, t))
            }
            _ => unreachable!("payload does not match space kind"),
        };
        self.wrap(payload)
    }

    pub(crate) fn has_tangent(&self) -> bool {
        !matches!(self.kind, SpaceKind::MetricTree(_))
    }

    /// Inverse exponential map. `None` on trees.
    pub(crate) fn log_map(&self, p: &Point, q: &Point) -> Option<Tangent> {
        match (&p.payload, &q.payload) {
            (Payload::Coords(a), Payload::Coords(b)) => {
                Some(Tangent::Vector(a.iter().zip(b).map(|(x, y)| y - x).collect()))
            }
            (Payload::Minkowski(a), Payload::Minkowski(b)) => {
                Some(Tangent::Vector(hyperbolic::log(a, b)))
            }
            (Payload::Matrix(a), Payload::Matrix(b)) => Some(Tangent::Matrix(spd::log(a, b))),
            _ => None,
        }
    }

    pub(crate) fn exp_map(&self, p: &Point, v: &Tangent) -> Point {
        let payload = match (&p.payload, v) {
            (Payload::Coords(a), Tangent::Vector(v)) => {
                Payload::Coords(a.iter().zip(v).map(|(x, y)| x + y).collect())
            }
            (Payload::Minkowski(a), Tangent::Vector(v)) => {
                Payload::Minkowski(hyperbolic::exp(a, v))
            }
            (Payload::Matrix(a), Tangent::Matrix(s)) => Payload::Matrix(spd::exp(a, s)),
            _ => unreachable!("exp_map on a space without tangents"),
        };
        self.wrap(payload)
    }

    pub(crate) fn tangent_inner(&self, u: &Tangent, v: &Tangent) -> f64 {
        match (&self.kind, u, v) {
            (SpaceKind::Hyperbolic { .. }, Tangent::Vector(a), Tangent::Vector(b)) => {
                hyperbolic::minkowski(a, b)
            }
            (_, Tangent::Vector(a), Tangent::Vector(b)) => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            (_, Tangent::Matrix(a), Tangent::Matrix(b)) => a.dot(b),
            _ => unreachable!("tangent kinds differ"),
        }
    }

    pub(crate) fn tangent_norm(&self, v: &Tangent) -> f64 {
        self.tangent_inner(v, v).max(0.0).sqrt()
    }

    /// The point `c` with `b` the midpoint of `[a, c]`, when geodesics
    /// extend past `b`. Trees return `None`.
    pub(crate) fn extrapolate(&self, a: &Point, b: &Point) -> Option<Point> {
        let payload = match (&a.payload, &b.payload) {
            (Payload::Coords(x), Payload::Coords(y)) => {
                Payload::Coords(x.iter().zip(y).map(|(p, q)| 2.0 * q - p).collect())
            }
            (Payload::Minkowski(x), Payload::Minkowski(y)) => {
                let v: Vec<f64> = hyperbolic::log(y, x).iter().map(|c| -c).collect();
                Payload::Minkowski(hyperbolic::exp(y, &v))
            }
            (Payload::Matrix(x), Payload::Matrix(y)) => Payload::Matrix(spd::reflect(x, y)),
            _ => return None,
        };
        Some(self.wrap(payload))
    }

    // ---- public operations ----

    pub fn distance(&self, p: &Point, q: &Point) -> Result<f64> {
        self.check(p)?;
        self.check(q)?;
        Ok(self.dist(p, q))
    }

    /// Point at fraction `t` of the way from `a` to `b`.
    pub fn geodesic_point(&self, a: &Point, b: &Point, t: f64) -> Result<Point> {
        self.check(a)?;
        self.check(b)?;
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::domain(format!("geodesic parameter {t} outside [0, 1]")));
        }
        Ok(self.geo(a, b, t))
    }

    pub fn segment(&self, a: &Point, b: &Point) -> Result<GeodesicSegment> {
        let length = self.distance(a, b)?;
        Ok(GeodesicSegment {
            a: a.clone(),
            b: b.clone(),
            length,
        })
    }

    /// Slack in the CAT(0) comparison inequality:
    /// `(1-t) d(x,a)^2 + t d(x,b)^2 - t(1-t) d(a,b)^2 - d(x, g(t))^2`,
    /// nonnegative in a CAT(0) space and zero in Euclidean space.
    pub fn cat0_residual(&self, x: &Point, a: &Point, b: &Point, t: f64) -> Result<f64> {
        self.check(x)?;
        let g = self.geodesic_point(a, b, t)?;
        let xa = self.dist(x, a);
        let xb = self.dist(x, b);
        let ab = self.dist(a, b);
        let xg = self.dist(x, &g);
        Ok((1.0 - t) * sq(xa) + t * sq(xb) - t * (1.0 - t) * sq(ab) - sq(xg))
    }

    /// Angle at `x` of the Euclidean comparison triangle for `(y, x, z)`.
    pub fn comparison_angle(&self, y: &Point, x: &Point, z: &Point) -> Result<f64> {
        let xy = self.distance(x, y)?;
        let xz = self.distance(x, z)?;
        if xy <= self.tolerance || xz <= self.tolerance {
            return Err(Error::domain("comparison angle needs x distinct from y and z"));
        }
        let yz = self.dist(y, z);
        let c = (sq(xy) + sq(xz) - sq(yz)) / (2.0 * xy * xz);
        Ok(c.clamp(-1.0, 1.0).acos())
    }

    pub fn validate_set(&self, set: &ConvexSet) -> Result<()> {
        match set {
            ConvexSet::Singleton(p) => self.check(p),
            ConvexSet::Segment(a, b) => {
                self.check(a)?;
                self.check(b)
            }
            ConvexSet::Ball { center, radius } => {
                self.check(center)?;
                if !(radius.is_finite() && *radius >= 0.0) {
                    return Err(Error::validation(format!("ball radius {radius} is invalid")));
                }
                Ok(())
            }
            ConvexSet::Sublevel { functional, level } => {
                if functional.space().id() != self.id {
                    return Err(Error::domain("sublevel functional lives in another space"));
                }
                if !level.is_finite() {
                    return Err(Error::validation("sublevel level must be finite"));
                }
                let m = functional.known_minimizer().ok_or_else(|| {
                    Error::validation("sublevel-set projection needs a known minimizer")
                })?;
                if functional.evaluate(m)? > level + self.tolerance {
                    return Err(Error::validation("sublevel set is empty"));
                }
                Ok(())
            }
            ConvexSet::Subtree(vs) => {
                let t = self.tree_ref()?;
                if vs.iter().any(|&v| v >= t.vertex_count()) {
                    return Err(Error::validation("subtree names a missing vertex"));
                }
                if !t.is_connected_subset(vs) {
                    return Err(Error::validation(
                        "subtree vertex set is empty or not connected",
                    ));
                }
                Ok(())
            }
        }
    }

    /// Some point of the set.
    pub fn set_representative(&self, set: &ConvexSet) -> Result<Point> {
        self.validate_set(set)?;
        Ok(match set {
            ConvexSet::Singleton(p) => p.clone(),
            ConvexSet::Segment(a, _) => a.clone(),
            ConvexSet::Ball { center, .. } => center.clone(),
            ConvexSet::Sublevel { functional, .. } => {
                functional.known_minimizer().expect("validated").clone()
            }
            ConvexSet::Subtree(vs) => self.vertex_point(vs[0])?,
        })
    }

    /// Membership up to the space tolerance.
    pub fn contains(&self, set: &ConvexSet, x: &Point) -> Result<bool> {
        self.check(x)?;
        self.validate_set(set)?;
        let tol = self.tolerance;
        Ok(match set {
            ConvexSet::Singleton(p) => self.dist(p, x) <= tol,
            ConvexSet::Segment(a, b) => {
                self.dist(a, x) + self.dist(x, b) - self.dist(a, b) <= tol
            }
            ConvexSet::Ball { center, radius } => self.dist(center, x) <= radius + tol,
            ConvexSet::Sublevel { functional, level } => functional.evaluate(x)? <= level + tol,
            ConvexSet::Subtree(_) => {
                let p = self.project(set, x)?;
                self.dist(&p, x) <= tol
            }
        })
    }

    /// Parameter of the nearest point of `[a, b]` to `x`.
    fn segment_parameter(&self, a: &Point, b: &Point, x: &Point) -> f64 {
        match (&self.kind, &a.payload, &b.payload, &x.payload) {
            (SpaceKind::Euclidean { .. }, Payload::Coords(pa), Payload::Coords(pb), Payload::Coords(px)) => {
                let mut num = 0.0;
                let mut den = 0.0;
                for i in 0..pa.len() {
                    let d = pb[i] - pa[i];
                    num += (px[i] - pa[i]) * d;
                    den += d * d;
                }
                if den == 0.0 {
                    0.0
                } else {
                    (num / den).clamp(0.0, 1.0)
                }
            }
            (SpaceKind::Hyperbolic { .. }, Payload::Minkowski(pa), Payload::Minkowski(pb), Payload::Minkowski(px)) => {
                hyperbolic::segment_projection_parameter(pa, pb, px)
            }
            (SpaceKind::MetricTree(t), Payload::Locus(la), Payload::Locus(lb), Payload::Locus(lx)) => {
                t.segment_projection_parameter(la, lb, lx)
            }
            _ => self.segment_parameter_bisect(a, b, x),
        }
    }

    /// Bisection on the sign of `d/dt (1/2) d(x, g(t))^2 = -<log_g x, g'(t)>`,
    /// which is nondecreasing in `t` because the squared distance is convex.
    fn segment_parameter_bisect(&self, a: &Point, b: &Point, x: &Point) -> f64 {
        if self.dist(a, b) == 0.0 {
            return 0.0;
        }
        let slope = |t: f64| -> f64 {
            let g = self.geo(a, b, t);
            let to_x = self.log_map(&g, x).expect("manifold backend");
            let dir = if t < 1.0 {
                self.log_map(&g, b).expect("manifold backend")
            } else {
                self.log_map(&g, a).expect("manifold backend").scale(-1.0)
            };
            -self.tangent_inner(&to_x, &dir)
        };
        if slope(0.0) >= 0.0 {
            return 0.0;
        }
        if slope(1.0) <= 0.0 {
            return 1.0;
        }
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        while hi - lo > 1e-15 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if slope(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Metric projection onto a closed convex set.
    pub fn project(&self, set: &ConvexSet, x: &Point) -> Result<Point> {
        self.check(x)?;
        self.validate_set(set)?;
        match set {
            ConvexSet::Singleton(p) => Ok(p.clone()),
            ConvexSet::Segment(a, b) => {
                let t = self.segment_parameter(a, b, x);
                let p = self.geo(a, b, t);
                // points already on the segment come back unchanged
                if self.dist(&p, x) <= 1e-12 {
                    Ok(x.clone())
                } else {
                    Ok(p)
                }
            }
            ConvexSet::Ball { center, radius } => {
                let d = self.dist(center, x);
                if d <= *radius {
                    Ok(x.clone())
                } else {
                    Ok(self.geo(center, x, radius / d))
                }
            }
            ConvexSet::Sublevel { functional, level } => self.project_sublevel(functional, *level, x),
            ConvexSet::Subtree(vs) => {
                let t = self.tree_ref()?;
                let l = x.locus().expect("tree point");
                Ok(self.wrap(Payload::Locus(t.project_subtree(vs, &l))))
            }
        }
    }

    /// Bisection along `[x, m]` for the first point with `f <= level`, where
    /// `m` is a known minimizer. Exact for sublevel sets of functionals whose
    /// sublevel projections travel toward the minimizer (distance-type);
    /// otherwise a feasible approximation.
    fn project_sublevel(&self, f: &Functional, level: f64, x: &Point) -> Result<Point> {
        const LEVEL_TOLERANCE: f64 = 1e-10;
        if f.evaluate(x)? <= level {
            return Ok(x.clone());
        }
        let m = f.known_minimizer().expect("validated");
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut best = m.clone();
        let mut gap = (f.evaluate(m)? - level).abs();
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let p = self.geo(x, m, mid);
            let v = f.evaluate(&p)?;
            if v <= level {
                hi = mid;
                best = p;
                gap = level - v;
                if gap <= LEVEL_TOLERANCE {
                    return Ok(best);
                }
            } else {
                lo = mid;
            }
            if hi - lo < 1e-16 {
                break;
            }
        }
        if gap <= LEVEL_TOLERANCE {
            Ok(best)
        } else {
            Err(Error::Solver {
                message: "sublevel projection did not reach the level".into(),
                best: Some(Box::new(best)),
                residual: gap,
            })
        }
    }

    /// Validates and normalizes a ray. Euclidean directions are vectors of
    /// length `dimension`; hyperbolic directions are Minkowski vectors
    /// (projected onto the tangent space at the origin) or spatial vectors;
    /// SPD directions are whitened symmetric matrices; tree rays end at a leaf.
    pub fn ray(&self, origin: &Point, direction: RayDirection) -> Result<GeodesicRay> {
        self.check(origin)?;
        let direction = match (&self.kind, &origin.payload, direction) {
            (SpaceKind::Euclidean { dimension }, _, RayDirection::Vector(v)) => {
                if v.len() != *dimension {
                    return Err(Error::validation("ray direction has the wrong length"));
                }
                RayDirection::Vector(normalize(v, |u| u.iter().map(|x| x * x).sum())?)
            }
            (SpaceKind::Hyperbolic { dimension }, Payload::Minkowski(o), RayDirection::Vector(v)) => {
                let ambient = if v.len() == *dimension {
                    std::iter::once(0.0).chain(v).collect()
                } else if v.len() == dimension + 1 {
                    v
                } else {
                    return Err(Error::validation("ray direction has the wrong length"));
                };
                let tangent = hyperbolic::project_tangent(o, &ambient);
                RayDirection::Vector(normalize(tangent, |u| hyperbolic::minkowski(u, u))?)
            }
            (SpaceKind::Spd { order }, _, RayDirection::Matrix(s)) => {
                if s.nrows() != *order || s.ncols() != *order {
                    return Err(Error::validation("ray direction has the wrong shape"));
                }
                if (&s - s.transpose()).amax() > spd::SYMMETRY_TOLERANCE {
                    return Err(Error::validation("SPD ray direction must be symmetric"));
                }
                let n = s.norm();
                if !(n.is_finite() && n > 1e-12) {
                    return Err(Error::validation("ray direction is not normalizable"));
                }
                RayDirection::Matrix(linalg::symmetrize(&s) / n)
            }
            (SpaceKind::MetricTree(t), Payload::Locus(l), RayDirection::TreeEnd(leaf)) => {
                if leaf >= t.vertex_count() || t.degree(leaf) != 1 {
                    return Err(Error::validation("tree ray end must be a leaf"));
                }
                if t.distance_to_vertex(l, leaf) <= self.tolerance {
                    return Err(Error::validation("tree ray origin coincides with its end"));
                }
                RayDirection::TreeEnd(leaf)
            }
            _ => return Err(Error::validation("ray direction does not match the space")),
        };
        Ok(GeodesicRay {
            origin: origin.clone(),
            direction,
        })
    }

    pub fn ray_point(&self, ray: &GeodesicRay, t: f64) -> Result<Point> {
        self.check(&ray.origin)?;
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::domain(format!("ray parameter {t} must be nonnegative")));
        }
        if t == 0.0 {
            return Ok(ray.origin.clone());
        }
        let payload = match (&ray.origin.payload, &ray.direction) {
            (Payload::Coords(o), RayDirection::Vector(u)) => {
                Payload::Coords(o.iter().zip(u).map(|(a, b)| a + t * b).collect())
            }
            (Payload::Minkowski(o), RayDirection::Vector(v)) => {
                let (c, s) = (t.cosh(), t.sinh());
                let mut p: Vec<f64> = o.iter().zip(v).map(|(a, b)| c * a + s * b).collect();
                hyperbolic::renormalize(&mut p);
                Payload::Minkowski(p)
            }
            (Payload::Matrix(a), RayDirection::Matrix(s)) => Payload::Matrix(spd::exp(a, &(s * t))),
            (Payload::Locus(l), RayDirection::TreeEnd(leaf)) => {
                let tr = self.tree_ref()?;
                let len = tr.distance_to_vertex(l, *leaf);
                if t > len + self.tolerance {
                    return Err(Error::domain(format!(
                        "tree ray ends at its leaf after length {len}; got t = {t}"
                    )));
                }
                let end = tr.vertex_locus(*leaf);
                Payload::Locus(tr.geodesic(l, &end, (t / len).min(1.0)))
            }
            _ => return Err(Error::validation("ray direction does not match the space")),
        };
        Ok(self.wrap(payload))
    }
}

fn normalize(v: Vec<f64>, norm2: impl Fn(&[f64]) -> f64) -> Result<Vec<f64>> {
    let n = norm2(&v).max(0.0).sqrt();
    if !(n.is_finite() && n > 1e-12) {
        return Err(Error::validation("ray direction is not normalizable"));
    }
    Ok(v.into_iter().map(|x| x / n).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn e2() -> Space {
        Space::euclidean(2).unwrap()
    }

    #[test]
    fn euclidean_distance_and_midpoint() {
        let s = e2();
        let p = s.point(vec![0.0, 0.0]).unwrap();
        let q = s.point(vec![3.0, 4.0]).unwrap();
        assert_eq!(s.distance(&p, &q).unwrap(), 5.0);
        let b = s.point(vec![2.0, 0.0]).unwrap();
        assert_eq!(s.geodesic_point(&p, &b, 0.5).unwrap().coords().unwrap(), &[1.0, 0.0]);
    }

    #[test]
    fn mismatched_spaces_are_domain_errors() {
        let s = e2();
        let other = Space::euclidean(3).unwrap();
        let p = s.point(vec![0.0, 0.0]).unwrap();
        let q = other.point(vec![0.0, 0.0, 1.0]).unwrap();
        assert!(matches!(s.distance(&p, &q), Err(Error::Domain(_))));
        // equal descriptors give interchangeable spaces
        let again = Space::euclidean(2).unwrap();
        assert!(again.distance(&p, &p).is_ok());
    }

    #[test]
    fn geodesic_parameter_outside_unit_interval() {
        let s = e2();
        let p = s.base_point();
        assert!(matches!(s.geodesic_point(&p, &p, 1.5), Err(Error::Domain(_))));
        assert!(matches!(s.geodesic_point(&p, &p, -0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn hyperboloid_validation() {
        let h = Space::hyperbolic(2).unwrap();
        assert!(h.point(vec![1.0, 0.0, 0.0]).is_ok());
        assert!(h.point(vec![1.0, 0.1, 0.0]).is_err());
        assert!(h.point(vec![-1.0, 0.0, 0.0]).is_err());
        assert!(h.point(vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn cat0_residual_examples() {
        let s = e2();
        let x = s.point(vec![0.3, 2.0]).unwrap();
        let a = s.point(vec![-1.0, 0.5]).unwrap();
        let b = s.point(vec![4.0, -2.0]).unwrap();
        assert_abs_diff_eq!(s.cat0_residual(&x, &a, &b, 0.37).unwrap(), 0.0, epsilon = 1e-12);

        let h = Space::hyperbolic(2).unwrap();
        let x = h.point(vec![1f64.cosh(), 0.0, 1f64.sinh()]).unwrap();
        let a = h.point(vec![1.0, 0.0, 0.0]).unwrap();
        let b = h.point(vec![2f64.cosh(), 2f64.sinh(), 0.0]).unwrap();
        assert!(h.cat0_residual(&x, &a, &b, 0.5).unwrap() > 0.0);
        assert_eq!(h.cat0_residual(&x, &a, &b, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn comparison_angles() {
        let s = e2();
        let o = s.point(vec![0.0, 0.0]).unwrap();
        let y = s.point(vec![1.0, 0.0]).unwrap();
        let z = s.point(vec![0.0, 1.0]).unwrap();
        let w = s.point(vec![-1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(s.comparison_angle(&y, &o, &z).unwrap(), std::f64::consts::FRAC_PI_2, epsilon = 1e-15);
        assert_abs_diff_eq!(s.comparison_angle(&y, &o, &w).unwrap(), std::f64::consts::PI, epsilon = 1e-15);
        assert_eq!(s.comparison_angle(&y, &o, &y).unwrap(), 0.0);
        assert!(matches!(s.comparison_angle(&o, &o, &y), Err(Error::Domain(_))));
    }

    #[test]
    fn projections() {
        let s = e2();
        let x = s.point(vec![0.0, 0.0]).unwrap();
        let seg = ConvexSet::Segment(s.point(vec![1.0, -1.0]).unwrap(), s.point(vec![1.0, 1.0]).unwrap());
        let p = s.project(&seg, &x).unwrap();
        assert_abs_diff_eq!(p.coords().unwrap()[0], 1.0);
        assert_abs_diff_eq!(p.coords().unwrap()[1], 0.0);

        let ball = ConvexSet::Ball { center: x.clone(), radius: 1.0 };
        let far = s.point(vec![2.0, 0.0]).unwrap();
        assert_eq!(s.project(&ball, &far).unwrap().coords().unwrap(), &[1.0, 0.0]);
        let inside = s.point(vec![0.2, 0.1]).unwrap();
        assert_eq!(s.project(&ball, &inside).unwrap(), inside);

        let bad = ConvexSet::Ball { center: x.clone(), radius: -1.0 };
        assert!(matches!(s.project(&bad, &far), Err(Error::Validation(_))));
    }

    #[test]
    fn spd_segment_projection_matches_grid_minimum() {
        let s = Space::spd(2).unwrap();
        let a = s.point(vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = s.point(vec![4.0, 1.0, 1.0, 2.0]).unwrap();
        let x = s.point(vec![1.0, -0.3, -0.3, 3.0]).unwrap();
        let p = s.project(&ConvexSet::Segment(a.clone(), b.clone()), &x).unwrap();
        let dp = s.distance(&x, &p).unwrap();
        let grid_min = (0..=2000)
            .map(|k| s.dist(&x, &s.geo(&a, &b, k as f64 / 2000.0)))
            .fold(f64::INFINITY, f64::min);
        assert!(dp <= grid_min + 1e-12);
        assert!(grid_min - dp < 1e-6);
    }

    #[test]
    fn rays() {
        let s = e2();
        let o = s.base_point();
        let r = s.ray(&o, RayDirection::Vector(vec![2.0, 0.0])).unwrap();
        assert_eq!(s.ray_point(&r, 3.0).unwrap().coords().unwrap(), &[3.0, 0.0]);
        assert_eq!(s.ray_point(&r, 0.0).unwrap(), o);
        assert!(s.ray(&o, RayDirection::Vector(vec![0.0, 0.0])).is_err());

        let h = Space::hyperbolic(2).unwrap();
        let o = h.base_point();
        let r = h.ray(&o, RayDirection::Vector(vec![0.0, 1.0, 0.0])).unwrap();
        let p = h.ray_point(&r, 1.0).unwrap();
        let c = p.coords().unwrap();
        assert_abs_diff_eq!(c[0], 1f64.cosh(), epsilon = 1e-14);
        assert_abs_diff_eq!(c[1], 1f64.sinh(), epsilon = 1e-14);
    }
}
