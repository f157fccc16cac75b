//! Moreau-Yosida resolvents `J_λ(x) = argmin_y f(y) + d(y, x)^2 / (2λ)`.

use serde::{Deserialize, Serialize};

use crate::certificate::CertificateReport;
use crate::error::{Error, Result};
use crate::functionals::{Functional, FunctionalKind};
use crate::geometry::{hyperbolic, Payload, Point, RayDirection, Space};

mod grid;
mod inner;

pub use inner::inner_split_minimize;

/// Distance-type resolvents saturate analytically beyond this step.
pub const SATURATION_LAMBDA: f64 = 1e12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Closed form, then the inner solver, then the tree grid.
    #[default]
    Auto,
    Analytic,
    InnerSplit,
    GridExhaustive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResolventOptions {
    pub strategy: Strategy,
    pub inner_tolerance: f64,
    pub max_inner_iterations: usize,
    /// Grid spacing on trees; `None` means edge length / 10^4 per edge.
    pub grid_resolution: Option<f64>,
}

impl Default for ResolventOptions {
    fn default() -> Self {
        ResolventOptions {
            strategy: Strategy::Auto,
            inner_tolerance: 1e-10,
            max_inner_iterations: 10_000,
            grid_resolution: None,
        }
    }
}

impl ResolventOptions {
    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.inner_tolerance.is_finite() && self.inner_tolerance > 0.0) {
            return Err(Error::validation("inner_tolerance must be positive"));
        }
        if self.max_inner_iterations == 0 {
            return Err(Error::validation("max_inner_iterations must be at least 1"));
        }
        if let Some(r) = self.grid_resolution {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::validation("grid_resolution must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResolventResult {
    pub point: Point,
    /// `f(y) + d(y, x)^2 / (2λ)` at the returned point.
    pub objective_value: f64,
    pub strategy_used: Strategy,
    pub inner_iterations: usize,
    /// Bound on the objective gap to the true minimum.
    pub residual: f64,
}

/// `F(y) = f(y) + d(y, x)^2 / (2λ)`.
pub(crate) fn objective(f: &Functional, x: &Point, lambda: f64, y: &Point) -> Result<f64> {
    let d = f.space().dist(x, y);
    Ok(f.eval(y)? + d * d / (2.0 * lambda))
}

pub fn resolve(f: &Functional, x: &Point, lambda: f64, opts: &ResolventOptions) -> Result<ResolventResult> {
    let space = f.space();
    space.check(x)?;
    opts.validate()?;
    if lambda.is_nan() || lambda < 0.0 || lambda.is_infinite() {
        return Err(Error::domain(format!("resolvent step must be finite and >= 0, got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(ResolventResult {
            point: x.clone(),
            objective_value: f.eval(x)?,
            strategy_used: Strategy::Analytic,
            inner_iterations: 0,
            residual: 0.0,
        });
    }
    let analytic = |strict: bool| -> Result<Option<ResolventResult>> {
        match closed_form(f, x, lambda)? {
            Some(point) => Ok(Some(ResolventResult {
                objective_value: objective(f, x, lambda, &point)?,
                point,
                strategy_used: Strategy::Analytic,
                inner_iterations: 0,
                residual: 0.0,
            })),
            None if strict => Err(Error::Strategy(format!(
                "no closed-form resolvent for {}",
                f.label()
            ))),
            None => Ok(None),
        }
    };
    match opts.strategy {
        Strategy::Analytic => Ok(analytic(true)?.expect("strict")),
        Strategy::InnerSplit => inner_split_minimize(f, x, lambda, opts),
        Strategy::GridExhaustive => grid::minimize(f, x, lambda, opts),
        Strategy::Auto => {
            if let Some(r) = analytic(false)? {
                return Ok(r);
            }
            let tree = space.metric_tree().is_some();
            match inner::decompose(f) {
                Some(terms) if !tree || inner::tree_polishable(&terms) => {
                    inner_split_minimize(f, x, lambda, opts)
                }
                _ if tree => grid::minimize(f, x, lambda, opts),
                _ => Err(Error::Strategy(format!(
                    "{} has neither a closed-form resolvent nor a decomposition",
                    f.label()
                ))),
            }
        }
    }
}

/// Whether `f` has a closed-form resolvent for every step.
pub(crate) fn has_closed_form(f: &Functional) -> bool {
    match f.kind() {
        FunctionalKind::Displacement(_) => false,
        FunctionalKind::WeightedSum(terms) => match terms.as_slice() {
            [] => true,
            [(_, g)] => has_closed_form(g),
            _ => false,
        },
        _ => true,
    }
}

/// Closed-form resolvent, or `None` when `f` has none. Requires `lambda > 0`.
pub(crate) fn closed_form(f: &Functional, x: &Point, lambda: f64) -> Result<Option<Point>> {
    let s = f.space();
    Ok(Some(match f.kind() {
        FunctionalKind::SquaredDistance { anchor, weight } => {
            let wl = weight * lambda;
            s.geo(x, anchor, wl / (1.0 + wl))
        }
        FunctionalKind::Distance { anchor, weight } => shrink_toward(s, x, anchor, weight * lambda),
        FunctionalKind::Indicator(set) => s.project(set, x)?,
        FunctionalKind::DistanceToSet(set) => {
            let p = s.project(set, x)?;
            shrink_toward(s, x, &p, lambda)
        }
        FunctionalKind::Busemann(ray) => busemann_step(s, ray.origin(), ray.direction(), x, lambda),
        FunctionalKind::Displacement(_) => return Ok(None),
        FunctionalKind::WeightedSum(terms) => match terms.as_slice() {
            [] => x.clone(),
            [(w, g)] => return closed_form(g, x, w * lambda),
            _ => return Ok(None),
        },
    }))
}

/// Moves from `x` toward `target` by `min(step, d(x, target))`.
fn shrink_toward(s: &Space, x: &Point, target: &Point, step: f64) -> Point {
    let d = s.dist(x, target);
    if d == 0.0 {
        x.clone()
    } else if step >= d || step > SATURATION_LAMBDA {
        target.clone()
    } else {
        s.geo(x, target, step / d)
    }
}

/// Moves distance `lambda` along the geodesic from `x` toward the ray's end,
/// the direction in which the Busemann function decreases at unit rate.
fn busemann_step(s: &Space, origin: &Point, dir: &RayDirection, x: &Point, lambda: f64) -> Point {
    let payload = match (origin.payload(), dir, x.payload()) {
        (_, RayDirection::Vector(u), Payload::Coords(p)) => {
            Payload::Coords(p.iter().zip(u).map(|(a, b)| a + lambda * b).collect())
        }
        (Payload::Minkowski(o), RayDirection::Vector(u), Payload::Minkowski(p)) => {
            let ideal: Vec<f64> = o.iter().zip(u).map(|(a, b)| a + b).collect();
            let c = -hyperbolic::minkowski(p, &ideal);
            let (ch, sh) = (lambda.cosh(), lambda.sinh());
            let mut y: Vec<f64> = p
                .iter()
                .zip(&ideal)
                .map(|(pi, ni)| pi * ch + (ni / c - pi) * sh)
                .collect();
            hyperbolic::renormalize(&mut y);
            Payload::Minkowski(y)
        }
        (_, RayDirection::TreeEnd(leaf), Payload::Locus(_)) => {
            let end = s.vertex_point(*leaf).expect("validated leaf");
            return shrink_toward(s, x, &end, lambda);
        }
        _ => unreachable!("Busemann rays are validated at construction"),
    };
    s.point_from_payload(payload)
}

/// Checks `d(J_λ x, J_λ y) <= d(x, y) + 1e-8` on every pair.
pub fn nonexpansiveness_check(
    f: &Functional,
    pairs: &[(Point, Point)],
    lambda: f64,
    opts: &ResolventOptions,
) -> Result<CertificateReport> {
    let s = f.space();
    let mut residuals = Vec::with_capacity(pairs.len());
    for (i, (x, y)) in pairs.iter().enumerate() {
        let jx = resolve(f, x, lambda, opts)?.point;
        let jy = resolve(f, y, lambda, opts)?.point;
        residuals.push((i, s.distance(&jx, &jy)? - s.distance(x, y)?));
    }
    Ok(CertificateReport::from_residuals(
        "resolvent_nonexpansive",
        1e-8,
        residuals,
    ))
}
