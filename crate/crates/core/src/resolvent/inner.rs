//! Inner solver for resolvents of sums.
//!
//! `F(y) = Σ w_i g_i(y) + d(y, x)^2 / (2λ)` is split into its summands, each of
//! which has a closed-form resolvent, and minimized by cyclic proximal passes
//! with steps `η_j = η_0 / j`. When every summand is anchored (a squared
//! distance or a distance to a point), the passes only warm-start a polish:
//! a Weiszfeld-type fixed point iteration on manifolds, or exact edgewise
//! minimization of a piecewise quadratic on trees. Distances to convex sets
//! on manifolds are majorized by distances to the current projection.

use crate::error::{Error, Result};
use crate::functionals::{Functional, FunctionalKind};
use crate::geometry::{ConvexSet, Locus, MetricTree, Point, RayDirection, Space};

use super::{closed_form, has_closed_form, objective, ResolventOptions, ResolventResult, Strategy};

const WARM_PASSES: usize = 5;
/// A distance summand whose anchor is this close counts as "at the anchor".
const AT_ANCHOR: f64 = 1e-12;

/// The summands of `f`, if each has a closed-form resolvent.
pub(crate) fn decompose(f: &Functional) -> Option<Vec<(f64, Functional)>> {
    match f.kind() {
        FunctionalKind::WeightedSum(terms) => terms
            .iter()
            .all(|(_, g)| has_closed_form(g))
            .then(|| terms.clone()),
        _ => has_closed_form(f).then(|| vec![(1.0, f.clone())]),
    }
}

#[derive(Clone, Debug)]
struct Anchor {
    point: Point,
    weight: f64,
    squared: bool,
}

/// Summands as weighted (squared) distances to points. Tree Busemann
/// functions are distances to their leaf up to a constant.
fn anchored(space: &Space, terms: &[(f64, Functional)]) -> Option<Vec<Anchor>> {
    terms
        .iter()
        .map(|(w, g)| match g.kind() {
            FunctionalKind::SquaredDistance { anchor, weight } => Some(Anchor {
                point: anchor.clone(),
                weight: w * weight,
                squared: true,
            }),
            FunctionalKind::Distance { anchor, weight } => Some(Anchor {
                point: anchor.clone(),
                weight: w * weight,
                squared: false,
            }),
            FunctionalKind::Busemann(ray) => match ray.direction() {
                RayDirection::TreeEnd(leaf) => Some(Anchor {
                    point: space.vertex_point(*leaf).ok()?,
                    weight: *w,
                    squared: false,
                }),
                _ => None,
            },
            _ => None,
        })
        .collect()
}

type WithSets = (Vec<Anchor>, Vec<(f64, ConvexSet)>);

/// Anchored summands plus weighted distances to convex sets, when there is
/// at least one of the latter.
fn with_sets(space: &Space, terms: &[(f64, Functional)]) -> Option<WithSets> {
    let mut anchors = Vec::new();
    let mut sets = Vec::new();
    for term in terms {
        match term.1.kind() {
            FunctionalKind::DistanceToSet(set) => sets.push((term.0, set.clone())),
            _ => anchors.extend(anchored(space, std::slice::from_ref(term))?),
        }
    }
    (!sets.is_empty()).then_some((anchors, sets))
}

pub(crate) fn tree_polishable(terms: &[(f64, Functional)]) -> bool {
    terms.first().is_none_or(|(_, g)| anchored(g.space(), terms).is_some())
}

pub fn inner_split_minimize(
    f: &Functional,
    x: &Point,
    lambda: f64,
    opts: &ResolventOptions,
) -> Result<ResolventResult> {
    let space = f.space();
    space.check(x)?;
    opts.validate()?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::domain(format!("resolvent step must be finite and >= 0, got {lambda}")));
    }
    let terms = decompose(f).ok_or_else(|| {
        Error::Strategy(format!("{} is not a sum of closed-form summands", f.label()))
    })?;
    if lambda == 0.0 || terms.is_empty() {
        return Ok(ResolventResult {
            point: x.clone(),
            objective_value: if lambda == 0.0 { f.eval(x)? } else { objective(f, x, lambda, x)? },
            strategy_used: Strategy::InnerSplit,
            inner_iterations: 0,
            residual: 0.0,
        });
    }
    check_disjoint_balls(space, &terms)?;

    let anchors = anchored(space, &terms);
    let sets = match (&anchors, space.metric_tree()) {
        (None, None) => with_sets(space, &terms),
        _ => None,
    };
    let polishing = anchors.is_some() || sets.is_some();
    let budget = opts.max_inner_iterations;
    let warm = if polishing { WARM_PASSES.min(budget) } else { budget };

    let eta0 = lambda;
    let mut y = x.clone();
    let mut best = (objective(f, x, lambda, &y)?, y.clone());
    let mut passes = 0;
    let mut movement = f64::INFINITY;
    for j in 1..=warm {
        let prev = y.clone();
        let eta = eta0 / j as f64;
        // the quadratic goes first so that a pass ends inside the last constraint
        let t = (eta / lambda) / (1.0 + eta / lambda);
        y = space.geo(&y, x, t);
        for (w, g) in &terms {
            y = closed_form(g, &y, w * eta)?.expect("decomposed summands have closed forms");
        }
        passes = j;
        let value = objective(f, x, lambda, &y)?;
        if value < best.0 {
            best = (value, y.clone());
        }
        movement = space.dist(&prev, &y);
        if !polishing && movement < opts.inner_tolerance {
            break;
        }
    }

    let tol = opts.inner_tolerance;
    let polished = match (anchors, sets) {
        (Some(anchors), _) => Some(match space.metric_tree() {
            Some(tree) => Polish {
                point: polish_tree(space, tree, &anchors, x, lambda),
                residual: 0.0,
                iterations: tree.edge_count(),
                converged: true,
            },
            None => polish_manifold(space, &anchors, x, lambda, best.1.clone(), tol, budget - passes),
        }),
        (None, Some((anchors, sets))) => {
            Some(polish_sets(space, &anchors, &sets, x, lambda, best.1.clone(), tol, budget - passes))
        }
        (None, None) => None,
    };
    if let Some(polished) = polished {
        let value = objective(f, x, lambda, &polished.point)?;
        let result = ResolventResult {
            point: polished.point,
            objective_value: value,
            strategy_used: Strategy::InnerSplit,
            inner_iterations: passes + polished.iterations,
            residual: polished.residual,
        };
        if polished.converged {
            return Ok(result);
        }
        return Err(Error::Solver {
            message: format!(
                "inner solver stopped after {} iterations above tolerance",
                result.inner_iterations
            ),
            best: Some(Box::new(result.point)),
            residual: result.residual,
        });
    }

    if !best.0.is_finite() {
        return Err(Error::Infeasible(
            "no iterate reached the domain of the objective".into(),
        ));
    }
    let residual = movement * lipschitz_estimate(space, &terms, x, lambda, &best.1);
    if movement < opts.inner_tolerance {
        return Ok(ResolventResult {
            point: y.clone(),
            objective_value: objective(f, x, lambda, &y)?,
            strategy_used: Strategy::InnerSplit,
            inner_iterations: passes,
            residual,
        });
    }
    Err(Error::Solver {
        message: format!("cyclic passes did not settle within {passes} passes (movement {movement:e})"),
        best: Some(Box::new(best.1)),
        residual,
    })
}

/// Lipschitz bound for `F` near `y`, used to turn pass movement into a gap.
fn lipschitz_estimate(space: &Space, terms: &[(f64, Functional)], x: &Point, lambda: f64, y: &Point) -> f64 {
    let mut l = space.dist(y, x) / lambda;
    for (w, g) in terms {
        l += w * match g.kind() {
            FunctionalKind::SquaredDistance { anchor, weight } => weight * space.dist(y, anchor),
            FunctionalKind::Indicator(_) => 0.0,
            _ => g.lipschitz().unwrap_or(1.0),
        };
    }
    l.max(1.0)
}

/// Two indicator balls that cannot meet make the problem infeasible.
fn check_disjoint_balls(space: &Space, terms: &[(f64, Functional)]) -> Result<()> {
    let balls: Vec<(&Point, f64)> = terms
        .iter()
        .filter_map(|(_, g)| match g.kind() {
            FunctionalKind::Indicator(ConvexSet::Ball { center, radius }) => Some((center, *radius)),
            _ => None,
        })
        .collect();
    for (i, (c1, r1)) in balls.iter().enumerate() {
        for (c2, r2) in &balls[i + 1..] {
            if space.dist(c1, c2) > r1 + r2 + space.tolerance() {
                return Err(Error::Infeasible("indicator balls do not intersect".into()));
            }
        }
    }
    Ok(())
}

struct Polish {
    point: Point,
    residual: f64,
    iterations: usize,
    converged: bool,
}

fn anchored_value(space: &Space, anchors: &[Anchor], x: &Point, lambda: f64, y: &Point) -> f64 {
    let dx = space.dist(y, x);
    anchors.iter().fold(dx * dx / (2.0 * lambda), |acc, a| {
        let d = space.dist(y, &a.point);
        acc + if a.squared { 0.5 * a.weight * d * d } else { a.weight * d }
    })
}

/// Gradient data of `F` at `y`. Distance summands anchored at `y` contribute
/// a subgradient ball of radius `stuck` instead of a gradient.
struct Gradient {
    g: crate::geometry::Tangent,
    norm: f64,
    stuck: f64,
    /// Sum of the Weiszfeld coefficients.
    coefficient: f64,
    nearest: Option<(usize, f64)>,
}

fn gradient(space: &Space, anchors: &[Anchor], x: &Point, lambda: f64, y: &Point, skip: Option<usize>) -> Gradient {
    let vx = space.log_map(y, x).expect("manifold backend");
    let mut g = vx.scale(-1.0 / lambda);
    let mut coefficient = 1.0 / lambda;
    let mut stuck = 0.0;
    let mut nearest: Option<(usize, f64)> = None;
    for (i, a) in anchors.iter().enumerate() {
        if Some(i) == skip {
            continue;
        }
        let v = space.log_map(y, &a.point).expect("manifold backend");
        if a.squared {
            g.add_scaled(-a.weight, &v);
            coefficient += a.weight;
            continue;
        }
        let d = space.tangent_norm(&v);
        if d <= AT_ANCHOR {
            stuck += a.weight;
        } else {
            g.add_scaled(-a.weight / d, &v);
            coefficient += a.weight / d;
            if nearest.is_none_or(|(_, best)| d < best) {
                nearest = Some((i, d));
            }
        }
    }
    let norm = space.tangent_norm(&g);
    Gradient { g, norm, stuck, coefficient, nearest }
}

fn polish_manifold(
    space: &Space,
    anchors: &[Anchor],
    x: &Point,
    lambda: f64,
    start: Point,
    tol: f64,
    budget: usize,
) -> Polish {
    let mu = 1.0 / lambda + anchors.iter().filter(|a| a.squared).map(|a| a.weight).sum::<f64>();
    let mut y = start;
    let mut fy = anchored_value(space, anchors, x, lambda, &y);
    let mut residual = f64::INFINITY;
    for it in 0..budget {
        let grad = gradient(space, anchors, x, lambda, &y, None);
        // norm of the smallest element of the subdifferential
        let effective = (grad.norm - grad.stuck).max(0.0);
        residual = effective * effective / (2.0 * mu);
        if effective / mu <= tol {
            return Polish { point: y, residual, iterations: it, converged: true };
        }
        if let Some((k, _)) = grad.nearest {
            let at = &anchors[k].point;
            let there = gradient(space, anchors, x, lambda, at, Some(k));
            // same test as above, with the anchor's own ball included
            let excess = (there.norm - there.stuck - anchors[k].weight).max(0.0);
            if excess / mu <= tol {
                let residual = excess * excess / (2.0 * mu);
                return Polish { point: at.clone(), residual, iterations: it + 1, converged: true };
            }
        }
        let shrink = if grad.stuck > 0.0 { 1.0 - grad.stuck / grad.norm } else { 1.0 };
        let dir = grad.g.scale(-shrink / grad.coefficient);
        let mut accepted = false;
        let mut step = 1.0;
        // below this band F cannot tell points apart; the subgradient still can
        let band = 8.0 * f64::EPSILON * fy.abs().max(1.0);
        for _ in 0..40 {
            let candidate = space.exp_map(&y, &dir.scale(step));
            let fc = anchored_value(space, anchors, x, lambda, &candidate);
            let better = fc < fy - band
                || fc <= fy + band && {
                    let g = gradient(space, anchors, x, lambda, &candidate, None);
                    (g.norm - g.stuck).max(0.0) < effective
                };
            if better {
                y = candidate;
                fy = fc;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Polish { point: y, residual, iterations: it + 1, converged: residual <= tol };
        }
    }
    let grad = gradient(space, anchors, x, lambda, &y, None);
    let effective = (grad.norm - grad.stuck).max(0.0);
    residual = residual.min(effective * effective / (2.0 * mu));
    Polish { point: y, residual, iterations: budget, converged: residual <= tol }
}

/// Majorizes each `w d(., C)` by `w d(., P_C(y_k))`, which is tight at `y_k`,
/// and polishes the anchored surrogate. An iterate inside a set instead
/// minimizes the other summands over that set by projected gradient steps,
/// and leaves it when they pull harder than `w`.
#[allow(clippy::too_many_arguments)]
fn polish_sets(
    space: &Space,
    anchors: &[Anchor],
    sets: &[(f64, ConvexSet)],
    x: &Point,
    lambda: f64,
    start: Point,
    tol: f64,
    budget: usize,
) -> Polish {
    let mu = 1.0 / lambda + anchors.iter().filter(|a| a.squared).map(|a| a.weight).sum::<f64>();
    let mut y = start;
    let mut used = 0;
    let mut residual = f64::INFINITY;
    while used < budget {
        let mut surrogate = anchors.to_vec();
        let mut inside = Vec::new();
        for (w, set) in sets {
            let p = space.project(set, &y).expect("functional sets are validated");
            if space.dist(&p, &y) > AT_ANCHOR {
                surrogate.push(Anchor { point: p, weight: *w, squared: false });
            } else {
                inside.push((*w, set));
            }
        }
        let next = match inside[..] {
            [] => {
                let p = polish_manifold(space, &surrogate, x, lambda, y.clone(), tol, budget - used);
                used += p.iterations.max(1);
                residual = p.residual;
                if !p.converged {
                    return Polish { iterations: used, ..p };
                }
                p.point
            }
            [(w, set)] => {
                let (z, steps) = constrained(space, &surrogate, set, x, lambda, y.clone(), tol, budget - used);
                used += steps.max(1);
                let grad = gradient(space, &surrogate, x, lambda, &z, None);
                let excess = (grad.norm - grad.stuck - w).max(0.0);
                residual = excess * excess / (2.0 * mu);
                if excess / mu > tol {
                    space.exp_map(&z, &grad.g.scale(-excess / (grad.norm * grad.coefficient)))
                } else {
                    z
                }
            }
            _ => return Polish { point: y, residual, iterations: used, converged: false },
        };
        if space.dist(&next, &y) <= tol {
            return Polish { point: next, residual, iterations: used, converged: true };
        }
        y = next;
    }
    Polish { point: y, residual, iterations: used, converged: false }
}

/// Projected gradient descent of the anchored objective over `set`, with
/// backtracking from the step `1 / L` of the squared terms.
#[allow(clippy::too_many_arguments)]
fn constrained(
    space: &Space,
    anchors: &[Anchor],
    set: &ConvexSet,
    x: &Point,
    lambda: f64,
    start: Point,
    tol: f64,
    budget: usize,
) -> (Point, usize) {
    let l = 1.0 / lambda + anchors.iter().filter(|a| a.squared).map(|a| a.weight).sum::<f64>();
    let mut y = space.project(set, &start).expect("functional sets are validated");
    let mut fy = anchored_value(space, anchors, x, lambda, &y);
    for it in 0..budget {
        let grad = gradient(space, anchors, x, lambda, &y, None);
        let mut step = 1.0 / l;
        let mut next = y.clone();
        for _ in 0..40 {
            let trial = space.exp_map(&y, &grad.g.scale(-step));
            next = space.project(set, &trial).expect("functional sets are validated");
            if anchored_value(space, anchors, x, lambda, &next) <= fy {
                break;
            }
            step *= 0.5;
        }
        if space.dist(&next, &y) <= tol {
            return (next, it + 1);
        }
        fy = anchored_value(space, anchors, x, lambda, &next);
        y = next;
    }
    (y, budget)
}

/// Restriction of `d(., a)` to an edge, as a function of the offset `s`.
enum EdgeDistance {
    /// `|s - o|` for an anchor inside the edge.
    Kink(f64),
    /// `alpha + beta s`.
    Linear(f64, f64),
}

/// Exact minimizer of `F` over the tree: on each edge `F` is a convex
/// piecewise quadratic in the offset with breakpoints at anchors.
fn polish_tree(space: &Space, tree: &MetricTree, anchors: &[Anchor], x: &Point, lambda: f64) -> Point {
    let mut all: Vec<(Locus, f64, bool)> = anchors
        .iter()
        .map(|a| (a.point.locus().expect("tree point"), a.weight, a.squared))
        .collect();
    all.push((x.locus().expect("tree point"), 1.0 / lambda, true));

    let mut best: Option<(f64, Point)> = None;
    for e in 0..tree.edge_count() {
        let edge = tree.edge(e);
        let len = edge.length;
        let reps: Vec<EdgeDistance> = all
            .iter()
            .map(|(l, _, _)| {
                if l.edge == e && l.offset > 0.0 && l.offset < len {
                    EdgeDistance::Kink(l.offset)
                } else {
                    let du = tree.distance_to_vertex(l, edge.u);
                    let dv = tree.distance_to_vertex(l, edge.v);
                    if du <= dv {
                        EdgeDistance::Linear(du, 1.0)
                    } else {
                        EdgeDistance::Linear(dv + len, -1.0)
                    }
                }
            })
            .collect();
        let mut breaks = vec![0.0, len];
        breaks.extend(reps.iter().filter_map(|r| match r {
            EdgeDistance::Kink(o) => Some(*o),
            _ => None,
        }));
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        for w in breaks.windows(2) {
            let (s0, s1) = (w[0], w[1]);
            let mid = 0.5 * (s0 + s1);
            let (mut qa, mut qb) = (0.0, 0.0);
            for (rep, (_, weight, squared)) in reps.iter().zip(&all) {
                let (alpha, beta) = match rep {
                    EdgeDistance::Kink(o) if mid >= *o => (-o, 1.0),
                    EdgeDistance::Kink(o) => (*o, -1.0),
                    EdgeDistance::Linear(a, b) => (*a, *b),
                };
                if *squared {
                    qa += 0.5 * weight * beta * beta;
                    qb += weight * alpha * beta;
                } else {
                    qb += weight * beta;
                }
            }
            let s = if qa > 0.0 {
                (-qb / (2.0 * qa)).clamp(s0, s1)
            } else if qb > 0.0 {
                s0
            } else {
                s1
            };
            let p = space.locus(e, s).expect("offset within edge");
            let v = anchored_value(space, anchors, x, lambda, &p);
            let better = match &best {
                None => true,
                Some((bv, _)) => v < bv - 1e-15 * bv.abs().max(1.0),
            };
            if better {
                best = Some((v, p));
            }
        }
    }
    best.expect("tree has an edge").1
}
