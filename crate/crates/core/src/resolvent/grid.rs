//! Exhaustive grid search for resolvents on metric trees.
//!
//! `F` is convex along every edge, so the grid minimum on each edge brackets
//! that edge's minimizer between the neighbouring grid points, where a
//! golden-section search finishes the job.

use crate::error::{Error, Result};
use crate::functionals::Functional;
use crate::geometry::Point;

use super::{objective, ResolventOptions, ResolventResult, Strategy};

const CELLS_PER_EDGE: f64 = 1e4;
const GOLDEN: f64 = 0.618_033_988_749_894_9;

pub(super) fn minimize(f: &Functional, x: &Point, lambda: f64, opts: &ResolventOptions) -> Result<ResolventResult> {
    let space = f.space();
    let tree = space
        .metric_tree()
        .ok_or_else(|| Error::Strategy(format!("grid search needs a metric tree, not {}", space.name())))?;
    let value = |e: usize, s: f64| -> Result<f64> {
        objective(f, x, lambda, &space.locus(e, s).expect("offset within edge"))
    };

    let mut evaluations = 0usize;
    let mut best: Option<(f64, usize, f64, f64)> = None; // value, edge, offset, residual
    for e in 0..tree.edge_count() {
        let len = tree.edge(e).length;
        let h_target = opts.grid_resolution.unwrap_or(len / CELLS_PER_EDGE);
        let cells = (len / h_target).ceil().max(1.0) as usize;
        let h = len / cells as f64;
        let offset = |k: usize| if k == cells { len } else { k as f64 * h };
        let mut values = Vec::with_capacity(cells + 1);
        for k in 0..=cells {
            values.push(value(e, offset(k))?);
        }
        evaluations += cells + 1;
        let (k, &vk) = values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("at least two grid points");
        if !vk.is_finite() {
            continue;
        }
        let lo = offset(k.saturating_sub(1));
        let hi = offset((k + 1).min(cells));
        let (s, v, width, n) = golden(|s| value(e, s), lo, hi, offset(k))?;
        evaluations += n;
        let (s, v) = if v < vk { (s, v) } else { (offset(k), vk) };
        // secant slopes next to the grid minimum bound the slope in the bracket
        let slope = [k.checked_sub(1), (k < cells).then_some(k + 1)]
            .into_iter()
            .flatten()
            .map(|j| values[j])
            .filter(|v| v.is_finite())
            .map(|vj| (vj - vk).abs() / h)
            .fold(0.0, f64::max);
        let residual = 2.0 * slope * width;
        let better = match best {
            None => true,
            Some((bv, ..)) => v < bv - 1e-15 * bv.abs().max(1.0),
        };
        if better {
            best = Some((v, e, s, residual));
        }
    }
    let (v, e, s, residual) =
        best.ok_or_else(|| Error::Infeasible("objective is infinite on every grid point".into()))?;
    Ok(ResolventResult {
        point: space.locus(e, s)?,
        objective_value: v,
        strategy_used: Strategy::GridExhaustive,
        inner_iterations: evaluations,
        residual,
    })
}

/// Golden-section search for a convex, possibly extended-valued function on
/// `[a, b]`, where `anchor` is a point with finite value. Returns the best
/// point, its value, the final bracket width and the evaluation count.
fn golden(
    mut f: impl FnMut(f64) -> Result<f64>,
    mut a: f64,
    mut b: f64,
    anchor: f64,
) -> Result<(f64, f64, f64, usize)> {
    let mut x1 = b - GOLDEN * (b - a);
    let mut x2 = a + GOLDEN * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    let mut n = 2;
    let scale = (b - a).max(1e-300);
    while b - a > 1e-13 * scale.max(a.abs().max(b.abs())) && n < 200 {
        let go_left = if f1.is_infinite() && f2.is_infinite() {
            // the finite region lies on the anchor's side of both probes
            if anchor < x1 {
                true
            } else if anchor > x2 {
                false
            } else {
                a = x1;
                b = x2;
                x1 = b - GOLDEN * (b - a);
                x2 = a + GOLDEN * (b - a);
                f1 = f(x1)?;
                f2 = f(x2)?;
                n += 2;
                continue;
            }
        } else {
            f1 <= f2
        };
        if go_left {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLDEN * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN * (b - a);
            f2 = f(x2)?;
        }
        n += 1;
    }
    let (s, v) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    Ok((s, v, b - a, n))
}
