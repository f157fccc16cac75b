//! The gradient-flow semigroup `T_λ x = lim_n (J_{λ/n})^n x`.
//!
//! The limit is approximated by doubling `n` until consecutive approximants
//! agree. The error of `(J_{λ/n})^n x` decays like `1/n`, so plain doubling
//! alone needs millions of resolvent steps for an `1e-8` gap; once the gaps
//! halve steadily, each pair of approximants is also combined by geodesic
//! Richardson extrapolation (`z = 2 y_{2n} - y_n` in Euclidean space), whose
//! error decays like `1/n^2`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::certificate::{CertificateReport, Verdict};
use crate::error::{Error, Result};
use crate::functionals::Functional;
use crate::geometry::{Point, Space};
use crate::par::{self, Execution};
use crate::ppa;
use crate::resolvent::ResolventOptions;

/// Ratio window of consecutive plain gaps that marks the `1/n` regime.
const FIRST_ORDER_RATIO: (f64, f64) = (0.35, 0.65);
/// Smallest inner tolerance requested from the resolvent.
const INNER_FLOOR: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowOptions {
    pub doubling_tolerance: f64,
    pub max_doublings: usize,
    pub initial_n: usize,
    pub extrapolate: bool,
    pub resolvent: ResolventOptions,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            doubling_tolerance: 1e-8,
            max_doublings: 24,
            initial_n: 1,
            extrapolate: true,
            resolvent: ResolventOptions::default(),
            execution: Execution::default(),
        }
    }
}

impl FlowOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.doubling_tolerance.is_finite() && self.doubling_tolerance > 0.0) {
            return Err(Error::validation("doubling_tolerance must be positive"));
        }
        if self.max_doublings == 0 {
            return Err(Error::validation("max_doublings must be at least 1"));
        }
        if self.initial_n == 0 {
            return Err(Error::validation("initial_n must be at least 1"));
        }
        if self.max_doublings >= 40 || (self.initial_n as u128) << self.max_doublings > 1u128 << 40 {
            return Err(Error::validation("initial_n * 2^max_doublings is too large"));
        }
        self.resolvent.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowResult {
    pub point: Point,
    /// Resolvent steps in the finest approximant used.
    pub n_used: usize,
    pub last_gap: f64,
    pub converged: bool,
    /// Plain doubling gaps `d(y_n, y_{2n})`.
    pub gaps: Vec<f64>,
    pub extrapolated: bool,
}

/// `(J_{λ/n})^n x`.
pub fn resolvent_power(f: &Functional, x: &Point, lambda: f64, n: usize, opts: &ResolventOptions) -> Result<Point> {
    let h = lambda / n as f64;
    let mut y = x.clone();
    for _ in 0..n {
        y = ppa::step(f, &y, h, opts)?.0;
    }
    Ok(y)
}

pub fn flow_apply(f: &Functional, x: &Point, lambda: f64, opts: &FlowOptions) -> Result<FlowResult> {
    let s = f.space();
    s.check(x)?;
    opts.validate()?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::domain(format!("flow time must be finite and >= 0, got {lambda}")));
    }
    if !f.evaluate(x)?.is_finite() {
        return Err(Error::domain("flow needs a starting point in the domain"));
    }
    if lambda == 0.0 {
        return Ok(FlowResult {
            point: x.clone(),
            n_used: 0,
            last_gap: 0.0,
            converged: true,
            gaps: Vec::new(),
            extrapolated: false,
        });
    }
    let tol = opts.doubling_tolerance;
    // resolvents are nonexpansive, so per-step errors of tol/(2n) add up to at most tol/2
    let step_opts = |n: usize| {
        let mut r = opts.resolvent.clone();
        r.inner_tolerance = r.inner_tolerance.min((tol / (2.0 * n as f64)).max(INNER_FLOOR));
        r
    };
    let mut n = opts.initial_n;
    let mut y = resolvent_power(f, x, lambda, n, &step_opts(n))?;
    let mut gaps = Vec::new();
    let mut previous_z: Option<Point> = None;
    let mut best: (f64, Point, bool) = (f64::INFINITY, y.clone(), false);
    for _ in 0..opts.max_doublings {
        let y2 = resolvent_power(f, x, lambda, 2 * n, &step_opts(2 * n))?;
        let gap = s.dist(&y, &y2);
        gaps.push(gap);
        n *= 2;
        log::debug!("flow lambda {lambda}: n {n}, gap {gap:e}");
        if gap <= tol {
            return Ok(FlowResult { point: y2, n_used: n, last_gap: gap, converged: true, gaps, extrapolated: false });
        }
        if gap < best.0 {
            best = (gap, y2.clone(), false);
        }
        let first_order = gaps.len() >= 2 && {
            let r = gap / gaps[gaps.len() - 2];
            r >= FIRST_ORDER_RATIO.0 && r <= FIRST_ORDER_RATIO.1
        };
        let z = if opts.extrapolate && first_order {
            s.extrapolate(&y, &y2).filter(|z| f.eval(z).is_ok_and(|v| v.is_finite()))
        } else {
            None
        };
        if let (Some(z), Some(zp)) = (&z, &previous_z) {
            let zgap = s.dist(zp, z);
            if zgap <= tol {
                return Ok(FlowResult { point: z.clone(), n_used: n, last_gap: zgap, converged: true, gaps, extrapolated: true });
            }
            if zgap < best.0 {
                best = (zgap, z.clone(), true);
            }
        }
        previous_z = z;
        y = y2;
        // two rising gaps in a row: rounding noise now dominates the discretization error
        if let [.., a, b, c] = gaps[..] {
            if c > b && b > a {
                break;
            }
        }
    }
    log::warn!("flow at lambda {lambda} did not converge: best gap {:e}", best.0);
    Ok(FlowResult { point: best.1, n_used: n, last_gap: best.0, converged: false, gaps, extrapolated: best.2 })
}

/// `d(T_{s+t} x, T_s T_t x) <= 3 tol`; inconclusive when a flow did not converge.
pub fn semigroup_certificate(f: &Functional, x: &Point, s: f64, t: f64, opts: &FlowOptions) -> Result<CertificateReport> {
    const NAME: &str = "semigroup";
    let whole = flow_apply(f, x, s + t, opts)?;
    let inner = flow_apply(f, x, t, opts)?;
    let outer = flow_apply(f, &inner.point, s, opts)?;
    let gap = f.space().dist(&whole.point, &outer.point);
    let note = format!(
        "T_(s+t) x = {:?}; T_s T_t x = {:?}; gap {gap:e}",
        whole.point.payload(),
        outer.point.payload()
    );
    if !(whole.converged && inner.converged && outer.converged) {
        return Ok(CertificateReport::with_verdict(NAME, Verdict::Inconclusive, note));
    }
    Ok(CertificateReport::from_residuals(NAME, 3.0 * opts.doubling_tolerance, [(0, gap)]).note(note))
}

/// `d(T_λ x, T_λ y) <= d(x, y) + 3 tol`.
pub fn flow_nonexpansive_certificate(
    f: &Functional,
    x: &Point,
    y: &Point,
    lambda: f64,
    opts: &FlowOptions,
) -> Result<CertificateReport> {
    const NAME: &str = "flow_nonexpansive";
    let tx = flow_apply(f, x, lambda, opts)?;
    let ty = flow_apply(f, y, lambda, opts)?;
    let s = f.space();
    if !(tx.converged && ty.converged) {
        return Ok(CertificateReport::with_verdict(NAME, Verdict::Inconclusive, "a flow did not converge"));
    }
    let residual = s.dist(&tx.point, &ty.point) - s.dist(x, y);
    Ok(CertificateReport::from_residuals(NAME, 3.0 * opts.doubling_tolerance, [(0, residual)]))
}

/// Flow evaluated on a grid of times, with the start as time zero.
#[derive(Clone, Debug)]
pub struct FlowTrace {
    pub space: Space,
    pub start: Point,
    pub lambdas: Vec<f64>,
    pub results: Vec<FlowResult>,
    /// `f(x)` followed by `f(T_λ x)` on the grid.
    pub values: Vec<f64>,
    pub known_minimizer: Option<Point>,
    pub certificates: Vec<CertificateReport>,
}

impl FlowTrace {
    /// `x` followed by `T_λ x` on the grid.
    pub fn points(&self) -> Vec<&Point> {
        std::iter::once(&self.start).chain(self.results.iter().map(|r| &r.point)).collect()
    }

    pub fn certificate(&self, name: &str) -> Option<&CertificateReport> {
        self.certificates.iter().find(|c| c.name == name)
    }

    /// Writes `lambda,f_value,step_distance,dist_to_minimizer,fejer_residual,rate_bound`,
    /// with a first row at `lambda = 0`. The rate bound is `d(x, c)^2 / λ`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::validation(format!("writing flow CSV: {e}"));
        w.write_record(["lambda", "f_value", "step_distance", "dist_to_minimizer", "fejer_residual", "rate_bound"])
            .map_err(io)?;
        let points = self.points();
        let dists: Option<Vec<f64>> = self
            .known_minimizer
            .as_ref()
            .map(|c| points.iter().map(|p| self.space.dist(p, c)).collect());
        for i in 0..points.len() {
            let empty = String::new;
            let row = if i == 0 {
                vec![
                    "0".to_string(),
                    self.values[0].to_string(),
                    empty(),
                    dists.as_ref().map(|d| d[0].to_string()).unwrap_or_default(),
                    empty(),
                    empty(),
                ]
            } else {
                let lambda = self.lambdas[i - 1];
                let mut row = vec![
                    lambda.to_string(),
                    self.values[i].to_string(),
                    self.space.dist(points[i - 1], points[i]).to_string(),
                ];
                match &dists {
                    Some(d) => row.extend([
                        d[i].to_string(),
                        (d[i] - d[i - 1]).to_string(),
                        (d[0] * d[0] / lambda).to_string(),
                    ]),
                    None => row.extend([empty(), empty(), empty()]),
                }
                row
            };
            w.write_record(&row).map_err(io)?;
        }
        w.flush().map_err(|e| Error::validation(format!("writing flow CSV: {e}")))?;
        Ok(())
    }

    pub fn csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV is UTF-8")
    }
}

/// Evaluates `T_λ x` for each `λ` of an increasing positive grid. Grid points
/// are independent and may be computed in parallel; results keep grid order.
pub fn flow_convergence_run(f: &Functional, x: &Point, grid: &[f64], opts: &FlowOptions) -> Result<FlowTrace> {
    let s = f.space().clone();
    s.check(x)?;
    if grid.is_empty() {
        return Err(Error::validation("lambda grid is empty"));
    }
    if grid.iter().any(|l| !(l.is_finite() && *l > 0.0)) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::validation("lambda grid must be positive and strictly increasing"));
    }
    let results: Vec<FlowResult> = par::map_slice(opts.execution, grid, |&l| flow_apply(f, x, l, opts))
        .into_iter()
        .collect::<Result<_>>()?;
    let mut values = vec![f.evaluate(x)?];
    for r in &results {
        values.push(f.eval(&r.point)?);
    }
    let slack = 3.0 * opts.doubling_tolerance;
    let mut certificates = vec![CertificateReport::from_residuals(
        "flow_value_monotone",
        slack,
        (1..values.len()).map(|i| (i, values[i] - values[i - 1])),
    )];
    let known_minimizer = f.known_minimizer().cloned();
    match &known_minimizer {
        Some(c) => {
            let d: Vec<f64> = std::iter::once(x)
                .chain(results.iter().map(|r| &r.point))
                .map(|p| s.dist(p, c))
                .collect();
            certificates.push(CertificateReport::from_residuals(
                "flow_fejer",
                slack,
                (1..d.len()).map(|i| (i, d[i] - d[i - 1])),
            ));
        }
        None => certificates.push(CertificateReport::skipped("flow_fejer", "no known minimizer")),
    }
    if results.iter().any(|r| !r.converged) {
        certificates.push(CertificateReport::with_verdict(
            "flow_convergence",
            Verdict::Inconclusive,
            "some grid points did not converge",
        ));
    }
    Ok(FlowTrace {
        space: s,
        start: x.clone(),
        lambdas: grid.to_vec(),
        results,
        values,
        known_minimizer,
        certificates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ppa::{run_ppa, StepSchedule, StopRule};
    use approx::assert_abs_diff_eq;

    fn quadratic() -> (Space, Functional) {
        let s = Space::euclidean(1).unwrap();
        let f = Functional::squared_distance(&s, s.point(vec![0.0]).unwrap(), 1.0).unwrap();
        (s, f)
    }

    #[test]
    fn identity_at_time_zero() {
        let (s, f) = quadratic();
        let x = s.point(vec![0.1 + 0.2]).unwrap();
        assert_eq!(flow_apply(&f, &x, 0.0, &FlowOptions::default()).unwrap().point, x);
    }

    #[test]
    fn quadratic_flow_is_exponential_decay() {
        let (s, f) = quadratic();
        let x = s.point(vec![1.0]).unwrap();
        for lambda in [0.5, 1.0, 2.0] {
            let r = flow_apply(&f, &x, lambda, &FlowOptions::default()).unwrap();
            assert!(r.converged);
            assert!((r.point.coords().unwrap()[0] - (-lambda).exp()).abs() <= 1e-8, "lambda {lambda}");
        }
    }

    #[test]
    fn plain_gaps_halve() {
        let (s, f) = quadratic();
        let x = s.point(vec![1.0]).unwrap();
        let opts = FlowOptions { extrapolate: false, max_doublings: 14, ..FlowOptions::default() };
        let r = flow_apply(&f, &x, 1.0, &opts).unwrap();
        assert!(!r.converged);
        for w in r.gaps.windows(2) {
            if w[0] < 1e-3 {
                assert!(w[1] / w[0] <= 0.6);
            }
        }
    }

    #[test]
    fn zero_functional_flow_is_identity() {
        let (s, _) = quadratic();
        let f = Functional::zero(&s);
        let x = s.point(vec![3.0]).unwrap();
        let r = flow_apply(&f, &x, 5.0, &FlowOptions::default()).unwrap();
        assert_eq!(r.point, x);
        let c = semigroup_certificate(&f, &x, 1.0, 2.0, &FlowOptions::default()).unwrap();
        assert_eq!(c.worst_residual, 0.0);
    }

    #[test]
    fn ppa_with_small_steps_is_the_resolvent_power() {
        let (s, f) = quadratic();
        let x = s.point(vec![1.7]).unwrap();
        let n = 16;
        let p = resolvent_power(&f, &x, 1.0, n, &ResolventOptions::default()).unwrap();
        let t = run_ppa(
            &f,
            &x,
            &StepSchedule::constant(1.0 / n as f64).unwrap(),
            &StopRule::iterations(n),
            &ResolventOptions::default(),
        )
        .unwrap();
        assert_eq!(*t.final_point(), p);
    }

    #[test]
    fn semigroup_and_contraction() {
        let (s, f) = quadratic();
        let x = s.point(vec![1.0]).unwrap();
        let opts = FlowOptions::default();
        assert!(semigroup_certificate(&f, &x, 0.5, 0.5, &opts).unwrap().passed());
        let y = s.point(vec![2.0]).unwrap();
        let c = flow_nonexpansive_certificate(&f, &x, &y, 1.0, &opts).unwrap();
        assert!(c.passed());
        assert_abs_diff_eq!(c.worst_residual, (-1f64).exp() - 1.0, epsilon = 1e-7);
    }

    #[test]
    fn grid_run_trace() {
        let (s, f) = quadratic();
        let x = s.point(vec![1.0]).unwrap();
        let t = flow_convergence_run(&f, &x, &[1.0, 2.0, 4.0, 8.0], &FlowOptions::default()).unwrap();
        for (r, l) in t.results.iter().zip(&t.lambdas) {
            assert_abs_diff_eq!(r.point.coords().unwrap()[0], (-l).exp(), epsilon = 1e-7);
        }
        assert!(t.certificates.iter().all(|c| c.passed()));
        let csv = t.csv_string();
        assert!(csv.starts_with("lambda,f_value,step_distance,dist_to_minimizer,fejer_residual,rate_bound\n0,0.5,,1,,\n"));
        assert!(flow_convergence_run(&f, &x, &[2.0, 1.0], &FlowOptions::default()).is_err());
    }
}
