//! The proximal point algorithm `x_n = J_{λ_n}(x_{n-1})` and the
//! inequalities its convergence proof rests on, checked along a run.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::certificate::{CertificateReport, Verdict};
use crate::error::{Error, Result};
use crate::functionals::{Functional, Modulus};
use crate::geometry::{Point, Space};
use crate::resolvent::{resolve, ResolventOptions};

const CERTIFICATE_TOLERANCE: f64 = 1e-9;
/// Pairs checked by the strong-convergence certificate on long runs.
const MAX_PAIRS: usize = 20_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleKind {
    Constant { lambda: f64 },
    /// `λ_n = c / n`.
    Harmonic { c: f64 },
    /// `λ_n = c n^{-p}`, `0 <= p <= 1`.
    Polynomial { c: f64, p: f64 },
    Explicit { lambdas: Vec<f64> },
}

/// Step sizes `λ_1, λ_2, ...`. Convergence needs `Σ λ_n = ∞`, which holds by
/// construction except for explicit lists, which are flagged as unvalidated.
#[derive(Clone, Debug, PartialEq)]
pub struct StepSchedule {
    kind: ScheduleKind,
    divergence_validated: bool,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::validation(format!("{name} must be positive and finite, got {v}")))
    }
}

impl StepSchedule {
    pub fn new(kind: ScheduleKind) -> Result<StepSchedule> {
        let divergence_validated = match &kind {
            ScheduleKind::Constant { lambda } => {
                positive("lambda", *lambda)?;
                true
            }
            ScheduleKind::Harmonic { c } => {
                positive("c", *c)?;
                true
            }
            ScheduleKind::Polynomial { c, p } => {
                positive("c", *c)?;
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::validation(format!("exponent p must be in [0, 1], got {p}")));
                }
                true
            }
            ScheduleKind::Explicit { lambdas } => {
                if lambdas.is_empty() {
                    return Err(Error::validation("explicit schedule is empty"));
                }
                for (i, l) in lambdas.iter().enumerate() {
                    positive(&format!("lambda_{}", i + 1), *l)?;
                }
                log::warn!("explicit step schedule: divergence of the step sum is not checked");
                false
            }
        };
        Ok(StepSchedule { kind, divergence_validated })
    }

    pub fn constant(lambda: f64) -> Result<StepSchedule> {
        StepSchedule::new(ScheduleKind::Constant { lambda })
    }

    pub fn harmonic(c: f64) -> Result<StepSchedule> {
        StepSchedule::new(ScheduleKind::Harmonic { c })
    }

    pub fn polynomial(c: f64, p: f64) -> Result<StepSchedule> {
        StepSchedule::new(ScheduleKind::Polynomial { c, p })
    }

    pub fn explicit(lambdas: Vec<f64>) -> Result<StepSchedule> {
        StepSchedule::new(ScheduleKind::Explicit { lambdas })
    }

    pub fn kind(&self) -> &ScheduleKind {
        &self.kind
    }

    pub fn divergence_validated(&self) -> bool {
        self.divergence_validated
    }

    /// `λ_n` for `n >= 1`; `None` past the end of an explicit list.
    pub fn lambda(&self, n: usize) -> Option<f64> {
        assert!(n >= 1, "steps are numbered from 1");
        let nf = n as f64;
        match &self.kind {
            ScheduleKind::Constant { lambda } => Some(*lambda),
            ScheduleKind::Harmonic { c } => Some(c / nf),
            ScheduleKind::Polynomial { c, p } => Some(c * nf.powf(-p)),
            ScheduleKind::Explicit { lambdas } => lambdas.get(n - 1).copied(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StopRule {
    pub max_iterations: usize,
    pub step_distance_below: Option<f64>,
    /// Needs a known infimum.
    pub value_gap_below: Option<f64>,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            max_iterations: 1000,
            step_distance_below: Some(1e-10),
            value_gap_below: None,
        }
    }
}

impl StopRule {
    /// Exactly `n` iterations.
    pub fn iterations(n: usize) -> StopRule {
        StopRule {
            max_iterations: n,
            step_distance_below: None,
            value_gap_below: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::validation("max_iterations must be at least 1"));
        }
        for (name, v) in [
            ("step_distance_below", self.step_distance_below),
            ("value_gap_below", self.value_gap_below),
        ] {
            if let Some(v) = v {
                positive(name, v)?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIterations,
    StepDistance,
    ValueGap,
    ScheduleExhausted,
}

/// Record of a run: `iterates` and `values` have one more entry than
/// `lambdas`, `step_distances` and `wall_times` (the starting point).
#[derive(Clone, Debug)]
pub struct Trace {
    pub space: Space,
    pub iterates: Vec<Point>,
    pub lambdas: Vec<f64>,
    pub values: Vec<f64>,
    pub step_distances: Vec<f64>,
    /// Resolvent gap bounds per step.
    pub resolvent_residuals: Vec<f64>,
    /// Seconds per step; not part of the CSV output.
    pub wall_times: Vec<f64>,
    pub stop_reason: StopReason,
    pub divergence_validated: bool,
    pub known_minimizer: Option<Point>,
    pub known_infimum: Option<f64>,
    pub certificates: Vec<CertificateReport>,
}

/// One proximal step. Shared with the flow so that `n` PPA steps of size
/// `λ/n` and the resolvent power `(J_{λ/n})^n` agree bit for bit.
pub(crate) fn step(f: &Functional, x: &Point, lambda: f64, opts: &ResolventOptions) -> Result<(Point, f64)> {
    let r = resolve(f, x, lambda, opts)?;
    Ok((r.point, r.residual))
}

pub fn run_ppa(
    f: &Functional,
    x0: &Point,
    schedule: &StepSchedule,
    stop: &StopRule,
    opts: &ResolventOptions,
) -> Result<Trace> {
    let space = f.space().clone();
    space.check(x0)?;
    stop.validate()?;
    opts.validate()?;
    if stop.value_gap_below.is_some() && f.known_infimum().is_none() {
        return Err(Error::validation("value_gap_below needs a known infimum"));
    }
    let mut trace = Trace {
        space: space.clone(),
        iterates: vec![x0.clone()],
        lambdas: Vec::new(),
        values: vec![f.evaluate(x0)?],
        step_distances: Vec::new(),
        resolvent_residuals: Vec::new(),
        wall_times: Vec::new(),
        stop_reason: StopReason::MaxIterations,
        divergence_validated: schedule.divergence_validated(),
        known_minimizer: f.known_minimizer().cloned(),
        known_infimum: f.known_infimum(),
        certificates: Vec::new(),
    };
    let mut x = x0.clone();
    for n in 1..=stop.max_iterations {
        let Some(lambda) = schedule.lambda(n) else {
            trace.stop_reason = StopReason::ScheduleExhausted;
            break;
        };
        let started = Instant::now();
        let (next, residual) = step(f, &x, lambda, opts).map_err(|e| e.at_step(n))?;
        let value = f.eval(&next).map_err(|e| e.at_step(n))?;
        if !value.is_finite() {
            return Err(Error::Infeasible("resolvent step left the domain".into()).at_step(n));
        }
        let moved = space.dist(&x, &next);
        trace.wall_times.push(started.elapsed().as_secs_f64());
        trace.lambdas.push(lambda);
        trace.values.push(value);
        trace.step_distances.push(moved);
        trace.resolvent_residuals.push(residual);
        trace.iterates.push(next.clone());
        x = next;
        log::debug!("ppa step {n}: lambda {lambda}, f {value}, moved {moved:e}");
        if stop.step_distance_below.is_some_and(|t| moved < t) {
            trace.stop_reason = StopReason::StepDistance;
            break;
        }
        if let (Some(t), Some(inf)) = (stop.value_gap_below, trace.known_infimum) {
            if value - inf < t {
                trace.stop_reason = StopReason::ValueGap;
                break;
            }
        }
    }
    trace.certificates = standard_certificates(&trace, &f.uniform_convexity_modulus())?;
    Ok(trace)
}

/// Fejér, rate, estimate and strong-convergence certificates, skipped when
/// the minimizer metadata is missing.
pub fn standard_certificates(trace: &Trace, modulus: &Modulus) -> Result<Vec<CertificateReport>> {
    let mut out = Vec::new();
    match (&trace.known_minimizer, trace.known_infimum) {
        (Some(c), Some(inf)) => {
            out.push(fejer_certificate(trace, c)?);
            out.push(rate_certificate(trace, c, inf)?);
            out.push(estimate_certificate(trace, c, inf)?);
        }
        (Some(c), None) => {
            out.push(fejer_certificate(trace, c)?);
            out.push(CertificateReport::skipped("rate", "no known infimum"));
            out.push(CertificateReport::skipped("estimate", "no known infimum"));
        }
        _ => {
            for name in ["fejer", "rate", "estimate"] {
                out.push(CertificateReport::skipped(name, "no known minimizer"));
            }
        }
    }
    out.push(strong_convergence_certificate(trace, modulus)?);
    Ok(out)
}

impl Trace {
    /// Number of steps taken.
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn final_point(&self) -> &Point {
        self.iterates.last().expect("trace holds the starting point")
    }

    pub fn certificate(&self, name: &str) -> Option<&CertificateReport> {
        self.certificates.iter().find(|c| c.name == name)
    }

    /// `max_{n, m >= k} d(x_n, x_m)`.
    pub fn tail_diameter(&self, k: usize) -> f64 {
        let tail = &self.iterates[k.min(self.iterates.len())..];
        let mut diam: f64 = 0.0;
        for (i, p) in tail.iter().enumerate() {
            for q in &tail[i + 1..] {
                diam = diam.max(self.space.dist(p, q));
            }
        }
        diam
    }

    /// Writes `n,lambda,f_value,step_distance,dist_to_minimizer,fejer_residual,rate_bound`,
    /// starting with the row `n = 0` for the starting point. Columns that need
    /// a minimizer are empty without one.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::validation(format!("writing trace CSV: {e}"));
        w.write_record([
            "n",
            "lambda",
            "f_value",
            "step_distance",
            "dist_to_minimizer",
            "fejer_residual",
            "rate_bound",
        ])
        .map_err(io)?;
        let dists: Option<Vec<f64>> = self
            .known_minimizer
            .as_ref()
            .map(|c| self.iterates.iter().map(|x| self.space.dist(x, c)).collect());
        let mut lambda_sum = 0.0;
        for n in 0..self.iterates.len() {
            let mut row = vec![n.to_string()];
            if n == 0 {
                row.push(String::new());
                row.push(self.values[0].to_string());
                row.push(String::new());
                row.push(dists.as_ref().map(|d| d[0].to_string()).unwrap_or_default());
                row.push(String::new());
                row.push(String::new());
            } else {
                lambda_sum += self.lambdas[n - 1];
                row.push(self.lambdas[n - 1].to_string());
                row.push(self.values[n].to_string());
                row.push(self.step_distances[n - 1].to_string());
                match &dists {
                    Some(d) => {
                        row.push(d[n].to_string());
                        row.push((d[n] - d[n - 1]).to_string());
                        row.push((d[0] * d[0] / lambda_sum).to_string());
                    }
                    None => row.extend([String::new(), String::new(), String::new()]),
                }
            }
            w.write_record(&row).map_err(io)?;
        }
        w.flush().map_err(|e| Error::validation(format!("writing trace CSV: {e}")))?;
        Ok(())
    }

    pub fn csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV is UTF-8")
    }
}

/// `d(x_n, c) <= d(x_{n-1}, c)`.
pub fn fejer_certificate(trace: &Trace, c: &Point) -> Result<CertificateReport> {
    let s = &trace.space;
    s.check(c)?;
    let d: Vec<f64> = trace.iterates.iter().map(|x| s.dist(x, c)).collect();
    Ok(CertificateReport::from_residuals(
        "fejer",
        CERTIFICATE_TOLERANCE,
        (1..d.len()).map(|n| (n, d[n] - d[n - 1])),
    ))
}

/// `f(x_n) - inf f <= d(x_0, c)^2 / Σ_{k<=n} λ_k`.
pub fn rate_certificate(trace: &Trace, c: &Point, inf: f64) -> Result<CertificateReport> {
    let s = &trace.space;
    s.check(c)?;
    let d0 = s.dist(&trace.iterates[0], c);
    let mut sum = 0.0;
    let residuals: Vec<(usize, f64)> = (1..trace.iterates.len())
        .map(|n| {
            sum += trace.lambdas[n - 1];
            (n, trace.values[n] - inf - d0 * d0 / sum)
        })
        .collect();
    Ok(CertificateReport::from_residuals("rate", CERTIFICATE_TOLERANCE, residuals))
}

/// `λ_k (f(x_k) - inf f) <= d(x_{k-1}, c)^2 / 2 - d(x_k, c)^2 / 2`.
pub fn estimate_certificate(trace: &Trace, c: &Point, inf: f64) -> Result<CertificateReport> {
    let s = &trace.space;
    s.check(c)?;
    let d: Vec<f64> = trace.iterates.iter().map(|x| s.dist(x, c)).collect();
    Ok(CertificateReport::from_residuals(
        "estimate",
        CERTIFICATE_TOLERANCE,
        (1..d.len()).map(|k| {
            let lhs = trace.lambdas[k - 1] * (trace.values[k] - inf);
            (k, lhs - 0.5 * (d[k - 1] * d[k - 1] - d[k] * d[k]))
        }),
    ))
}

/// Cauchy witness under uniform convexity with modulus `φ`:
/// `φ(d(x_n, x_m)) / 4 <= (f(x_n) - inf) / 2 + (f(x_m) - inf) / 2`.
/// Inapplicable without a modulus; skipped without a known infimum.
pub fn strong_convergence_certificate(trace: &Trace, modulus: &Modulus) -> Result<CertificateReport> {
    const NAME: &str = "strong_convergence";
    if modulus.is_none() {
        return Ok(CertificateReport::with_verdict(
            NAME,
            Verdict::Inapplicable,
            "objective is not uniformly convex",
        ));
    }
    let Some(inf) = trace.known_infimum else {
        return Ok(CertificateReport::skipped(NAME, "no known infimum"));
    };
    let n = trace.iterates.len();
    let total = n * (n.saturating_sub(1)) / 2;
    let stride = total.div_ceil(MAX_PAIRS).max(1);
    let s = &trace.space;
    let mut residuals = Vec::new();
    let mut index = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            if index.is_multiple_of(stride) {
                let phi = modulus.eval(s.dist(&trace.iterates[i], &trace.iterates[j])).expect("modulus present");
                let rhs = 0.5 * (trace.values[i] - inf) + 0.5 * (trace.values[j] - inf);
                residuals.push((index, 0.25 * phi - rhs));
            }
            index += 1;
        }
    }
    let report = CertificateReport::from_residuals(NAME, CERTIFICATE_TOLERANCE, residuals);
    let k = n.saturating_sub(20);
    let note = format!("tail diameter over the last {} iterates: {:e}", n - k, trace.tail_diameter(k));
    Ok(report.note(note))
}
