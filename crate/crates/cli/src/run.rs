//! `proxcat run`: a PPA run and/or a flow grid from a configuration file.

use std::collections::BTreeMap;
use std::path::PathBuf;

use hadamard_prox::certificate::CertificateReport;
use hadamard_prox::descriptor::PointSpec;
use hadamard_prox::diagnostics::{
    fejer_analysis, weak_convergence_check, weak_lsc_probe, SequenceWindow, WeakConvergenceReport, DEFAULT_WINDOW,
};
use hadamard_prox::flow::{flow_convergence_run, FlowTrace};
use hadamard_prox::functionals::Functional;
use hadamard_prox::geometry::{ConvexSet, Point, Space};
use hadamard_prox::par::Execution;
use hadamard_prox::ppa::{run_ppa, StepSchedule, StopReason, Trace};
use serde::Serialize;

use crate::config::{self, Overrides};
use crate::{core, failing, verdicts, CliError, Outcome, OutputDir};

/// Probe geodesics for the weak-convergence diagnostic.
const PROBES: usize = 16;

#[derive(Serialize)]
struct RunReport {
    config_hash: String,
    seed: u64,
    space: &'static str,
    dimension: usize,
    functional: &'static str,
    known_infimum: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ppa: Option<PpaSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    flow: Option<FlowSection>,
}

#[derive(Serialize)]
struct PpaSection {
    iterations: usize,
    stop_reason: StopReason,
    divergence_validated: bool,
    final_point: PointSpec,
    final_value: f64,
    certificates: Vec<CertificateReport>,
    /// Informational; not part of the exit status.
    diagnostics: Diagnostics,
}

#[derive(Serialize)]
struct Diagnostics {
    window: usize,
    weak_convergence: WeakConvergenceReport,
    fejer_analysis: Option<CertificateReport>,
    weak_lsc: CertificateReport,
}

#[derive(Serialize)]
struct FlowSection {
    lambdas: Vec<f64>,
    points: Vec<PointSpec>,
    values: Vec<f64>,
    steps_used: Vec<usize>,
    converged: Vec<bool>,
    certificates: Vec<CertificateReport>,
}

/// Arguments of `proxcat run`.
#[derive(Clone, Debug)]
pub struct RunArgs {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub overrides: Overrides,
    pub execution: Execution,
}

pub fn run(args: &RunArgs) -> Result<Outcome, CliError> {
    let loaded = config::load(&args.config, &args.overrides)?;
    let cfg = &loaded.config;
    let out = match (&args.out, &cfg.output_dir) {
        (Some(dir), _) => dir.clone(),
        (None, Some(dir)) => loaded.base_dir.join(dir),
        (None, None) => return Err(CliError::Config("no output directory: pass --out or set output_dir".into())),
    };
    let space = cfg.space.build(&loaded.base_dir).map_err(core("geometry"))?;
    let minimizer = cfg.known_minimizer.as_ref().map(|p| p.build(&space)).transpose().map_err(core("geometry"))?;
    let f = cfg
        .functional
        .build(&space)
        .and_then(|f| f.with_metadata(cfg.known_infimum, minimizer))
        .map_err(core("functionals"))?;
    let start = cfg.start.build(&space).map_err(core("geometry"))?;
    log::info!("run {}: {} on {} ({})", loaded.hash, f.label(), space.name(), space.dimension());

    let mut dir = OutputDir::create(&out)?;
    let mut all = BTreeMap::new();
    let mut failures = Vec::new();
    let mut report = RunReport {
        config_hash: loaded.hash.clone(),
        seed: cfg.seed,
        space: space.name(),
        dimension: space.dimension(),
        functional: f.label(),
        known_infimum: f.known_infimum(),
        ppa: None,
        flow: None,
    };

    if let Some(kind) = cfg.schedule.clone().filter(|_| cfg.algorithm.ppa()) {
        let schedule = StepSchedule::new(kind).map_err(core("ppa"))?;
        let trace = run_ppa(&f, &start, &schedule, &cfg.stop, &cfg.resolvent).map_err(core("ppa"))?;
        log::info!("ppa: {} steps, {:?}", trace.len(), trace.stop_reason);
        dir.text("ppa_trace.csv", &trace.csv_string())?;
        let diagnostics = diagnose(&space, &f, &trace, cfg.seed, args.execution)?;
        verdicts("ppa", &trace.certificates, &mut all);
        failures.extend(failing("ppa", &trace.certificates));
        report.ppa = Some(PpaSection {
            iterations: trace.len(),
            stop_reason: trace.stop_reason,
            divergence_validated: trace.divergence_validated,
            final_point: PointSpec::from_point(&space, trace.final_point()),
            final_value: *trace.values.last().expect("trace holds the start"),
            certificates: trace.certificates.clone(),
            diagnostics,
        });
    }

    if let Some(grid) = cfg.lambda_grid.as_ref().filter(|_| cfg.algorithm.flow()) {
        let mut opts = cfg.flow.clone();
        opts.execution = args.execution;
        let trace = flow_convergence_run(&f, &start, grid, &opts).map_err(core("flow"))?;
        log::info!("flow: {} grid points", trace.lambdas.len());
        dir.text("flow_trace.csv", &trace.csv_string())?;
        verdicts("flow", &trace.certificates, &mut all);
        failures.extend(failing("flow", &trace.certificates));
        report.flow = Some(flow_section(&space, &trace));
    }

    dir.json("report.json", &report)?;
    dir.finish("run", loaded.hash, cfg.seed, all, failures)
}

fn diagnose(space: &Space, f: &Functional, trace: &Trace, seed: u64, exec: Execution) -> Result<Diagnostics, CliError> {
    let window = SequenceWindow::tail(trace, DEFAULT_WINDOW.min(trace.iterates.len()), "ppa")
        .map_err(core("diagnostics"))?;
    let x: &Point = trace.final_point();
    let weak_convergence = weak_convergence_check(space, &window, x, PROBES, seed, exec).map_err(core("diagnostics"))?;
    let fejer = trace
        .known_minimizer
        .as_ref()
        .map(|c| fejer_analysis(space, &window, &ConvexSet::Singleton(c.clone())))
        .transpose()
        .map_err(core("diagnostics"))?;
    let weak_lsc = weak_lsc_probe(f, &window, x).map_err(core("diagnostics"))?;
    Ok(Diagnostics { window: window.len(), weak_convergence, fejer_analysis: fejer, weak_lsc })
}

fn flow_section(space: &Space, trace: &FlowTrace) -> FlowSection {
    FlowSection {
        lambdas: trace.lambdas.clone(),
        points: trace.results.iter().map(|r| PointSpec::from_point(space, &r.point)).collect(),
        values: trace.values[1..].to_vec(),
        steps_used: trace.results.iter().map(|r| r.n_used).collect(),
        converged: trace.results.iter().map(|r| r.converged).collect(),
        certificates: trace.certificates.clone(),
    }
}

