//! `proxcat mean`: weighted barycenter (`p = 2`) or median (`p = 1`) of a
//! point list by the proximal point algorithm.

use std::collections::BTreeMap;
use std::path::PathBuf;

use hadamard_prox::certificate::CertificateReport;
use hadamard_prox::descriptor::PointSpec;
use hadamard_prox::functionals::Functional;
use hadamard_prox::geometry::{Point, Space};
use hadamard_prox::ppa::{run_ppa, StepSchedule, StopReason, StopRule};
use hadamard_prox::resolvent::ResolventOptions;
use serde::Serialize;

use crate::{config, core, failing, verdicts, CliError, Outcome, OutputDir, PointsFile, SpaceArgs};

#[derive(Clone, Debug)]
pub struct MeanArgs {
    pub points: PathBuf,
    pub space: SpaceArgs,
    /// Exponent of the distance: 1 for the median, 2 for the mean.
    pub p: u8,
    pub lambda: f64,
    pub budget: usize,
    pub seed: u64,
    pub out: PathBuf,
}

#[derive(Serialize)]
struct MeanReport {
    space: &'static str,
    dimension: usize,
    p: u8,
    lambda: f64,
    weights: Vec<f64>,
    mean: PointSpec,
    objective: f64,
    iterations: usize,
    stop_reason: StopReason,
    last_step_distance: Option<f64>,
    certificates: Vec<CertificateReport>,
}

/// `Σ w_i d(x, x_i)^p`.
pub fn objective(space: &Space, points: &[Point], weights: &[f64], p: u8) -> hadamard_prox::Result<Functional> {
    let terms = points
        .iter()
        .zip(weights)
        .map(|(x, &w)| {
            let f = match p {
                // squared_distance carries a factor 1/2
                2 => Functional::squared_distance(space, x.clone(), 2.0)?,
                _ => Functional::distance(space, x.clone(), 1.0)?,
            };
            Ok((w, f))
        })
        .collect::<hadamard_prox::Result<_>>()?;
    Functional::weighted_sum(space, terms)
}

pub fn mean(args: &MeanArgs) -> Result<Outcome, CliError> {
    if !matches!(args.p, 1 | 2) {
        return Err(CliError::Config(format!("--p must be 1 or 2, got {}", args.p)));
    }
    let (file, raw) = PointsFile::load(&args.points)?;
    let specs = file.points();
    if specs.is_empty() {
        return Err(CliError::Config("point list is empty".into()));
    }
    let space = args.space.build(specs.first())?;
    let points = specs
        .iter()
        .map(|s| s.build(&space))
        .collect::<hadamard_prox::Result<Vec<_>>>()
        .map_err(core("geometry"))?;
    let weights = match file.weights() {
        Some(w) if w.len() != points.len() => {
            return Err(CliError::Config(format!("{} weights for {} points", w.len(), points.len())))
        }
        Some(w) if w.iter().any(|x| !(x.is_finite() && *x > 0.0)) => {
            return Err(CliError::Config("weights must be positive and finite".into()))
        }
        Some(w) => w.to_vec(),
        None => vec![1.0 / points.len() as f64; points.len()],
    };
    let f = objective(&space, &points, &weights, args.p).map_err(core("functionals"))?;
    let schedule = StepSchedule::constant(args.lambda).map_err(core("ppa"))?;
    let stop = StopRule { max_iterations: args.budget, ..StopRule::default() };
    let trace = run_ppa(&f, &points[0], &schedule, &stop, &ResolventOptions::default()).map_err(core("ppa"))?;
    log::info!("mean: {} steps, {:?}", trace.len(), trace.stop_reason);

    let mut dir = OutputDir::create(&args.out)?;
    dir.text("ppa_trace.csv", &trace.csv_string())?;
    dir.json(
        "mean.json",
        &MeanReport {
            space: space.name(),
            dimension: space.dimension(),
            p: args.p,
            lambda: args.lambda,
            weights,
            mean: PointSpec::from_point(&space, trace.final_point()),
            objective: *trace.values.last().expect("trace holds the start"),
            iterations: trace.len(),
            stop_reason: trace.stop_reason,
            last_step_distance: trace.step_distances.last().copied(),
            certificates: trace.certificates.clone(),
        },
    )?;
    let mut all = BTreeMap::new();
    verdicts("ppa", &trace.certificates, &mut all);
    let hash = config::hash(&serde_json::json!({
        "command": "mean",
        "points": raw,
        "space": args.space.describe(),
        "p": args.p,
        "lambda": args.lambda,
        "budget": args.budget,
        "seed": args.seed,
    }));
    dir.finish("mean", hash, args.seed, all, failing("ppa", &trace.certificates))
}
