//! `proxcat verify`: randomized invariant checks of a backend.

use std::collections::BTreeMap;
use std::path::PathBuf;

use hadamard_prox::certificate::Verdict;
use hadamard_prox::invariants::{verify_space, VerifyOptions, VerifyReport};
use hadamard_prox::par::Execution;

use crate::{config, core, verdicts, CliError, Outcome, OutputDir, PointsFile, SpaceArgs};

#[derive(Clone, Debug)]
pub struct VerifyArgs {
    pub space: SpaceArgs,
    pub budget: usize,
    pub seed: u64,
    pub points: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub execution: Execution,
}

/// Runs the suite. Returns the report alongside the outcome so callers
/// without an output directory can print it.
pub fn verify(args: &VerifyArgs) -> Result<(VerifyReport, Outcome), CliError> {
    let given = args.points.as_ref().map(|p| PointsFile::load(p)).transpose()?;
    let specs = given.as_ref().map(|(f, _)| f.points()).unwrap_or_default();
    let space = args.space.build(specs.first())?;
    let points = specs
        .iter()
        .map(|s| s.build(&space))
        .collect::<hadamard_prox::Result<Vec<_>>>()
        .map_err(core("geometry"))?;
    let opts = VerifyOptions { budget: args.budget, seed: args.seed, execution: args.execution };
    let report = verify_space(&space, &points, &opts).map_err(core("invariants"))?;
    let failures: Vec<String> = report
        .checks
        .iter()
        .filter(|c| c.verdict != Verdict::Pass)
        .map(|c| {
            let at = c.worst_index.map(|i| format!(" at sample {i}")).unwrap_or_default();
            format!("{}: residual {:e}{at} (seed {})", c.name, c.worst_residual, args.seed)
        })
        .collect();
    log::info!("verify {}: {} checks, {} failing", space.name(), report.checks.len(), failures.len());

    let outcome = match &args.out {
        Some(out) => {
            let mut dir = OutputDir::create(out)?;
            dir.json("verify_report.json", &report)?;
            let mut all = BTreeMap::new();
            verdicts("verify", &report.checks, &mut all);
            let hash = config::hash(&serde_json::json!({
                "command": "verify",
                "space": args.space.describe(),
                "points": given.as_ref().map(|(_, raw)| raw),
                "budget": args.budget,
                "seed": args.seed,
            }));
            dir.finish("verify", hash, args.seed, all, failures)?
        }
        None => Outcome { failures, outputs: Vec::new() },
    };
    Ok((report, outcome))
}
