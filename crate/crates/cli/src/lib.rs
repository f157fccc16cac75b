//! Experiment runner behind the `proxcat` binary.
//!
//! Every command writes its artifacts and a `manifest.json` into an output
//! directory and returns an [`Outcome`] whose exit code is 0 when every
//! certificate passed and 2 otherwise. Errors map to exit code 1.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hadamard_prox::certificate::{CertificateReport, Verdict};
use hadamard_prox::descriptor::{PointSpec, TreeSpec};
use hadamard_prox::geometry::Space;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod config;
pub mod mean;
pub mod run;
pub mod verify;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{module}: {source}")]
    Core {
        module: &'static str,
        #[source]
        source: hadamard_prox::Error,
    },
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Wraps a core error with the module it came from.
pub(crate) fn core(module: &'static str) -> impl Fn(hadamard_prox::Error) -> CliError {
    move |source| CliError::Core { module, source }
}

/// Result of a command that ran to completion.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    /// One line per failed or inconclusive certificate.
    pub failures: Vec<String>,
    pub outputs: Vec<PathBuf>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            0
        } else {
            2
        }
    }
}

pub(crate) fn failing(prefix: &str, certs: &[CertificateReport]) -> Vec<String> {
    certs
        .iter()
        .filter(|c| matches!(c.verdict, Verdict::Fail | Verdict::Inconclusive))
        .map(|c| {
            let mut line = format!("{prefix}.{}: {:?}", c.name, c.verdict);
            if let Some(i) = c.worst_index {
                line += &format!(", worst residual {:e} at index {i}", c.worst_residual);
            }
            if let Some(note) = &c.note {
                line += &format!(" ({note})");
            }
            line
        })
        .collect()
}

pub(crate) fn verdicts(prefix: &str, certs: &[CertificateReport], into: &mut BTreeMap<String, Verdict>) {
    for c in certs {
        into.insert(format!("{prefix}.{}", c.name), c.verdict);
    }
}

#[derive(Debug, Serialize)]
pub(crate) struct Manifest<'a> {
    pub command: &'a str,
    pub config_hash: String,
    pub version: &'a str,
    pub seed: u64,
    pub verdicts: BTreeMap<String, Verdict>,
    pub outputs: Vec<String>,
    pub exit_code: i32,
}

/// Output directory writer that records the files it creates.
pub(crate) struct OutputDir {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<OutputDir, CliError> {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
        Ok(OutputDir { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, text).map_err(|source| CliError::Io { path: path.clone(), source })?;
        self.written.push(path);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).expect("reports serialize") + "\n";
        self.text(name, &text)
    }

    /// Writes `manifest.json` and returns the outcome.
    pub fn finish(
        mut self,
        command: &str,
        config_hash: String,
        seed: u64,
        verdicts: BTreeMap<String, Verdict>,
        failures: Vec<String>,
    ) -> Result<Outcome, CliError> {
        let mut outcome = Outcome { failures, outputs: Vec::new() };
        let names = |paths: &[PathBuf]| {
            paths
                .iter()
                .chain([&self.dir.join("manifest.json")])
                .map(|p| p.file_name().expect("file path").to_string_lossy().into_owned())
                .collect()
        };
        let manifest = Manifest {
            command,
            config_hash,
            version: env!("CARGO_PKG_VERSION"),
            seed,
            verdicts,
            outputs: names(&self.written),
            exit_code: outcome.exit_code(),
        };
        self.json("manifest.json", &manifest)?;
        outcome.outputs = self.written;
        Ok(outcome)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum SpaceChoice {
    Euclidean,
    Hyperbolic,
    Spd,
    Tree,
}

/// Space selection shared by `mean` and `verify`.
#[derive(Clone, Debug)]
pub struct SpaceArgs {
    pub kind: SpaceChoice,
    /// Dimension, or matrix order for SPD.
    pub dimension: Option<usize>,
    pub tree: Option<PathBuf>,
}

impl SpaceArgs {
    /// Builds the space, inferring a missing dimension from `sample`.
    pub(crate) fn build(&self, sample: Option<&PointSpec>) -> Result<Space, CliError> {
        let inferred = match (self.kind, sample) {
            (SpaceChoice::Euclidean, Some(PointSpec::Flat(v))) => Some(v.len()),
            (SpaceChoice::Hyperbolic, Some(PointSpec::Flat(v))) => v.len().checked_sub(1),
            (SpaceChoice::Hyperbolic, Some(PointSpec::Spatial { spatial })) => Some(spatial.len()),
            (SpaceChoice::Spd, Some(PointSpec::Matrix(rows))) => Some(rows.len()),
            _ => None,
        };
        let dimension = || {
            self.dimension
                .or(inferred)
                .ok_or_else(|| CliError::Config("--dimension is required for this space".into()))
        };
        let space = match self.kind {
            SpaceChoice::Euclidean => Space::euclidean(dimension()?),
            SpaceChoice::Hyperbolic => Space::hyperbolic(dimension()?),
            SpaceChoice::Spd => Space::spd(dimension()?),
            SpaceChoice::Tree => {
                let path = self.tree.as_ref().ok_or_else(|| CliError::Config("--tree is required for trees".into()))?;
                TreeSpec::load(path).and_then(|t| t.build()).map(Space::tree)
            }
        };
        space.map_err(core("geometry"))
    }

    pub(crate) fn describe(&self) -> serde_json::Value {
        let tree = self.tree.as_ref().map(|p| std::fs::read_to_string(p).unwrap_or_default());
        serde_json::json!({
            "space": format!("{:?}", self.kind).to_lowercase(),
            "dimension": self.dimension,
            "tree": tree,
        })
    }
}

/// Point list file: a JSON array of points, or an object with `points`
/// and optional `weights`.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum PointsFile {
    Plain(Vec<PointSpec>),
    Weighted(WeightedPoints),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightedPoints {
    pub points: Vec<PointSpec>,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
}

impl PointsFile {
    pub fn load(path: &Path) -> Result<(PointsFile, serde_json::Value), CliError> {
        let err = |e: &dyn std::fmt::Display| CliError::Config(format!("{}: {e}", path.display()));
        let text = std::fs::read_to_string(path).map_err(|e| err(&e))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| err(&e))?;
        let file = serde_json::from_value(value.clone()).map_err(|e| err(&e))?;
        Ok((file, value))
    }

    pub fn points(&self) -> &[PointSpec] {
        match self {
            PointsFile::Plain(p) => p,
            PointsFile::Weighted(w) => &w.points,
        }
    }

    pub fn weights(&self) -> Option<&[f64]> {
        match self {
            PointsFile::Plain(_) => None,
            PointsFile::Weighted(w) => w.weights.as_deref(),
        }
    }
}
