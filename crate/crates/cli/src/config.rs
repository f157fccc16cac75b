//! Experiment configuration files and their canonical hash.

use std::path::{Path, PathBuf};

use hadamard_prox::descriptor::{FunctionalSpec, PointSpec, SpaceSpec};
use hadamard_prox::flow::FlowOptions;
use hadamard_prox::ppa::{ScheduleKind, StopRule};
use hadamard_prox::resolvent::ResolventOptions;
use serde::Deserialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Ppa,
    Flow,
    Both,
}

impl Algorithm {
    pub fn ppa(self) -> bool {
        matches!(self, Algorithm::Ppa | Algorithm::Both)
    }

    pub fn flow(self) -> bool {
        matches!(self, Algorithm::Flow | Algorithm::Both)
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub space: SpaceSpec,
    pub functional: FunctionalSpec,
    #[serde(default)]
    pub known_minimizer: Option<PointSpec>,
    #[serde(default)]
    pub known_infimum: Option<f64>,
    pub algorithm: Algorithm,
    pub start: PointSpec,
    #[serde(default)]
    pub schedule: Option<ScheduleKind>,
    #[serde(default)]
    pub lambda_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub stop: StopRule,
    #[serde(default)]
    pub resolvent: ResolventOptions,
    #[serde(default)]
    pub flow: FlowOptions,
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// A parsed configuration with its source directory and hash.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
    pub hash: String,
}

/// Command-line values that replace configuration entries.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub budget: Option<usize>,
}

fn invalid(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{}: {msg}", path.display()))
}

/// Reads a configuration, applies overrides and checks the fields each
/// algorithm needs.
pub fn load(path: &Path, overrides: &Overrides) -> Result<LoadedConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| invalid(path, e))?;
    let mut value: Value = serde_json::from_str(&text).map_err(|e| invalid(path, e))?;
    let Value::Object(map) = &mut value else {
        return Err(invalid(path, "configuration must be a JSON object"));
    };
    if let Some(seed) = overrides.seed {
        map.insert("seed".into(), seed.into());
    }
    if let Some(budget) = overrides.budget {
        let stop = map.entry("stop").or_insert_with(|| Value::Object(Default::default()));
        match stop {
            Value::Object(stop) => {
                stop.insert("max_iterations".into(), budget.into());
            }
            _ => return Err(invalid(path, "stop must be an object")),
        }
    }
    let config: ExperimentConfig = serde_json::from_value(value.clone()).map_err(|e| invalid(path, e))?;
    if config.algorithm.ppa() && config.schedule.is_none() {
        return Err(invalid(path, "algorithm needs a schedule"));
    }
    if config.algorithm.flow() && config.lambda_grid.is_none() {
        return Err(invalid(path, "algorithm needs a lambda_grid"));
    }
    if let Value::Object(map) = &mut value {
        map.remove("output_dir");
    }
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(LoadedConfig { config, base_dir, hash: hash(&value) })
}

/// SHA-256 of the compact JSON form with keys sorted.
pub fn hash(value: &Value) -> String {
    let canonical = serde_json::to_string(&sorted(value)).expect("JSON values serialize");
    format!("{:x}", Sha256::digest(canonical.as_bytes()))
}

fn sorted(value: &Value) -> Value {
    match value {
        Value::Object(map) => {
            let mut entries: Vec<_> = map.iter().collect();
            entries.sort_by(|a, b| a.0.cmp(b.0));
            Value::Object(entries.into_iter().map(|(k, v)| (k.clone(), sorted(v))).collect())
        }
        Value::Array(items) => Value::Array(items.iter().map(sorted).collect()),
        other => other.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn write(dir: &Path, value: &Value) -> PathBuf {
        let path = dir.join("config.json");
        std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
        path
    }

    fn base() -> Value {
        json!({
            "space": {"kind": "euclidean", "dimension": 1},
            "functional": {"kind": "squared_distance", "anchor": [0.0]},
            "algorithm": "ppa",
            "start": [1.0],
            "schedule": {"kind": "constant", "lambda": 1.0},
            "seed": 7
        })
    }

    #[test]
    fn hash_ignores_key_order_and_output_dir() {
        let dir = tempfile::tempdir().unwrap();
        let a = load(&write(dir.path(), &base()), &Overrides::default()).unwrap();
        let mut reordered = serde_json::Map::new();
        let Value::Object(m) = base() else { unreachable!() };
        for (k, v) in m.into_iter().rev() {
            reordered.insert(k, v);
        }
        reordered.insert("output_dir".into(), "elsewhere".into());
        let b = load(&write(dir.path(), &Value::Object(reordered)), &Overrides::default()).unwrap();
        assert_eq!(a.hash, b.hash);
        assert_eq!(a.hash.len(), 64);
    }

    #[test]
    fn overrides_change_the_hash() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(dir.path(), &base());
        let plain = load(&path, &Overrides::default()).unwrap();
        let seeded = load(&path, &Overrides { seed: Some(8), budget: None }).unwrap();
        let budget = load(&path, &Overrides { seed: None, budget: Some(5) }).unwrap();
        assert_eq!(seeded.config.seed, 8);
        assert_eq!(budget.config.stop.max_iterations, 5);
        assert_ne!(plain.hash, seeded.hash);
        assert_ne!(plain.hash, budget.hash);
    }

    #[test]
    fn rejects_bad_configs() {
        let dir = tempfile::tempdir().unwrap();
        let mut unknown = base();
        unknown["colour"] = json!("red");
        let mut no_seed = base();
        no_seed.as_object_mut().unwrap().remove("seed");
        let mut no_grid = base();
        no_grid["algorithm"] = json!("both");
        for v in [unknown, no_seed, no_grid, json!([1, 2])] {
            let err = load(&write(dir.path(), &v), &Overrides::default()).unwrap_err();
            assert!(matches!(err, CliError::Config(_)), "{err}");
        }
    }
}
