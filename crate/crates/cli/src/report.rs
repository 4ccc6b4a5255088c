//! JSON run reports.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::{ScenarioConfig, Tolerances};
use crate::CliError;

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when `value ≤ bound`.
    pub fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Check {
            name: name.into(),
            value,
            bound,
            passed: value <= bound,
        }
    }

    /// Passes when `value > bound`.
    pub fn above(name: &str, value: f64, bound: f64) -> Self {
        Check {
            name: name.into(),
            value,
            bound,
            passed: value > bound,
        }
    }

    pub fn within(name: &str, value: f64, band: [f64; 2]) -> Self {
        Check {
            name: name.into(),
            value,
            bound: band[1],
            passed: (band[0]..=band[1]).contains(&value),
        }
    }

    pub fn holds(name: &str, passed: bool) -> Self {
        Check {
            name: name.into(),
            value: if passed { 1.0 } else { 0.0 },
            bound: 1.0,
            passed,
        }
    }
}

/// What a subcommand hands back to the runner.
pub struct Outcome {
    pub checks: Vec<Check>,
    pub result: Value,
    pub artifacts: Vec<String>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Serialize)]
struct Report<'a> {
    command: &'a str,
    config_hash: String,
    seed: u64,
    tolerances: &'a Tolerances,
    config: &'a ScenarioConfig,
    warnings: &'a [String],
    checks: &'a [Check],
    passed: bool,
    artifacts: &'a [String],
    result: &'a Value,
}

/// SHA-256 of the compact JSON of the resolved config.
pub fn config_hash(cfg: &ScenarioConfig) -> String {
    let bytes = serde_json::to_vec(cfg).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

/// Writes `<dir>/<command>.json` and returns its path.
pub fn write(
    dir: &Path,
    command: &str,
    cfg: &ScenarioConfig,
    warnings: &[String],
    outcome: &Outcome,
) -> Result<PathBuf, CliError> {
    let report = Report {
        command,
        config_hash: config_hash(cfg),
        seed: cfg.seed,
        tolerances: &cfg.tolerances,
        config: cfg,
        warnings,
        checks: &outcome.checks,
        passed: outcome.passed(),
        artifacts: &outcome.artifacts,
        result: &outcome.result,
    };
    let path = dir.join(format!("{command}.json"));
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| CliError::Write {
        path: path.clone(),
        source: e,
    })?;
    Ok(path)
}
