//! Config file parsing and flag resolution. Every config key has a CLI flag
//! override; precedence is flag > file > default.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use pset_core::model::Scenario;

use crate::{BoundsArgs, CliError, RunArgs};

pub const DEFAULT_SEED: u64 = 7;
pub const DEFAULT_TRIALS: usize = 200;
pub const DEFAULT_HORIZON: usize = 300;

/// On-disk configuration (TOML). All keys optional; unset keys fall back to
/// CLI flags and then to defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub scenario: Option<String>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub horizon: Option<usize>,
    pub estimators: Option<Vec<String>>,
    pub c_grid: Option<Vec<f64>>,
    pub out_dir: Option<PathBuf>,
    pub dump_steps: Option<bool>,
    pub random_send_prob: Option<f64>,
    pub bounds: Option<BoundsSection>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    pub c_min: Option<f64>,
    pub c_max: Option<f64>,
    pub points: Option<usize>,
    pub target_rate: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::ConfigParse(format!("cannot read config '{}': {e}", path.display()))
        })?;
        toml::from_str(&text).map_err(|e| {
            CliError::ConfigParse(format!("cannot parse config '{}': {e}", path.display()))
        })
    }
}

/// Fully resolved run configuration, echoed verbatim into the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedRun {
    pub scenario: String,
    pub seed: u64,
    pub trials: usize,
    pub horizon: usize,
    pub estimators: Vec<String>,
    pub c_grid: Vec<f64>,
    pub out_dir: PathBuf,
    pub dump_steps: bool,
    pub random_send_prob: Option<f64>,
}

impl ResolvedRun {
    pub fn scenario(&self) -> Result<Scenario, CliError> {
        Scenario::from_str(&self.scenario).map_err(|e| CliError::ConfigValidate(e.to_string()))
    }
}

pub fn resolve_run(args: &RunArgs, file: &FileConfig) -> Result<ResolvedRun, CliError> {
    let scenario_name = args
        .scenario
        .clone()
        .or_else(|| file.scenario.clone())
        .unwrap_or_else(|| Scenario::TargetTracking.name().to_string());
    let scenario =
        Scenario::from_str(&scenario_name).map_err(|e| CliError::ConfigValidate(e.to_string()))?;
    let resolved = ResolvedRun {
        scenario: scenario_name,
        seed: args.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        trials: args.trials.or(file.trials).unwrap_or(DEFAULT_TRIALS),
        horizon: args.horizon.or(file.horizon).unwrap_or(DEFAULT_HORIZON),
        estimators: args
            .estimators
            .clone()
            .or_else(|| file.estimators.clone())
            .unwrap_or_else(|| vec!["pset".into(), "kf".into(), "random".into()]),
        c_grid: args
            .c_grid
            .clone()
            .or_else(|| file.c_grid.clone())
            .unwrap_or_else(|| scenario.table_scales().to_vec()),
        out_dir: args
            .out
            .clone()
            .or_else(|| file.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out")),
        dump_steps: args.dump_steps || file.dump_steps.unwrap_or(false),
        random_send_prob: args.random_send_prob.or(file.random_send_prob),
    };
    Ok(resolved)
}

/// Resolved configuration of the `bounds` command.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedBounds {
    pub scenario: String,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub c_min: f64,
    pub c_max: f64,
    pub points: usize,
    pub target_rate: Option<f64>,
}

impl ResolvedBounds {
    pub fn scenario(&self) -> Result<Scenario, CliError> {
        Scenario::from_str(&self.scenario).map_err(|e| CliError::ConfigValidate(e.to_string()))
    }
}

pub fn resolve_bounds(args: &BoundsArgs, file: &FileConfig) -> Result<ResolvedBounds, CliError> {
    let section = file.bounds.clone().unwrap_or_default();
    let scenario_name = args
        .scenario
        .clone()
        .or_else(|| file.scenario.clone())
        .unwrap_or_else(|| Scenario::TargetTracking.name().to_string());
    Scenario::from_str(&scenario_name).map_err(|e| CliError::ConfigValidate(e.to_string()))?;
    let resolved = ResolvedBounds {
        scenario: scenario_name,
        seed: args.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        out_dir: args
            .out
            .clone()
            .or_else(|| file.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out")),
        c_min: args.c_min.or(section.c_min).unwrap_or(1e-3),
        c_max: args.c_max.or(section.c_max).unwrap_or(1e4),
        points: args.c_points.or(section.points).unwrap_or(61),
        target_rate: args.target_rate.or(section.target_rate),
    };
    if !(resolved.c_min > 0.0 && resolved.c_max > resolved.c_min) {
        return Err(CliError::ConfigValidate(format!(
            "bounds grid requires 0 < c_min < c_max, got [{}, {}]",
            resolved.c_min, resolved.c_max
        )));
    }
    if resolved.points < 2 {
        return Err(CliError::ConfigValidate(
            "bounds grid needs at least 2 points".into(),
        ));
    }
    Ok(resolved)
}
