//! CSV/JSON emission with atomic writes.
//!
//! Numeric CSV cells are written in scientific notation with 17 significant
//! digits, '.' decimal separator and '\n' line endings, so identical runs
//! produce byte-identical files.

use std::path::{Path, PathBuf};

use serde::Serialize;

use pset_core::harness::{RateSweepRow, RunOutput};

use crate::CliError;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes to a temp file in the target directory, then renames into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension(format!("tmp.{}", std::process::id()));
    std::fs::write(&tmp, contents)
        .map_err(|e| CliError::Runtime(format!("writing '{}': {e}", tmp.display())))?;
    std::fs::rename(&tmp, path)
        .map_err(|e| CliError::Runtime(format!("renaming into '{}': {e}", path.display())))
}

pub fn metrics_csv(outputs: &[RunOutput]) -> String {
    let mut csv = String::from("estimator,c,k,E_k,T_k,rate\n");
    for out in outputs {
        for (j, (e, t)) in out
            .metrics
            .e_k
            .iter()
            .zip(out.metrics.t_k.iter())
            .enumerate()
        {
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                out.estimator,
                fmt_f64(out.c),
                j + 1,
                fmt_f64(*e),
                fmt_f64(*t),
                fmt_f64(out.metrics.rate)
            ));
        }
    }
    csv
}

/// Per-step dump; rows are grouped by (estimator, c) in run order.
pub fn steps_csv(outputs: &[RunOutput]) -> String {
    let mut csv = String::from("trial,k,varsigma,rho,no_send_prob,sq_err\n");
    for out in outputs {
        for row in &out.steps {
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row.trial,
                row.step,
                u8::from(row.sent),
                fmt_f64(row.rho),
                fmt_f64(row.no_send_probability),
                fmt_f64(row.squared_error)
            ));
        }
    }
    csv
}

pub struct BoundsRow {
    pub c: f64,
    pub rate_lower: f64,
    pub rate_upper: f64,
    pub p_l_trace: f64,
    pub p_u_trace: f64,
}

pub fn bounds_csv(rows: &[BoundsRow]) -> String {
    let mut csv = String::from("c,rate_lower,rate_upper,p_l_trace,p_u_trace\n");
    for row in rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_f64(row.c),
            fmt_f64(row.rate_lower),
            fmt_f64(row.rate_upper),
            fmt_f64(row.p_l_trace),
            fmt_f64(row.p_u_trace)
        ));
    }
    csv
}

pub fn rates_csv(rows: &[RateSweepRow]) -> String {
    let mut csv = String::from("c,rate_lower,rate_upper,empirical_rate\n");
    for row in rows {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(row.c),
            fmt_f64(row.rate_lower),
            fmt_f64(row.rate_upper),
            fmt_f64(row.empirical_rate)
        ));
    }
    csv
}

/// Reproducibility manifest written alongside every output set.
#[derive(Serialize)]
pub struct RunManifest<C: Serialize> {
    pub command: String,
    pub tool_version: String,
    pub master_seed: u64,
    pub config: C,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_rate_interval: Option<[f64; 2]>,
}

impl<C: Serialize> RunManifest<C> {
    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join("manifest.json");
        let mut json = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Runtime(format!("serializing manifest: {e}")))?;
        json.push('\n');
        write_atomic(&path, json.as_bytes())?;
        Ok(path)
    }
}
