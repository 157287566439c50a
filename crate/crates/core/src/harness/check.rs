//! `check`: certify a trajectory file against the regenerated stream.

use std::path::{Path, PathBuf};

use super::run::prepare_stream;
use super::trajectory_io::load_trajectory;
use crate::checks::{certify, CheckReport};
use crate::error::{Error, Result};
use crate::oracle::compute_alpha_beta;

/// `trial_000.csv` → `trial_000.check.json`.
pub fn check_report_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("check.json")
}

/// Loads the trajectory and its sidecar, regenerates the stream and the oracle constants
/// at the recorded `η`, and runs every check. Writes the report next to the trajectory.
pub fn cmd_check(path: &Path) -> Result<CheckReport> {
    let (meta, t) = load_trajectory(path)?;
    let phi = meta
        .config
        .build_feature_map()
        .map_err(|e| Error::Config(e.to_string()))?;
    let prepared = prepare_stream(&meta.config, &phi, meta.trial)?;
    let summary = &prepared.summary;
    let ab = compute_alpha_beta(summary, meta.eta, &summary.top_vector)?;
    let seeds = meta.config.trial_seeds(meta.trial);
    let report = certify(&t, &prepared.features, &ab, seeds.init)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(check_report_path(path), json)?;
    Ok(report)
}
