//! `sweep`: repeat a run across spectral ratios and tabulate the trend.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::report::RATIO_HYPOTHESIS_CONSTANT;
use super::run::cmd_run;
use crate::error::Result;
use crate::numerics::median;
use crate::oracle::SpectralRatio;

pub const SWEEP_FILE: &str = "sweep.csv";

pub const SWEEP_HEADER: &str = "r_target,median_empirical_r,median_alignment_error,log_d_over_r,\
bound_satisfied_fraction,completed,note";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub ratio_target: f64,
    pub median_ratio: Option<SpectralRatio>,
    pub median_alignment_error: Option<f64>,
    /// `ln d / R_target`.
    pub error_bound: f64,
    /// Fraction of trials with alignment error at or below `error_bound`.
    pub bound_satisfied_fraction: Option<f64>,
    pub completed: usize,
    /// `no spike` at `R = 1`; `empirical` when `R < 10⁴·ln n·ln d`.
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SWEEP_HEADER);
        out.push('\n');
        for r in &self.rows {
            let ratio = match r.median_ratio {
                Some(SpectralRatio::Infinite) => "inf".to_owned(),
                Some(SpectralRatio::Finite(x)) => x.to_string(),
                None => String::new(),
            };
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.ratio_target,
                ratio,
                opt(r.median_alignment_error),
                r.error_bound,
                opt(r.bound_satisfied_fraction),
                r.completed,
                r.note
            )
            .expect("writing to a string");
        }
        out
    }
}

/// One run per ratio (no trajectory files); with `out`, writes `sweep.csv`.
pub fn cmd_sweep(cfg: &RunConfig, out: Option<&Path>) -> Result<SweepTable> {
    cfg.validate()?;
    let ratios = cfg.sweep_ratios()?.to_vec();
    let d = cfg.generator.input_dim as f64;
    let n = cfg.generator.n as f64;
    let mut rows = Vec::with_capacity(ratios.len());
    for ratio in ratios {
        let mut run_cfg = cfg.clone();
        run_cfg.generator.ratio = ratio;
        run_cfg.ratios = None;
        let report = cmd_run(&run_cfg, None)?;
        let bound = d.ln() / ratio;
        let errors: Vec<f64> = report.metrics().map(|m| m.alignment_error).collect();
        let satisfied = errors.iter().filter(|&&e| e <= bound).count();
        let note = if ratio == 1.0 {
            "no spike"
        } else if ratio < RATIO_HYPOTHESIS_CONSTANT * n.ln() * d.ln() {
            "empirical"
        } else {
            ""
        };
        rows.push(SweepRow {
            ratio_target: ratio,
            median_ratio: report.aggregate.median_ratio,
            median_alignment_error: median(&errors),
            error_bound: bound,
            bound_satisfied_fraction: (!errors.is_empty())
                .then(|| satisfied as f64 / errors.len() as f64),
            completed: errors.len(),
            note: note.to_owned(),
        });
    }
    let table = SweepTable { rows };
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(SWEEP_FILE), table.to_csv())?;
    }
    Ok(table)
}
