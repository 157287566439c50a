//! `run`: generate, solve offline, stream, measure and optionally certify each trial.

use std::path::Path;

use rayon::prelude::*;

use super::config::{EtaPolicy, InitKind, RunConfig};
use super::report::{aggregate, RunReport, TrialMetrics, TrialReport, RATIO_HYPOTHESIS_CONSTANT};
use super::trajectory_io::{save_trajectory, TrajectoryMeta};
use crate::checks::{certify, final_bound_hypotheses, Label};
use crate::datagen::{make_spiked_stream, SpikedStream};
use crate::error::{Error, Result};
use crate::feature_map::{FeatureKind, FeatureMapSpec};
use crate::linalg::DenseVector;
use crate::oja::{init_state, init_state_at, run_features, select_learning_rate, Recording, Trajectory};
use crate::oracle::{
    alignment_error, compute_alpha_beta, projection_residual, summarize_features, SpectralSummary,
};

/// A trial's regenerated stream in input and feature space, with its offline solution.
#[derive(Debug, Clone)]
pub struct PreparedStream {
    pub stream: SpikedStream,
    pub features: Vec<DenseVector>,
    pub summary: SpectralSummary,
    /// `maxᵢ ‖φ(xᵢ)‖²`.
    pub norm_bound: f64,
}

pub fn prepare_stream(cfg: &RunConfig, phi: &FeatureMapSpec, trial: usize) -> Result<PreparedStream> {
    let stream = make_spiked_stream(&cfg.spiked_spec(trial))?;
    let features = stream
        .samples
        .iter()
        .map(|x| phi.apply(x))
        .collect::<Result<Vec<_>>>()?;
    // an overflowing ‖φ(x)‖² or second moment is a numeric abort of this trial, not bad input
    if let Some(i) = features.iter().position(|f| !f.norm_sq().is_finite()) {
        return Err(Error::Numeric {
            step: i + 1,
            detail: "‖φ(x)‖² overflows".into(),
        });
    }
    let norm_bound = features.iter().map(|f| f.norm_sq()).fold(0.0, f64::max);
    if !(norm_bound * features.len() as f64).is_finite() {
        return Err(Error::Numeric {
            step: 0,
            detail: "second moment overflows".into(),
        });
    }
    let summary = summarize_features(&features)?;
    Ok(PreparedStream {
        stream,
        features,
        summary,
        norm_bound,
    })
}

/// `η` under the config's policy. `auto` uses the exact stream maximum of `‖φ(xᵢ)‖²` as `B`.
pub fn learning_rate(cfg: &RunConfig, prepared: &PreparedStream) -> Result<f64> {
    let user = match cfg.eta {
        EtaPolicy::Auto => None,
        EtaPolicy::Fixed(eta) => Some(eta),
    };
    select_learning_rate(prepared.norm_bound, user)
}

pub struct TrialOutput {
    pub report: TrialReport,
    pub trajectory: Option<(Trajectory, TrajectoryMeta)>,
}

fn is_abort(e: &Error) -> bool {
    matches!(
        e,
        Error::Numeric { .. } | Error::Degenerate(_) | Error::Convergence { .. }
    )
}

pub fn run_trial(
    cfg: &RunConfig,
    phi: &FeatureMapSpec,
    trial: usize,
    recording: Recording,
) -> Result<TrialOutput> {
    let seeds = cfg.trial_seeds(trial);
    let aborted = |e: Error| TrialOutput {
        report: TrialReport {
            trial,
            seeds,
            metrics: None,
            error: Some(e.to_string()),
            checks: None,
            trajectory_file: None,
        },
        trajectory: None,
    };
    match trial_inner(cfg, phi, trial, recording) {
        Ok(out) => Ok(out),
        Err(e) if is_abort(&e) => Ok(aborted(e)),
        Err(e) => Err(e),
    }
}

fn trial_inner(
    cfg: &RunConfig,
    phi: &FeatureMapSpec,
    trial: usize,
    recording: Recording,
) -> Result<TrialOutput> {
    let seeds = cfg.trial_seeds(trial);
    let prepared = prepare_stream(cfg, phi, trial)?;
    let eta = learning_rate(cfg, &prepared)?;
    let summary = &prepared.summary;
    let v_star = &summary.top_vector;
    let ab = compute_alpha_beta(summary, eta, v_star)?;

    let m = phi.feature_dim();
    let init = match cfg.init {
        InitKind::Random => init_state(m, seeds.init)?,
        InitKind::Vstar => init_state_at(v_star)?,
    };
    let v_hat0 = init.v_hat().clone();
    let (state, trajectory) = run_features(&prepared.features, eta, init, recording)?;
    let v_hat = state.v_hat();

    let n = prepared.features.len();
    let population_alignment_error = match phi.kind() {
        FeatureKind::Identity => Some(alignment_error(
            &prepared.stream.population.top_direction,
            v_hat,
        )?),
        _ => None,
    };
    let final_bound = ab.alpha.sqrt() + (-ab.beta / 200.0).exp();
    let residual = projection_residual(v_star, v_hat)?;
    let (hyp_alpha, hyp_beta) = final_bound_hypotheses(ab.alpha, ab.beta, n, m);
    let ln_d = (cfg.generator.input_dim as f64).ln();
    let metrics = TrialMetrics {
        alignment_error: alignment_error(v_star, v_hat)?,
        population_alignment_error,
        projection_residual: residual,
        log_norm: state.log_norm(),
        ratio: summary.ratio,
        lambda1: summary.lambda1(),
        lambda2: summary.lambda2(),
        alpha: ab.alpha,
        beta: ab.beta,
        eta,
        norm_bound: prepared.norm_bound,
        guard_norm_bound: phi.norm_bound(prepared.stream.population.norm_guard)?,
        rejected_samples: prepared.stream.rejected,
        final_bound,
        final_bound_satisfied: residual <= final_bound,
        final_bound_label: if hyp_alpha && hyp_beta {
            Label::Certified
        } else {
            Label::Empirical
        },
        ratio_hypothesis: summary.ratio.value()
            >= RATIO_HYPOTHESIS_CONSTANT * (n as f64).ln() * ln_d,
    };

    let checks = match (&trajectory, cfg.checks) {
        (Some(t), true) => Some(certify(t, &prepared.features, &ab, seeds.init)?),
        _ => None,
    };
    let trajectory = trajectory.map(|t| {
        let meta = TrajectoryMeta {
            config: cfg.clone(),
            trial,
            eta,
            init: cfg.init,
            n,
            feature_dim: m,
            v_hat0,
        };
        (t, meta)
    });
    Ok(TrialOutput {
        report: TrialReport {
            trial,
            seeds,
            metrics: Some(metrics),
            error: None,
            checks,
            trajectory_file: None,
        },
        trajectory,
    })
}

pub fn trajectory_file_name(trial: usize) -> String {
    format!("trial_{trial:03}.csv")
}

pub const REPORT_FILE: &str = "report.json";

/// Runs every trial (concurrently) and aggregates. With `out`, writes `report.json` and one
/// trajectory file per trial; `cfg.checks` adds `v̂` snapshots and certifies each trial.
pub fn cmd_run(cfg: &RunConfig, out: Option<&Path>) -> Result<RunReport> {
    cfg.validate()?;
    // where the files land is not part of the experiment; keep it out of recorded configs so
    // equal runs into different directories produce identical bytes
    let cfg = &RunConfig {
        out: None,
        ..cfg.clone()
    };
    let phi = cfg
        .build_feature_map()
        .map_err(|e| Error::Config(e.to_string()))?;
    let recording = if cfg.checks {
        Recording::Snapshots
    } else if out.is_some() {
        Recording::Scalars
    } else {
        Recording::Off
    };
    let outputs: Vec<TrialOutput> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| run_trial(cfg, &phi, trial, recording))
        .collect::<Result<_>>()?;

    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
    }
    let mut trials = Vec::with_capacity(outputs.len());
    for TrialOutput {
        mut report,
        trajectory,
    } in outputs
    {
        if let (Some(dir), Some((t, meta))) = (out, &trajectory) {
            let name = trajectory_file_name(report.trial);
            save_trajectory(&dir.join(&name), t, meta)?;
            report.trajectory_file = Some(name);
        }
        trials.push(report);
    }
    let report = RunReport {
        config: cfg.clone(),
        input_dim: cfg.generator.input_dim,
        feature_dim: phi.feature_dim(),
        init: cfg.init,
        aggregate: aggregate(&trials),
        trials,
    };
    if let Some(dir) = out {
        std::fs::write(dir.join(REPORT_FILE), report.to_json())?;
    }
    Ok(report)
}
