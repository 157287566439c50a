//! Run reports: per-trial metrics and their deterministic aggregate.

use serde::{Deserialize, Serialize};

use super::config::{InitKind, RunConfig, TrialSeeds};
use crate::checks::{CheckReport, Label};
use crate::numerics::quantile;
use crate::oracle::SpectralRatio;

/// Slack on the seed-aggregated failure fraction of the final bound.
pub const FAILURE_SAMPLING_SLACK: f64 = 0.05;
/// `C` in the ratio hypothesis `R ≥ C·ln n·ln d`.
pub const RATIO_HYPOTHESIS_CONSTANT: f64 = 1e4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialMetrics {
    /// `1 − ⟨x*, v̂ₙ⟩²` against the offline top eigenvector of the stream.
    pub alignment_error: f64,
    /// Same against the population spike direction; identity feature map only.
    pub population_alignment_error: Option<f64>,
    /// `‖Pv̂ₙ‖₂`.
    pub projection_residual: f64,
    /// `Lₙ = log‖vₙ‖₂`.
    pub log_norm: f64,
    pub ratio: SpectralRatio,
    pub lambda1: f64,
    pub lambda2: f64,
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    /// `maxᵢ ‖φ(xᵢ)‖²` over the stream, the bound `η` was chosen against.
    pub norm_bound: f64,
    /// Certified feature-norm bound implied by the generator's norm guard.
    pub guard_norm_bound: f64,
    pub rejected_samples: usize,
    /// `√α + exp(−β/200)`.
    pub final_bound: f64,
    pub final_bound_satisfied: bool,
    pub final_bound_label: Label,
    /// `R ≥ 10⁴·ln n·ln d`.
    pub ratio_hypothesis: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialReport {
    pub trial: usize,
    pub seeds: TrialSeeds,
    pub metrics: Option<TrialMetrics>,
    /// Set when the trial aborted on a numeric failure.
    pub error: Option<String>,
    pub checks: Option<CheckReport>,
    pub trajectory_file: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Quantiles {
    pub min: f64,
    pub q10: f64,
    pub median: f64,
    pub q90: f64,
    pub max: f64,
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        let q = |p| quantile(values, p);
        Some(Self {
            min: q(0.0)?,
            q10: q(0.1)?,
            median: q(0.5)?,
            q90: q(0.9)?,
            max: q(1.0)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Aggregate {
    pub completed: usize,
    pub aborted: usize,
    pub alignment_error: Option<Quantiles>,
    pub population_alignment_error: Option<Quantiles>,
    pub projection_residual: Option<Quantiles>,
    pub median_ratio: Option<SpectralRatio>,
    /// Fraction of trials with `‖Pv̂ₙ‖₂` above `√α + exp(−β/200)`.
    pub failure_fraction: Option<f64>,
    /// Mean of `exp(−β/200)` over trials plus the sampling slack.
    pub failure_allowance: Option<f64>,
    pub failure_within_allowance: Option<bool>,
    pub final_bound_certified_fraction: Option<f64>,
    pub ratio_hypothesis_fraction: Option<f64>,
    pub checked_trials: usize,
    pub failed_check_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub config: RunConfig,
    pub input_dim: usize,
    pub feature_dim: usize,
    pub init: InitKind,
    pub trials: Vec<TrialReport>,
    pub aggregate: Aggregate,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn metrics(&self) -> impl Iterator<Item = &TrialMetrics> {
        self.trials.iter().filter_map(|t| t.metrics.as_ref())
    }

    pub fn any_check_failed(&self) -> bool {
        self.aggregate.failed_check_trials > 0
    }

    pub fn all_aborted(&self) -> bool {
        self.aggregate.completed == 0
    }
}

fn fraction(hits: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| hits as f64 / total as f64)
}

/// Aggregates trials in trial-index order, so the result does not depend on completion order.
pub fn aggregate(trials: &[TrialReport]) -> Aggregate {
    let metrics: Vec<&TrialMetrics> = trials.iter().filter_map(|t| t.metrics.as_ref()).collect();
    let k = metrics.len();
    let collect = |f: fn(&TrialMetrics) -> f64| metrics.iter().map(|m| f(m)).collect::<Vec<_>>();
    let population: Vec<f64> = metrics
        .iter()
        .filter_map(|m| m.population_alignment_error)
        .collect();
    let ratios = collect(|m| m.ratio.value());
    let failures = metrics.iter().filter(|m| !m.final_bound_satisfied).count();
    let failure_fraction = fraction(failures, k);
    let failure_allowance = (k > 0).then(|| {
        metrics
            .iter()
            .map(|m| (-m.beta / 200.0).exp())
            .sum::<f64>()
            / k as f64
            + FAILURE_SAMPLING_SLACK
    });
    let checked: Vec<&CheckReport> = trials.iter().filter_map(|t| t.checks.as_ref()).collect();
    Aggregate {
        completed: k,
        aborted: trials.len() - k,
        alignment_error: Quantiles::of(&collect(|m| m.alignment_error)),
        population_alignment_error: Quantiles::of(&population),
        projection_residual: Quantiles::of(&collect(|m| m.projection_residual)),
        median_ratio: quantile(&ratios, 0.5).map(SpectralRatio::from_value),
        failure_fraction,
        failure_allowance,
        failure_within_allowance: failure_fraction
            .zip(failure_allowance)
            .map(|(f, a)| f <= a),
        final_bound_certified_fraction: fraction(
            metrics
                .iter()
                .filter(|m| m.final_bound_label == Label::Certified)
                .count(),
            k,
        ),
        ratio_hypothesis_fraction: fraction(
            metrics.iter().filter(|m| m.ratio_hypothesis).count(),
            k,
        ),
        checked_trials: checked.len(),
        failed_check_trials: checked.iter().filter(|c| c.has_failures()).count(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_are_monotone() {
        let q = Quantiles::of(&[0.5, 0.1, 0.9, 0.3, 0.7]).unwrap();
        assert!(q.min <= q.q10 && q.q10 <= q.median && q.median <= q.q90 && q.q90 <= q.max);
        assert_eq!(q.median, 0.5);
        assert!(Quantiles::of(&[]).is_none());
    }

    #[test]
    fn empty_aggregate() {
        let a = aggregate(&[]);
        assert_eq!(a.completed, 0);
        assert!(a.failure_fraction.is_none());
    }
}
