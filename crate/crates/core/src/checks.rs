//! Post-hoc certification of a recorded trajectory.
//!
//! Every check compares an observed side against a bound and reports the signed margin
//! `bound + slack − observed`, so a negative margin is a violation. Checks whose
//! hypotheses do not hold on the trajectory are reported as vacuous with the unmet
//! hypothesis named.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::linalg::{dot_slices, DenseVector};
use crate::numerics::{log_sum_exp, KahanSum};
use crate::oja::{StreamState, Trajectory};
use crate::oracle::AlphaBeta;

/// Additive slack on the deficient side of every inequality.
pub const SLACK: f64 = 1e-9;
/// Tolerance for the closed-form log ratio and the per-step growth bound.
pub const STEP_TOL: f64 = 1e-12;
/// Relative tolerance for replaying recorded values from the regenerated stream.
pub const REPLAY_TOL: f64 = 1e-12;
/// `‖Pv̂₀‖₂` at or below this counts as starting at `v*`.
pub const AT_V_STAR_TOL: f64 = 1e-12;
/// Explicit unnormalized reconstruction only runs up to this feature dimension...
pub const EXPLICIT_MAX_DIM: usize = 32;
/// ...and this stream length.
pub const EXPLICIT_MAX_LEN: usize = 64;
/// Random pairs drawn for the two-time-step check, on top of all adjacent pairs.
pub const SAMPLED_PAIRS: usize = 128;

pub const CLOSED_FORM_LOG_RATIO: &str = "closed_form_log_ratio";
pub const NONDECREASING_NORM: &str = "nondecreasing_norm";
pub const PER_STEP_GROWTH: &str = "per_step_growth";
pub const CUMULATIVE_GROWTH: &str = "cumulative_growth";
pub const UNNORMALIZED_INCREMENT: &str = "unnormalized_increment";
pub const UPDATE_REPLAY: &str = "update_replay";
pub const GROWTH_IMPLIES_CORRECTNESS: &str = "growth_implies_correctness";
pub const GROWTH_IMPLIES_CORRECTNESS_AT_V_STAR: &str = "growth_implies_correctness_at_v_star";
pub const TWO_TIME_STEPS: &str = "two_time_steps";
pub const PROJECTED_ENERGY: &str = "projected_energy";
pub const RIGHT_DIRECTION_GROWS: &str = "right_direction_grows";
pub const NORM_LOWER_BOUND: &str = "norm_lower_bound";
pub const FINAL_BOUND: &str = "final_bound";

/// Names of every check in report order.
pub const ALL_CHECKS: [&str; 13] = [
    CLOSED_FORM_LOG_RATIO,
    NONDECREASING_NORM,
    PER_STEP_GROWTH,
    CUMULATIVE_GROWTH,
    UNNORMALIZED_INCREMENT,
    UPDATE_REPLAY,
    GROWTH_IMPLIES_CORRECTNESS,
    GROWTH_IMPLIES_CORRECTNESS_AT_V_STAR,
    TWO_TIME_STEPS,
    PROJECTED_ENERGY,
    RIGHT_DIRECTION_GROWS,
    NORM_LOWER_BOUND,
    FINAL_BOUND,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Vacuous,
}

/// A step index (`1..=n`) or a pair `a < b` of state indices (`0..=n`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Location {
    Step(usize),
    Pair([usize; 2]),
}

/// Whether a pass is backed by the theorem's own hypotheses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Certified,
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckEntry {
    pub name: String,
    pub status: CheckStatus,
    /// Smallest signed margin seen; `None` for vacuous checks or when no finite margin exists.
    pub worst_margin: Option<f64>,
    pub location: Option<Location>,
    /// Why a check is vacuous.
    pub reason: Option<String>,
    pub detail: Option<String>,
    pub label: Option<Label>,
}

impl CheckEntry {
    fn vacuous(name: &str, reason: impl Into<String>) -> Self {
        Self {
            name: name.to_owned(),
            status: CheckStatus::Vacuous,
            worst_margin: None,
            location: None,
            reason: Some(reason.into()),
            detail: None,
            label: None,
        }
    }

    fn from_worst(name: &str, worst: Worst) -> Self {
        let pass = !(worst.margin < 0.0) && !worst.margin.is_nan();
        Self {
            name: name.to_owned(),
            status: if pass {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            },
            worst_margin: worst.margin.is_finite().then_some(worst.margin),
            location: worst.location,
            reason: None,
            detail: None,
            label: None,
        }
    }

    fn with_detail(mut self, detail: String) -> Self {
        self.detail = Some(detail);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConstants {
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub n: usize,
    pub m: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hypotheses {
    /// `‖Pv̂₀‖₂ ≤ 1e-12`.
    pub at_v_star: bool,
    pub initial_residual: f64,
    /// `η · maxᵢ ‖φ(xᵢ)‖² ≤ 0.1`.
    pub eta_bounded: bool,
    pub alpha_below_tenth: bool,
    /// `α ∈ (0, 1/(1000 ln n))`.
    pub final_bound_alpha: bool,
    /// `β ≥ 1000 ln m`.
    pub final_bound_beta: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckReport {
    pub constants: CheckConstants,
    pub hypotheses: Hypotheses,
    pub checks: Vec<CheckEntry>,
}

impl CheckReport {
    pub fn get(&self, name: &str) -> Option<&CheckEntry> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckEntry> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Fail)
    }

    pub fn has_failures(&self) -> bool {
        self.failures().next().is_some()
    }
}

/// Running minimum of margins; a NaN margin is treated as the worst possible.
#[derive(Debug, Clone, Copy)]
struct Worst {
    margin: f64,
    location: Option<Location>,
}

impl Worst {
    fn new() -> Self {
        Self {
            margin: f64::INFINITY,
            location: None,
        }
    }

    fn update(&mut self, margin: f64, location: Location) {
        let margin = if margin.is_nan() {
            f64::NEG_INFINITY
        } else {
            margin
        };
        if margin < self.margin || self.location.is_none() {
            self.margin = margin;
            self.location = Some(location);
        }
    }
}

fn snapshots(t: &Trajectory) -> Result<Vec<&DenseVector>> {
    t.directions()
        .ok_or_else(|| input("trajectory has no v̂ snapshots"))
}

fn check_features<'a>(t: &Trajectory, features: &'a [DenseVector]) -> Result<&'a [DenseVector]> {
    if features.len() != t.len() {
        return Err(input(format!(
            "{} feature vectors for a trajectory of {} steps",
            features.len(),
            t.len()
        )));
    }
    if let Some(f) = features.iter().find(|f| f.len() != t.feature_dim()) {
        return Err(Error::Dimension {
            expected: t.feature_dim(),
            found: f.len(),
        });
    }
    Ok(features)
}

fn check_v_star(t: &Trajectory, v_star: &DenseVector) -> Result<()> {
    if v_star.len() != t.feature_dim() {
        return Err(Error::Dimension {
            expected: t.feature_dim(),
            found: v_star.len(),
        });
    }
    if (v_star.norm() - 1.0).abs() > 1e-9 {
        return Err(input("v* must be a unit vector"));
    }
    Ok(())
}

/// `P v = v − ⟨v*, v⟩ v*`.
fn project(v_star: &DenseVector, v: &DenseVector) -> Vec<f64> {
    let c = dot_slices(v_star.as_slice(), v.as_slice());
    v.as_slice()
        .iter()
        .zip(v_star.as_slice())
        .map(|(x, y)| x - c * y)
        .collect()
}

fn residual(v_star: &DenseVector, v: &DenseVector) -> f64 {
    let p = project(v_star, v);
    dot_slices(&p, &p).sqrt()
}

fn at_v_star(t: &Trajectory, v_star: &DenseVector) -> (bool, f64) {
    let r0 = residual(v_star, &t.v_hat0);
    (r0 <= AT_V_STAR_TOL, r0)
}

fn require_at_v_star(t: &Trajectory, v_star: &DenseVector) -> Result<()> {
    let (ok, r0) = at_v_star(t, v_star);
    if ok {
        Ok(())
    } else {
        Err(Error::Precondition(format!(
            "initialization is not v* (‖Pv̂₀‖₂ = {r0:.3e})"
        )))
    }
}

fn max_phi_norm_sq(t: &Trajectory) -> f64 {
    t.records
        .iter()
        .map(|r| r.phi_norm_sq)
        .fold(0.0, f64::max)
}

/// The five per-step and per-pair properties of the update.
///
/// With `features`, the closed-form log ratio is also compared against a direct norm
/// evaluation of the unnormalized update, and the explicit unnormalized increment check
/// runs when the trajectory is small enough.
pub fn check_update_properties(
    t: &Trajectory,
    features: Option<&[DenseVector]>,
) -> Result<Vec<CheckEntry>> {
    let dirs = snapshots(t)?;
    let features = features.map(|f| check_features(t, f)).transpose()?;
    let eta = t.eta;

    let mut closed = Worst::new();
    for (i, r) in t.records.iter().enumerate() {
        let expected = ((2.0 * eta + eta * eta * r.phi_norm_sq) * r.s * r.s).ln_1p();
        let mut gap = (r.log_ratio - expected).abs();
        if let Some(fs) = features {
            let f = fs[i].as_slice();
            let u: Vec<f64> = dirs[i]
                .as_slice()
                .iter()
                .zip(f)
                .map(|(v, fi)| v + eta * r.s * fi)
                .collect();
            let direct = dot_slices(&u, &u).ln();
            gap = gap.max((r.log_ratio - direct).abs());
        }
        closed.update(STEP_TOL - gap, Location::Step(r.step));
    }

    let mut monotone = Worst::new();
    for r in &t.records {
        monotone.update(r.log_ratio + SLACK, Location::Step(r.step));
    }

    let max_phi = max_phi_norm_sq(t);
    let per_step = if eta * max_phi <= 0.1 * (1.0 + 1e-12) {
        let mut worst = Worst::new();
        let mut half = f64::INFINITY;
        for r in &t.records {
            let gain = eta * r.s * r.s;
            worst.update(r.log_ratio - gain + STEP_TOL, Location::Step(r.step));
            half = half.min(r.log_ratio - 0.5 * gain);
        }
        let detail = if half.is_finite() {
            format!("worst margin against the 0.5·η·s² form: {half:.3e}")
        } else {
            "empty trajectory".to_owned()
        };
        CheckEntry::from_worst(PER_STEP_GROWTH, worst).with_detail(detail)
    } else {
        CheckEntry::vacuous(
            PER_STEP_GROWTH,
            format!("η·max‖φ(x)‖² = {:.6} exceeds 0.1", eta * max_phi),
        )
    };

    // The worst pair a < b minimizes Σ_{a<i≤b} (log_ratioᵢ − η sᵢ²): a minimum-sum run.
    let mut cumulative = Worst::new();
    let mut run = 0.0;
    let mut run_start = 0;
    for (i, r) in t.records.iter().enumerate() {
        let d = r.log_ratio - eta * r.s * r.s;
        if run > 0.0 {
            run = 0.0;
            run_start = i;
        }
        run += d;
        cumulative.update(run + SLACK, Location::Pair([run_start, i + 1]));
    }

    let explicit = match features {
        None => CheckEntry::vacuous(UNNORMALIZED_INCREMENT, "feature vectors unavailable"),
        Some(_) if t.feature_dim() > EXPLICIT_MAX_DIM || t.len() > EXPLICIT_MAX_LEN => {
            CheckEntry::vacuous(
                UNNORMALIZED_INCREMENT,
                format!(
                    "explicit reconstruction limited to m ≤ {EXPLICIT_MAX_DIM}, n ≤ {EXPLICIT_MAX_LEN} \
                     (m = {}, n = {})",
                    t.feature_dim(),
                    t.len()
                ),
            )
        }
        Some(fs) => unnormalized_increment(t, &dirs, fs),
    };

    Ok(vec![
        CheckEntry::from_worst(CLOSED_FORM_LOG_RATIO, closed),
        CheckEntry::from_worst(NONDECREASING_NORM, monotone),
        per_step,
        CheckEntry::from_worst(CUMULATIVE_GROWTH, cumulative),
        explicit,
    ])
}

/// `v_b − v_a = Σ_{a<i≤b} η φ(xᵢ)⟨φ(xᵢ), vᵢ₋₁⟩` entrywise, with `vᵢ = exp(Lᵢ) v̂ᵢ`.
fn unnormalized_increment(
    t: &Trajectory,
    dirs: &[&DenseVector],
    features: &[DenseVector],
) -> CheckEntry {
    let logs = t.log_norms();
    let vs: Vec<Vec<f64>> = dirs
        .iter()
        .zip(&logs)
        .map(|(d, l)| d.as_slice().iter().map(|x| x * l.exp()).collect())
        .collect();
    let increments: Vec<Vec<f64>> = features
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let c = t.eta * dot_slices(f.as_slice(), &vs[i]);
            f.as_slice().iter().map(|x| c * x).collect()
        })
        .collect();
    let m = t.feature_dim();
    let mut worst = Worst::new();
    for a in 0..t.len() {
        let mut acc = vec![0.0; m];
        for b in (a + 1)..=t.len() {
            acc.iter_mut()
                .zip(&increments[b - 1])
                .for_each(|(x, y)| *x += y);
            let scale = vs[a]
                .iter()
                .chain(&vs[b])
                .fold(f64::MIN_POSITIVE, |s, x| s.max(x.abs()));
            let err = (0..m)
                .map(|k| ((vs[b][k] - vs[a][k]) - acc[k]).abs())
                .fold(0.0, f64::max);
            worst.update(SLACK - err / scale, Location::Pair([a, b]));
        }
    }
    CheckEntry::from_worst(UNNORMALIZED_INCREMENT, worst)
}

/// Recomputes `s`, `‖φ‖²`, the log ratio and `v̂ᵢ` from `v̂ᵢ₋₁` and the regenerated features.
///
/// A faithful replay reproduces the recorded values bit for bit; the tolerance only
/// absorbs formatting that is not round-trip exact.
pub fn check_update_replay(t: &Trajectory, features: &[DenseVector]) -> Result<CheckEntry> {
    let dirs = snapshots(t)?;
    let features = check_features(t, features)?;
    let logs = t.log_norms();
    let rel = |recorded: f64, replayed: f64| {
        let gap = (recorded - replayed).abs();
        if gap == 0.0 {
            0.0
        } else {
            gap / recorded.abs().max(replayed.abs())
        }
    };
    let mut worst = Worst::new();
    for (i, r) in t.records.iter().enumerate() {
        let mut state = StreamState::from_snapshot(dirs[i].clone(), logs[i], i);
        let replay = state.advance(&features[i], t.eta, true)?;
        let v_new = replay.v_hat.expect("snapshot requested");
        let mut err = rel(r.s, replay.s)
            .max(rel(r.phi_norm_sq, replay.phi_norm_sq))
            .max(rel(r.log_ratio, replay.log_ratio));
        for (a, b) in dirs[i + 1].as_slice().iter().zip(v_new.as_slice()) {
            err = err.max(rel(*a, *b));
        }
        worst.update(REPLAY_TOL - err, Location::Step(r.step));
    }
    Ok(CheckEntry::from_worst(UPDATE_REPLAY, worst))
}

/// `‖Pv̂ᵢ‖₂ ≤ √α + exp(−Lᵢ)‖Pv̂₀‖₂` at every step, and `‖Pv̂ᵢ‖₂ ≤ √α` when starting at `v*`.
pub fn check_growth_implies_correctness(
    t: &Trajectory,
    v_star: &DenseVector,
    alpha: f64,
) -> Result<Vec<CheckEntry>> {
    let dirs = snapshots(t)?;
    check_v_star(t, v_star)?;
    let logs = t.log_norms();
    let sqrt_alpha = alpha.max(0.0).sqrt();
    let r0 = residual(v_star, dirs[0]);
    let mut general = Worst::new();
    let mut corollary = Worst::new();
    for (i, (d, l)) in dirs.iter().zip(&logs).enumerate().skip(1) {
        let r = residual(v_star, d);
        general.update(sqrt_alpha + (-l).exp() * r0 + SLACK - r, Location::Step(i));
        corollary.update(sqrt_alpha + SLACK - r, Location::Step(i));
    }
    let corollary = if r0 <= AT_V_STAR_TOL {
        CheckEntry::from_worst(GROWTH_IMPLIES_CORRECTNESS_AT_V_STAR, corollary)
    } else {
        CheckEntry::vacuous(
            GROWTH_IMPLIES_CORRECTNESS_AT_V_STAR,
            format!("initialization is not v* (‖Pv̂₀‖₂ = {r0:.3e})"),
        )
    };
    Ok(vec![
        CheckEntry::from_worst(GROWTH_IMPLIES_CORRECTNESS, general),
        corollary,
    ])
}

/// All adjacent pairs plus `SAMPLED_PAIRS` pairs drawn from `seed`.
pub fn sample_pairs(n: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(usize, usize)> = (1..=n).map(|b| (b - 1, b)).collect();
    if n >= 2 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        while pairs.len() < n + SAMPLED_PAIRS {
            let a = rng.random_range(0..=n);
            let b = rng.random_range(0..=n);
            if a != b {
                pairs.push((a.min(b), a.max(b)));
            }
        }
    }
    pairs
}

/// `‖Pv̂_b − Pv̂_a‖₂² ≤ 50·α·(L_b − L_a)` over the sampled pairs. Requires `v̂₀ = v*`.
pub fn check_two_time_steps(
    t: &Trajectory,
    v_star: &DenseVector,
    alpha: f64,
    pair_seed: u64,
) -> Result<CheckEntry> {
    let dirs = snapshots(t)?;
    check_v_star(t, v_star)?;
    require_at_v_star(t, v_star)?;
    let logs = t.log_norms();
    let projected: Vec<Vec<f64>> = dirs.iter().map(|d| project(v_star, d)).collect();
    let mut worst = Worst::new();
    for (a, b) in sample_pairs(t.len(), pair_seed) {
        let lhs: f64 = projected[b]
            .iter()
            .zip(&projected[a])
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        let rhs = 50.0 * alpha * (logs[b] - logs[a]);
        worst.update(rhs + SLACK - lhs, Location::Pair([a, b]));
    }
    Ok(CheckEntry::from_worst(TWO_TIME_STEPS, worst))
}

/// `η Σᵢ⟨φ(xᵢ), Pv̂ᵢ₋₁⟩² ≤ 100·α²·ln²n·Lₙ`. Requires `v̂₀ = v*`.
pub fn check_projected_energy(
    t: &Trajectory,
    features: &[DenseVector],
    v_star: &DenseVector,
    alpha: f64,
) -> Result<CheckEntry> {
    let dirs = snapshots(t)?;
    let features = check_features(t, features)?;
    check_v_star(t, v_star)?;
    require_at_v_star(t, v_star)?;
    let mut lhs = KahanSum::new();
    for (f, d) in features.iter().zip(&dirs) {
        let c = dot_slices(f.as_slice(), &project(v_star, d));
        lhs.add(t.eta * c * c);
    }
    let lhs = lhs.value();
    let ln_n = (t.len().max(1) as f64).ln();
    let l_n = t.final_state.log_norm();
    let rhs = 100.0 * alpha * alpha * ln_n * ln_n * l_n;
    let mut worst = Worst::new();
    worst.update(rhs + SLACK - lhs, Location::Step(t.len()));
    Ok(CheckEntry::from_worst(PROJECTED_ENERGY, worst)
        .with_detail(format!("lhs = {lhs:.6e}, rhs = {rhs:.6e}")))
}

/// `Lₙ ≥ (β/8)/(1 + 200α²ln²n)` (at `v*` with `α < 0.1`) and
/// `2Lₙ ≥ ln η + ln Σᵢ sᵢ² exp(2Lᵢ₋₁)` (always).
pub fn check_norm_lower_bounds(
    t: &Trajectory,
    v_star: &DenseVector,
    alpha: f64,
    beta: f64,
) -> Result<Vec<CheckEntry>> {
    check_v_star(t, v_star)?;
    let logs = t.log_norms();
    let l_n = t.final_state.log_norm();
    let n = t.len();

    let (at_star, r0) = at_v_star(t, v_star);
    let grows = if !at_star {
        CheckEntry::vacuous(
            RIGHT_DIRECTION_GROWS,
            format!("initialization is not v* (‖Pv̂₀‖₂ = {r0:.3e})"),
        )
    } else if !(alpha < 0.1) {
        CheckEntry::vacuous(RIGHT_DIRECTION_GROWS, format!("α = {alpha:.6} is not below 0.1"))
    } else {
        let ln_n = (n.max(1) as f64).ln();
        let rhs = (beta / 8.0) / (1.0 + 200.0 * alpha * alpha * ln_n * ln_n);
        let mut worst = Worst::new();
        worst.update(l_n + SLACK - rhs, Location::Step(n));
        CheckEntry::from_worst(RIGHT_DIRECTION_GROWS, worst)
            .with_detail(format!("L_n = {l_n:.6e}, bound = {rhs:.6e}"))
    };

    let terms: Vec<f64> = t
        .records
        .iter()
        .zip(&logs)
        .map(|(r, l)| (r.s * r.s).ln() + 2.0 * l)
        .collect();
    let rhs = t.eta.ln() + log_sum_exp(&terms);
    let mut worst = Worst::new();
    worst.update(2.0 * l_n + SLACK - rhs, Location::Step(n));
    let lower = CheckEntry::from_worst(NORM_LOWER_BOUND, worst)
        .with_detail(format!("2·L_n = {:.6e}, log bound = {rhs:.6e}", 2.0 * l_n));

    Ok(vec![grows, lower])
}

/// `‖Pv̂ₙ‖₂ ≤ √α + exp(−β/200)` for this one trajectory.
///
/// A single run cannot certify the probability attached to the bound; the label records
/// whether the bound's own hypotheses (`α < 1/(1000 ln n)`, `β ≥ 1000 ln m`) hold.
pub fn check_final_bound(
    t: &Trajectory,
    v_star: &DenseVector,
    alpha: f64,
    beta: f64,
) -> Result<CheckEntry> {
    check_v_star(t, v_star)?;
    let observed = residual(v_star, t.final_state.v_hat());
    let bound = alpha.max(0.0).sqrt() + (-beta / 200.0).exp();
    let mut worst = Worst::new();
    worst.update(bound + SLACK - observed, Location::Step(t.len()));
    let mut entry = CheckEntry::from_worst(FINAL_BOUND, worst)
        .with_detail(format!("observed = {observed:.6e}, bound = {bound:.6e}"));
    let (a_ok, b_ok) = final_bound_hypotheses(alpha, beta, t.len(), t.feature_dim());
    entry.label = Some(if a_ok && b_ok {
        Label::Certified
    } else {
        Label::Empirical
    });
    Ok(entry)
}

/// Whether `α ∈ (0, 1/(1000 ln n))` and `β ≥ 1000 ln m` hold.
pub fn final_bound_hypotheses(alpha: f64, beta: f64, n: usize, m: usize) -> (bool, bool) {
    let ln_n = (n as f64).ln();
    let a_ok = alpha > 0.0 && ln_n > 0.0 && alpha < 1.0 / (1000.0 * ln_n);
    let b_ok = beta >= 1000.0 * (m as f64).ln();
    (a_ok, b_ok)
}

fn gated(name: &str, result: Result<CheckEntry>) -> Result<CheckEntry> {
    match result {
        Err(Error::Precondition(reason)) => Ok(CheckEntry::vacuous(name, reason)),
        other => other,
    }
}

/// Runs every check once, in `ALL_CHECKS` order.
///
/// `features` are `φ(xᵢ)` for the stream that produced `t`; `pair_seed` drives the pair
/// sampling so reports are reproducible.
pub fn certify(
    t: &Trajectory,
    features: &[DenseVector],
    constants: &AlphaBeta,
    pair_seed: u64,
) -> Result<CheckReport> {
    snapshots(t)?;
    check_features(t, features)?;
    let v_star = &constants.v_star;
    check_v_star(t, v_star)?;
    let (alpha, beta) = (constants.alpha, constants.beta);

    let mut checks = check_update_properties(t, Some(features))?;
    checks.push(check_update_replay(t, features)?);
    checks.extend(check_growth_implies_correctness(t, v_star, alpha)?);
    checks.push(gated(
        TWO_TIME_STEPS,
        check_two_time_steps(t, v_star, alpha, pair_seed),
    )?);
    checks.push(gated(
        PROJECTED_ENERGY,
        check_projected_energy(t, features, v_star, alpha),
    )?);
    checks.extend(check_norm_lower_bounds(t, v_star, alpha, beta)?);
    checks.push(check_final_bound(t, v_star, alpha, beta)?);
    debug_assert!(checks.iter().map(|c| c.name.as_str()).eq(ALL_CHECKS));

    let (at_star, r0) = at_v_star(t, v_star);
    let (fa, fb) = final_bound_hypotheses(alpha, beta, t.len(), t.feature_dim());
    Ok(CheckReport {
        constants: CheckConstants {
            alpha,
            beta,
            eta: t.eta,
            n: t.len(),
            m: t.feature_dim(),
        },
        hypotheses: Hypotheses {
            at_v_star: at_star,
            initial_residual: r0,
            eta_bounded: t.eta * max_phi_norm_sq(t) <= 0.1 * (1.0 + 1e-12),
            alpha_below_tenth: alpha < 0.1,
            final_bound_alpha: fa,
            final_bound_beta: fb,
        },
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oja::{init_state, init_state_at, run_features, Recording};
    use crate::oracle::{compute_alpha_beta, summarize_features};

    fn v(x: &[f64]) -> DenseVector {
        DenseVector::new(x.to_vec()).unwrap()
    }

    fn run(features: &[DenseVector], eta: f64, init: StreamState) -> Trajectory {
        run_features(features, eta, init, Recording::Snapshots)
            .unwrap()
            .1
            .unwrap()
    }

    fn axis_stream(n: usize) -> Vec<DenseVector> {
        vec![v(&[1.0, 0.0, 0.0]); n]
    }

    fn gaussian_features(n: usize, m: usize, seed: u64) -> Vec<DenseVector> {
        use rand_distr::StandardNormal;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..m)
                    .map(|k| {
                        let g: f64 = rng.sample(StandardNormal);
                        g / (1.0 + 2.0 * k as f64)
                    })
                    .collect();
                v(&x)
            })
            .collect()
    }

    fn max_eta(features: &[DenseVector]) -> f64 {
        let b = features.iter().map(|f| f.norm_sq()).fold(0.0, f64::max);
        0.1 / b
    }

    fn certify_run(features: &[DenseVector], init_at_star: bool, seed: u64) -> CheckReport {
        let eta = max_eta(features);
        let summary = summarize_features(features).unwrap();
        let ab = compute_alpha_beta(&summary, eta, &summary.top_vector).unwrap();
        let init = if init_at_star {
            init_state_at(&summary.top_vector).unwrap()
        } else {
            init_state(features[0].len(), seed).unwrap()
        };
        let t = run(features, eta, init);
        certify(&t, features, &ab, seed).unwrap()
    }

    fn status(report: &CheckReport, name: &str) -> CheckStatus {
        report.get(name).unwrap().status
    }

    #[test]
    fn fixed_point_passes_everything() {
        let fs = axis_stream(20);
        let report = certify_run(&fs, true, 1);
        assert_eq!(report.checks.len(), ALL_CHECKS.len());
        assert!(!report.has_failures(), "{report:#?}");
        for name in ALL_CHECKS {
            assert_ne!(status(&report, name), CheckStatus::Fail, "{name}");
        }
        assert_eq!(report.constants.alpha, 0.0);
        assert!(report.hypotheses.at_v_star);
    }

    #[test]
    fn axis_aligned_residuals_are_zero() {
        let fs = axis_stream(10);
        let t = run(&fs, 0.05, init_state_at(&v(&[1.0, 0.0, 0.0])).unwrap());
        let e1 = v(&[1.0, 0.0, 0.0]);
        let entries = check_growth_implies_correctness(&t, &e1, 0.0).unwrap();
        for e in &entries {
            assert_eq!(e.status, CheckStatus::Pass);
            assert_eq!(e.worst_margin, Some(SLACK));
        }
        let pairs = check_two_time_steps(&t, &e1, 0.0, 3).unwrap();
        assert_eq!(pairs.status, CheckStatus::Pass);
        let energy = check_projected_energy(&t, &fs, &e1, 0.0).unwrap();
        assert_eq!(energy.worst_margin, Some(SLACK));
    }

    #[test]
    fn no_op_step_pair_is_zero() {
        let fs = vec![v(&[1.0, 0.0]), v(&[0.0, 1.0]), v(&[1.0, 0.0])];
        let t = run(&fs, 0.05, init_state_at(&v(&[1.0, 0.0])).unwrap());
        assert_eq!(t.records[1].s, 0.0);
        assert_eq!(t.records[1].log_ratio, 0.0);
        let e = check_two_time_steps(&t, &v(&[1.0, 0.0]), 0.05, 0).unwrap();
        assert_eq!(e.status, CheckStatus::Pass);
    }

    #[test]
    fn right_direction_closed_form() {
        // oracle: Lₙ = (n/2)·ln(1+η)² and β = ηn, so the margin is n·ln(1+η) − ηn/8
        let n = 40;
        let eta = 0.1;
        let fs = axis_stream(n);
        let e1 = v(&[1.0, 0.0, 0.0]);
        let t = run(&fs, eta, init_state_at(&e1).unwrap());
        let beta = eta * n as f64;
        let entries = check_norm_lower_bounds(&t, &e1, 0.0, beta).unwrap();
        let expected = n as f64 * (1.0f64 + eta).ln() - beta / 8.0 + SLACK;
        let got = entries[0].worst_margin.unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
        assert!(entries.iter().all(|e| e.status == CheckStatus::Pass));
    }

    #[test]
    fn single_step_norm_lower_bound() {
        // oracle: n = 1, s = 1, ‖f‖² = 1 → 2L₁ = ln(1+η)², bound = ln η
        let eta = 0.05;
        let e1 = v(&[1.0, 0.0, 0.0]);
        let t = run(&axis_stream(1), eta, init_state_at(&e1).unwrap());
        let entries = check_norm_lower_bounds(&t, &e1, 0.0, eta).unwrap();
        let margin = entries[1].worst_margin.unwrap();
        let expected = 2.0 * (1.0f64 + eta).ln() - eta.ln() + SLACK;
        assert!((margin - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_beta_is_trivial() {
        let fs = vec![v(&[0.0, 1.0]); 5];
        let e1 = v(&[1.0, 0.0]);
        let t = run(&fs, 0.05, init_state_at(&e1).unwrap());
        let entries = check_norm_lower_bounds(&t, &e1, 0.0, 0.0).unwrap();
        assert_eq!(entries[0].status, CheckStatus::Pass);
        let fin = check_final_bound(&t, &e1, 0.0, 0.0).unwrap();
        assert_eq!(fin.status, CheckStatus::Pass);
        assert_eq!(fin.label, Some(Label::Empirical));
    }

    #[test]
    fn random_stream_passes() {
        for seed in 0..4 {
            let fs = gaussian_features(60, 6, seed);
            for at_star in [true, false] {
                let report = certify_run(&fs, at_star, seed);
                assert!(!report.has_failures(), "seed {seed}: {report:#?}");
                assert_eq!(report.hypotheses.at_v_star, at_star);
                let explicit = status(&report, UNNORMALIZED_INCREMENT);
                assert_eq!(explicit, CheckStatus::Pass);
            }
        }
    }

    #[test]
    fn random_init_gates_at_v_star_lemmas() {
        let fs = gaussian_features(30, 4, 9);
        let report = certify_run(&fs, false, 9);
        for name in [
            GROWTH_IMPLIES_CORRECTNESS_AT_V_STAR,
            TWO_TIME_STEPS,
            PROJECTED_ENERGY,
            RIGHT_DIRECTION_GROWS,
        ] {
            let e = report.get(name).unwrap();
            assert_eq!(e.status, CheckStatus::Vacuous, "{name}");
            assert!(e.reason.as_deref().unwrap().contains("not v*"));
        }
        let eta = max_eta(&fs);
        let t = run(&fs, eta, init_state(4, 9).unwrap());
        let e = DenseVector::basis(4, 0);
        assert!(matches!(
            check_two_time_steps(&t, &e, 0.1, 0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn tampered_log_ratio_fails_monotonicity_at_that_step() {
        let fs = gaussian_features(30, 4, 2);
        let mut t = run(&fs, max_eta(&fs), init_state(4, 2).unwrap());
        t.records[7].log_ratio -= 1.0;
        let entries = check_update_properties(&t, Some(&fs)).unwrap();
        let mono = &entries[1];
        assert_eq!(mono.name, NONDECREASING_NORM);
        assert_eq!(mono.status, CheckStatus::Fail);
        assert_eq!(mono.location, Some(Location::Step(8)));
    }

    #[test]
    fn every_scalar_perturbation_is_detected() {
        let fs = gaussian_features(20, 5, 4);
        let eta = max_eta(&fs);
        let summary = summarize_features(&fs).unwrap();
        let ab = compute_alpha_beta(&summary, eta, &summary.top_vector).unwrap();
        let t = run(&fs, eta, init_state(5, 4).unwrap());
        assert!(!certify(&t, &fs, &ab, 0).unwrap().has_failures());
        for i in 0..t.len() {
            for field in 0..4 {
                let mut bad = t.clone();
                let r = &mut bad.records[i];
                match field {
                    0 => r.s *= 1.0 + 1e-3,
                    1 => r.phi_norm_sq *= 1.0 + 1e-3,
                    2 => r.log_ratio *= 1.0 + 1e-3,
                    _ => {
                        let mut x = r.v_hat.clone().unwrap().into_vec();
                        x[i % 5] *= 1.0 + 1e-3;
                        r.v_hat = Some(v(&x));
                    }
                }
                let report = certify(&bad, &fs, &ab, 0).unwrap();
                assert!(report.has_failures(), "step {i} field {field}");
            }
        }
    }

    #[test]
    fn large_trajectories_skip_explicit_reconstruction() {
        let fs = gaussian_features(EXPLICIT_MAX_LEN + 1, 3, 5);
        let report = certify_run(&fs, false, 5);
        let e = report.get(UNNORMALIZED_INCREMENT).unwrap();
        assert_eq!(e.status, CheckStatus::Vacuous);
        assert!(e.reason.as_deref().unwrap().contains("n ≤ 64"));
    }

    #[test]
    fn missing_snapshots_is_an_input_error() {
        let fs = axis_stream(3);
        let (_, t) = run_features(
            &fs,
            0.05,
            init_state_at(&v(&[1.0, 0.0, 0.0])).unwrap(),
            Recording::Scalars,
        )
        .unwrap();
        let t = t.unwrap();
        assert!(matches!(
            check_update_properties(&t, None),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn certification_is_deterministic() {
        let fs = gaussian_features(50, 4, 11);
        let a = certify_run(&fs, true, 11);
        let b = certify_run(&fs, true, 11);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn pairs_cover_adjacent_and_sampled() {
        let pairs = sample_pairs(10, 3);
        assert_eq!(pairs.len(), 10 + SAMPLED_PAIRS);
        assert!((1..=10).all(|b| pairs.contains(&(b - 1, b))));
        assert!(pairs.iter().all(|&(a, b)| a < b && b <= 10));
        assert_eq!(pairs, sample_pairs(10, 3));
        assert_eq!(sample_pairs(1, 3), vec![(0, 1)]);
    }

    #[test]
    fn report_serializes() {
        let report = certify_run(&axis_stream(4), true, 0);
        let json = serde_json::to_string(&report).unwrap();
        let back: CheckReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }
}
