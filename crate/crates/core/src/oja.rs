//! Oja-style streaming update in feature space.
//!
//! The iterate `vᵢ = vᵢ₋₁ + η⟨φ(xᵢ), vᵢ₋₁⟩φ(xᵢ)` is never materialized. The state keeps the
//! unit direction `v̂ᵢ` and `Lᵢ = log‖vᵢ‖₂` (with `‖v₀‖₂ = 1`), advancing `L` with the closed form
//!
//! ```text
//! ‖vᵢ‖² / ‖vᵢ₋₁‖² = 1 + (2η + η²‖φ(xᵢ)‖²)·⟨φ(xᵢ), v̂ᵢ₋₁⟩²
//! ```
//!
//! so exponential norm growth cannot overflow. Memory is `O(m)` for the feature dimension `m`.

use std::borrow::Borrow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{input, Error, Result};
use crate::feature_map::FeatureMapSpec;
use crate::linalg::{dot_slices, DenseVector};

/// Upper end of the admissible learning-rate interval `(0, 0.1)`.
pub const ETA_CEILING: f64 = 0.1;

/// `η ≤ 0.1 / B` keeps every per-step growth factor below `1.21`.
pub const ETA_BOUND_FACTOR: f64 = 0.1;

/// Picks the constant learning rate: `min(0.1/B, user_eta)`, kept strictly below `0.1`.
pub fn select_learning_rate(norm_bound: f64, user_eta: Option<f64>) -> Result<f64> {
    if !(norm_bound > 0.0) || !norm_bound.is_finite() {
        return Err(input("feature norm bound must be positive and finite"));
    }
    let cap = ETA_BOUND_FACTOR / norm_bound;
    let eta = match user_eta {
        Some(u) if !(u > 0.0) || !u.is_finite() => {
            return Err(input("learning rate must be positive"));
        }
        Some(u) => u.min(cap),
        None => cap,
    };
    Ok(if eta >= ETA_CEILING {
        ETA_CEILING.next_down()
    } else {
        eta
    })
}

/// What `run_stream` keeps per step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Recording {
    #[default]
    Off,
    /// Scalars only (`s`, `‖φ‖²`, log ratio).
    Scalars,
    /// Scalars plus a copy of `v̂ᵢ` after every step; `O(n·m)` storage.
    Snapshots,
}

#[derive(Debug, Clone)]
pub struct OjaConfig {
    eta: f64,
    feature_map: FeatureMapSpec,
    recording: Recording,
}

impl OjaConfig {
    /// Validates `0 < η ≤ 0.1/B` and `η < 0.1` against the certified feature-norm bound `B`.
    pub fn new(
        eta: f64,
        feature_map: FeatureMapSpec,
        norm_bound: f64,
        recording: Recording,
    ) -> Result<Self> {
        if !(norm_bound > 0.0) {
            return Err(input("feature norm bound must be positive"));
        }
        if !(eta > 0.0) || eta >= ETA_CEILING {
            return Err(input(format!("learning rate {eta} outside (0, 0.1)")));
        }
        if eta > ETA_BOUND_FACTOR / norm_bound {
            return Err(input(format!(
                "learning rate {eta} exceeds 0.1/B = {}",
                ETA_BOUND_FACTOR / norm_bound
            )));
        }
        Ok(Self {
            eta,
            feature_map,
            recording,
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn feature_map(&self) -> &FeatureMapSpec {
        &self.feature_map
    }

    pub fn recording(&self) -> Recording {
        self.recording
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamState {
    v_hat: DenseVector,
    log_norm: f64,
    step: usize,
}

impl StreamState {
    pub fn v_hat(&self) -> &DenseVector {
        &self.v_hat
    }

    /// `log‖vᵢ‖₂` relative to `‖v₀‖₂ = 1`.
    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    pub fn step(&self) -> usize {
        self.step
    }

    /// Rebuilds a state from a recorded snapshot without renormalizing it.
    pub(crate) fn from_snapshot(v_hat: DenseVector, log_norm: f64, step: usize) -> Self {
        Self {
            v_hat,
            log_norm,
            step,
        }
    }

    /// Applies one update with an already-mapped feature vector `f = φ(x)`.
    pub fn advance(&mut self, f: &DenseVector, eta: f64, snapshot: bool) -> Result<StepRecord> {
        if f.len() != self.v_hat.len() {
            return Err(Error::Dimension {
                expected: self.v_hat.len(),
                found: f.len(),
            });
        }
        let step = self.step + 1;
        let fs = f.as_slice();
        let s = dot_slices(fs, self.v_hat.as_slice());
        let phi_norm_sq = dot_slices(fs, fs);
        let growth = (2.0 * eta + eta * eta * phi_norm_sq) * s * s;
        let log_ratio = growth.ln_1p();

        let mut u: Vec<f64> = self
            .v_hat
            .as_slice()
            .iter()
            .zip(fs)
            .map(|(v, fi)| v + eta * s * fi)
            .collect();
        let norm = dot_slices(&u, &u).sqrt();
        if !s.is_finite() || !log_ratio.is_finite() || !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Numeric {
                step,
                detail: format!("s = {s}, ‖φ‖² = {phi_norm_sq}, ‖u‖ = {norm}"),
            });
        }
        u.iter_mut().for_each(|x| *x /= norm);
        self.v_hat = DenseVector::from_vec_unchecked(u);
        self.log_norm += 0.5 * log_ratio;
        self.step = step;

        Ok(StepRecord {
            step,
            s,
            phi_norm_sq,
            log_ratio,
            v_hat: snapshot.then(|| self.v_hat.clone()),
        })
    }
}

/// Seeded Gaussian start `v₀ ~ N(0, I_m)`, normalized.
pub fn init_state(m: usize, seed: u64) -> Result<StreamState> {
    if m == 0 {
        return Err(input("feature dimension must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let g: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        if let Ok(v0) = DenseVector::from_vec_unchecked(g).normalized() {
            return Ok(StreamState {
                v_hat: v0,
                log_norm: 0.0,
                step: 0,
            });
        }
    }
}

/// Starts at a given direction; `‖v0‖` is irrelevant to the `v̂` sequence.
pub fn init_state_at(v0: &DenseVector) -> Result<StreamState> {
    let v_hat = v0
        .normalized()
        .map_err(|_| input("initial vector must be nonzero"))?;
    Ok(StreamState {
        v_hat,
        log_norm: 0.0,
        step: 0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    /// `⟨φ(xᵢ), v̂ᵢ₋₁⟩`
    pub s: f64,
    pub phi_norm_sq: f64,
    /// `log(‖vᵢ‖² / ‖vᵢ₋₁‖²)`
    pub log_ratio: f64,
    pub v_hat: Option<DenseVector>,
}

/// Oja update on a fresh copy of `state`.
pub fn oja_step(
    state: &StreamState,
    x: &DenseVector,
    cfg: &OjaConfig,
) -> Result<(StreamState, StepRecord)> {
    let f = cfg.feature_map.apply(x)?;
    let mut next = state.clone();
    let record = next.advance(&f, cfg.eta, cfg.recording == Recording::Snapshots)?;
    Ok((next, record))
}

/// A recorded run: the start direction, every step record and the final state.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub eta: f64,
    pub v_hat0: DenseVector,
    pub records: Vec<StepRecord>,
    pub final_state: StreamState,
}

impl Trajectory {
    /// Assembles a trajectory from parts (e.g. after reading one back from disk).
    pub fn from_parts(eta: f64, v_hat0: DenseVector, records: Vec<StepRecord>) -> Result<Self> {
        let log_norm = records.iter().fold(0.0, |l, r| l + 0.5 * r.log_ratio);
        let v_hat = match records.last() {
            None => v_hat0.clone(),
            Some(r) => r
                .v_hat
                .clone()
                .ok_or_else(|| input("final step has no v̂ snapshot"))?,
        };
        Ok(Self {
            eta,
            final_state: StreamState {
                v_hat,
                log_norm,
                step: records.len(),
            },
            v_hat0,
            records,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.v_hat0.len()
    }

    pub fn has_snapshots(&self) -> bool {
        self.records.iter().all(|r| r.v_hat.is_some())
    }

    /// `L₀ = 0, L₁, …, Lₙ`, accumulated from the recorded log ratios in step order.
    pub fn log_norms(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.records.len() + 1);
        let mut l = 0.0;
        out.push(l);
        for r in &self.records {
            l += 0.5 * r.log_ratio;
            out.push(l);
        }
        out
    }

    /// `v̂₀, v̂₁, …, v̂ₙ`; `None` if any snapshot is missing.
    pub fn directions(&self) -> Option<Vec<&DenseVector>> {
        let mut out = Vec::with_capacity(self.records.len() + 1);
        out.push(&self.v_hat0);
        for r in &self.records {
            out.push(r.v_hat.as_ref()?);
        }
        Some(out)
    }
}

/// Folds the update over already-mapped features.
pub fn run_features<I, F>(
    features: I,
    eta: f64,
    init: StreamState,
    recording: Recording,
) -> Result<(StreamState, Option<Trajectory>)>
where
    I: IntoIterator<Item = F>,
    F: Borrow<DenseVector>,
{
    let v_hat0 = init.v_hat.clone();
    let mut state = init;
    let mut records = Vec::new();
    let snapshot = recording == Recording::Snapshots;
    for f in features {
        let record = state.advance(f.borrow(), eta, snapshot)?;
        if recording != Recording::Off {
            records.push(record);
        }
    }
    let trajectory = (recording != Recording::Off).then(|| Trajectory {
        eta,
        v_hat0,
        records,
        final_state: state.clone(),
    });
    Ok((state, trajectory))
}

/// Runs the streaming algorithm over raw inputs in arrival order.
///
/// The returned state's `v_hat` is the output direction. An empty stream returns `init`.
pub fn run_stream<I, X>(
    xs: I,
    cfg: &OjaConfig,
    init: StreamState,
) -> Result<(StreamState, Option<Trajectory>)>
where
    I: IntoIterator<Item = X>,
    X: Borrow<DenseVector>,
{
    if init.v_hat.len() != cfg.feature_map.feature_dim() {
        return Err(Error::Dimension {
            expected: cfg.feature_map.feature_dim(),
            found: init.v_hat.len(),
        });
    }
    let features = xs.into_iter().map(|x| cfg.feature_map.apply(x.borrow()));
    let mut err = None;
    let mapped = features.map_while(|f| match f {
        Ok(f) => Some(f),
        Err(e) => {
            err = Some(e);
            None
        }
    });
    let out = run_features(mapped, cfg.eta, init, cfg.recording)?;
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DenseVector {
        DenseVector::new(x.to_vec()).unwrap()
    }

    fn identity_cfg(d: usize, eta: f64) -> OjaConfig {
        OjaConfig::new(
            eta,
            FeatureMapSpec::identity(d).unwrap(),
            1.0,
            Recording::Snapshots,
        )
        .unwrap()
    }

    #[test]
    fn learning_rate_selection() {
        assert_eq!(select_learning_rate(25.0, None).unwrap(), 0.004);
        assert_eq!(select_learning_rate(2.0, Some(0.01)).unwrap(), 0.01);
        assert_eq!(select_learning_rate(2.0, Some(0.5)).unwrap(), 0.05);
        let eta = select_learning_rate(0.5, None).unwrap();
        assert!(eta < 0.1 && eta > 0.1 - 1e-15);
        assert!(select_learning_rate(0.0, None).is_err());
        assert!(select_learning_rate(-1.0, None).is_err());
        assert!(select_learning_rate(1.0, Some(0.0)).is_err());
    }

    #[test]
    fn config_enforces_eta_cap() {
        let phi = FeatureMapSpec::identity(2).unwrap();
        assert!(OjaConfig::new(0.01, phi.clone(), 25.0, Recording::Off).is_err());
        assert!(OjaConfig::new(0.004, phi.clone(), 25.0, Recording::Off).is_ok());
        assert!(OjaConfig::new(0.1, phi, 0.5, Recording::Off).is_err());
    }

    #[test]
    fn init_is_deterministic_and_unit() {
        let a = init_state(3, 9).unwrap();
        let b = init_state(3, 9).unwrap();
        assert_eq!(a, b);
        assert!((a.v_hat().norm() - 1.0).abs() < 1e-15);
        assert_eq!(a.log_norm(), 0.0);
        assert_eq!(a.step(), 0);
        assert!(init_state(0, 1).is_err());
    }

    #[test]
    fn init_mean_is_centered() {
        // 10⁴ draws in m = 2: the direction is rotation-invariant, so each coordinate averages to 0
        let n = 10_000;
        let mut mean = [0.0; 2];
        for seed in 0..n {
            let s = init_state(2, seed).unwrap();
            mean[0] += s.v_hat()[0] / n as f64;
            mean[1] += s.v_hat()[1] / n as f64;
        }
        assert!(mean[0].abs() < 0.05 && mean[1].abs() < 0.05, "{mean:?}");
    }

    #[test]
    fn init_at_normalizes() {
        let s = init_state_at(&v(&[1.0, 0.0])).unwrap();
        assert_eq!(s.v_hat(), &v(&[1.0, 0.0]));
        let s = init_state_at(&v(&[2.0, 0.0])).unwrap();
        assert_eq!(s.v_hat(), &v(&[1.0, 0.0]));
        assert_eq!(s.log_norm(), 0.0);
        let s = init_state_at(&v(&[1.0, 1.0])).unwrap();
        let r = 0.5f64.sqrt();
        assert!((s.v_hat()[0] - r).abs() < 1e-15 && (s.v_hat()[1] - r).abs() < 1e-15);
        assert!(init_state_at(&DenseVector::zeros(2)).is_err());
    }

    #[test]
    fn orthogonal_sample_is_a_no_op() {
        let cfg = identity_cfg(2, 0.05);
        let st = init_state_at(&v(&[1.0, 0.0])).unwrap();
        let (next, rec) = oja_step(&st, &v(&[0.0, 1.0]), &cfg).unwrap();
        assert_eq!(next.v_hat(), st.v_hat());
        assert_eq!(rec.log_ratio, 0.0);
        assert_eq!(next.log_norm(), 0.0);
        assert_eq!(next.step(), 1);
    }

    #[test]
    fn collinear_sample_grows_by_one_plus_eta() {
        let cfg = identity_cfg(2, 0.05);
        let st = init_state_at(&v(&[1.0, 0.0])).unwrap();
        let (next, rec) = oja_step(&st, &v(&[1.0, 0.0]), &cfg).unwrap();
        assert_eq!(next.v_hat(), st.v_hat());
        assert!((rec.log_ratio - 1.1025f64.ln()).abs() < 1e-15);
        assert!((next.log_norm().exp() - 1.05).abs() < 1e-15);
    }

    #[test]
    fn closed_form_matches_direct_norm() {
        // oracle: 1 + (2η + η²·25)·9 against the squared norm of (1, 0) + 0.01·3·(3, 4)
        // (the step arithmetic only; this η is above 0.1/‖x‖², so the config is built with a looser B)
        let eta = 0.01;
        let cfg = OjaConfig::new(
            eta,
            FeatureMapSpec::identity(2).unwrap(),
            5.0,
            Recording::Snapshots,
        )
        .unwrap();
        let st = init_state_at(&v(&[1.0, 0.0])).unwrap();
        let (next, rec) = oja_step(&st, &v(&[3.0, 4.0]), &cfg).unwrap();
        let closed = 1.0 + (2.0 * eta + eta * eta * 25.0) * 9.0;
        let direct = 1.09f64 * 1.09 + 0.12 * 0.12;
        assert!((closed - 1.2025).abs() < 1e-14);
        assert!((direct - 1.2025).abs() < 1e-14);
        assert!((rec.log_ratio - 1.2025f64.ln()).abs() < 1e-14);
        let nrm = direct.sqrt();
        assert!((next.v_hat()[0] - 1.09 / nrm).abs() < 1e-14);
        assert!((next.v_hat()[1] - 0.12 / nrm).abs() < 1e-14);
    }

    #[test]
    fn fixed_point_stream() {
        let cfg = identity_cfg(3, 0.05);
        let e1 = v(&[1.0, 0.0, 0.0]);
        let init = init_state_at(&e1).unwrap();
        let stream = vec![e1.clone(); 50];
        let (out, traj) = run_stream(&stream, &cfg, init).unwrap();
        assert_eq!(out.v_hat(), &e1);
        assert_eq!(traj.unwrap().len(), 50);
    }

    #[test]
    fn alignment_increases_along_repeated_axis() {
        // oracle: only the e₁ coordinate grows, by (1 + η) per step, so
        // ⟨v̂ₙ, e₁⟩² = (1+η)^{2n} / ((1+η)^{2n} + 1) from a (1,1)/√2 start
        let eta = 0.05;
        let cfg = identity_cfg(2, eta);
        let e1 = v(&[1.0, 0.0]);
        let mut state = init_state_at(&v(&[1.0, 1.0])).unwrap();
        let mut prev = 0.5;
        for n in 1..=40 {
            state = oja_step(&state, &e1, &cfg).unwrap().0;
            let align = state.v_hat()[0].powi(2);
            let g = (1.0 + eta).powi(2 * n);
            assert!((align - g / (g + 1.0)).abs() < 1e-13);
            assert!(align > prev);
            prev = align;
        }
    }

    #[test]
    fn empty_stream_returns_init() {
        let cfg = identity_cfg(2, 0.05);
        let init = init_state(2, 1).unwrap();
        let (out, traj) = run_stream(Vec::<DenseVector>::new(), &cfg, init.clone()).unwrap();
        assert_eq!(out, init);
        assert_eq!(out.log_norm(), 0.0);
        assert!(traj.unwrap().is_empty());
    }

    #[test]
    fn wrong_input_dimension_propagates() {
        let cfg = identity_cfg(2, 0.05);
        let init = init_state(2, 1).unwrap();
        let stream = vec![v(&[1.0, 0.0]), v(&[1.0, 0.0, 0.0])];
        assert!(matches!(
            run_stream(&stream, &cfg, init),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn non_finite_features_abort() {
        let mut st = init_state_at(&v(&[1.0, 0.0])).unwrap();
        let huge = v(&[1e200, 0.0]);
        assert!(matches!(
            st.advance(&huge, 0.05, false),
            Err(Error::Numeric { step: 1, .. })
        ));
    }

    #[test]
    fn trajectory_from_parts_rebuilds_final_state() {
        let cfg = identity_cfg(2, 0.05);
        let init = init_state(2, 4).unwrap();
        let stream = vec![v(&[1.0, 0.5]), v(&[-0.3, 1.0]), v(&[0.2, 0.2])];
        let (_, traj) = run_stream(&stream, &cfg, init).unwrap();
        let traj = traj.unwrap();
        let rebuilt =
            Trajectory::from_parts(traj.eta, traj.v_hat0.clone(), traj.records.clone()).unwrap();
        assert_eq!(rebuilt, traj);
        assert_eq!(*traj.log_norms().last().unwrap(), traj.final_state.log_norm());
    }
}
