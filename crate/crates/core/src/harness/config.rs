//! Run configuration: JSON file format, validation and per-trial seed derivation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::SpikedSpec;
use crate::error::{Error, Result};
use crate::feature_map::{FeatureKind, FeatureMapSpec};
use crate::linalg::MAX_ORACLE_DIM;
use crate::oja::ETA_CEILING;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FeatureMapConfig {
    Identity,
    Poly2,
    Rff {
        feature_dim: usize,
        bandwidth: f64,
        /// Draw seed; derived from the run seed when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
}

impl FeatureMapConfig {
    pub fn kind(&self) -> FeatureKind {
        match self {
            Self::Identity => FeatureKind::Identity,
            Self::Poly2 => FeatureKind::Poly2,
            Self::Rff { .. } => FeatureKind::Rff,
        }
    }

    pub fn feature_dim(&self, input_dim: usize) -> usize {
        match self {
            Self::Identity => input_dim,
            Self::Poly2 => input_dim * (input_dim + 1) / 2,
            Self::Rff { feature_dim, .. } => *feature_dim,
        }
    }
}

/// Spiked-covariance knobs. The population ratio is `R = λ₁/λ₂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub input_dim: usize,
    pub n: usize,
    pub ratio: f64,
    #[serde(default = "default_lambda1")]
    pub lambda1: f64,
    #[serde(default = "default_tail_decay")]
    pub tail_decay: f64,
}

fn default_lambda1() -> f64 {
    1.0
}

fn default_tail_decay() -> f64 {
    1.0
}

/// `"auto"` (`η = 0.1/B`) or a fixed value, still capped at `0.1/B`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "EtaRepr", into = "EtaRepr")]
pub enum EtaPolicy {
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum EtaRepr {
    Fixed(f64),
    Word(String),
}

impl TryFrom<EtaRepr> for EtaPolicy {
    type Error = String;

    fn try_from(r: EtaRepr) -> std::result::Result<Self, String> {
        match r {
            EtaRepr::Fixed(x) => Ok(Self::Fixed(x)),
            EtaRepr::Word(w) if w == "auto" => Ok(Self::Auto),
            EtaRepr::Word(w) => Err(format!("eta must be \"auto\" or a number, got \"{w}\"")),
        }
    }
}

impl From<EtaPolicy> for EtaRepr {
    fn from(p: EtaPolicy) -> Self {
        match p {
            EtaPolicy::Auto => Self::Word("auto".to_owned()),
            EtaPolicy::Fixed(x) => Self::Fixed(x),
        }
    }
}

impl std::str::FromStr for EtaPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            return Ok(Self::Auto);
        }
        s.parse::<f64>()
            .map(Self::Fixed)
            .map_err(|_| format!("expected \"auto\" or a number, got \"{s}\""))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    #[default]
    Random,
    /// Start exactly at the empirical top eigenvector of the stream.
    Vstar,
}

impl std::str::FromStr for InitKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "random" => Ok(Self::Random),
            "vstar" => Ok(Self::Vstar),
            other => Err(format!("expected random or vstar, got \"{other}\"")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub feature_map: FeatureMapConfig,
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub eta: EtaPolicy,
    #[serde(default)]
    pub init: InitKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Record snapshots and run the invariant suite on every trial.
    #[serde(default)]
    pub checks: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Ratios for `sweep`; ignored by `run`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratios: Option<Vec<f64>>,
}

fn default_trials() -> usize {
    1
}

/// Seeds one trial draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSeeds {
    pub basis: u64,
    pub sample: u64,
    pub init: u64,
    pub feature_map: u64,
}

/// SplitMix64 finalizer: decorrelates seeds that differ in a few low bits.
fn mix(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| json_error(text, &e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.generator;
        let fail = |msg: String| Err(Error::Config(msg));
        if g.input_dim == 0 {
            return fail("generator.input_dim must be positive".into());
        }
        if g.n == 0 {
            return fail("generator.n must be positive".into());
        }
        validate_ratio(g.ratio, "generator.ratio")?;
        if !(g.lambda1 > 0.0) || !g.lambda1.is_finite() {
            return fail("generator.lambda1 must be positive and finite".into());
        }
        if !(g.tail_decay > 0.0 && g.tail_decay <= 1.0) {
            return fail("generator.tail_decay must lie in (0, 1]".into());
        }
        if let FeatureMapConfig::Rff {
            feature_dim,
            bandwidth,
            ..
        } = &self.feature_map
        {
            if *feature_dim == 0 {
                return fail("feature_map.feature_dim must be positive".into());
            }
            if !(*bandwidth > 0.0) || !bandwidth.is_finite() {
                return fail("feature_map.bandwidth must be positive".into());
            }
        }
        let m = self.feature_map.feature_dim(g.input_dim);
        if m > MAX_ORACLE_DIM {
            return fail(format!(
                "feature dimension {m} exceeds the oracle limit {MAX_ORACLE_DIM}"
            ));
        }
        if let EtaPolicy::Fixed(eta) = self.eta {
            if !(eta > 0.0 && eta < ETA_CEILING) {
                return fail(format!("eta {eta} outside (0, 0.1)"));
            }
        }
        if self.trials == 0 {
            return fail("trials must be at least 1".into());
        }
        if let Some(ratios) = &self.ratios {
            for &r in ratios {
                validate_ratio(r, "ratios")?;
            }
        }
        Ok(())
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_map.feature_dim(self.generator.input_dim)
    }

    /// Basis and feature-map draws are shared by all trials; samples and init vary per trial.
    pub fn trial_seeds(&self, trial: usize) -> TrialSeeds {
        let trial_seed = self.seed.wrapping_add(trial as u64);
        TrialSeeds {
            basis: mix(self.seed, 0),
            sample: mix(trial_seed, 1),
            init: mix(trial_seed, 2),
            feature_map: match self.feature_map {
                FeatureMapConfig::Rff { seed: Some(s), .. } => s,
                _ => mix(self.seed, 3),
            },
        }
    }

    pub fn spiked_spec(&self, trial: usize) -> SpikedSpec {
        let g = &self.generator;
        let seeds = self.trial_seeds(trial);
        SpikedSpec {
            input_dim: g.input_dim,
            n: g.n,
            lambda1: g.lambda1,
            lambda2: g.lambda1 / g.ratio,
            tail_decay: g.tail_decay,
            basis_seed: seeds.basis,
            sample_seed: seeds.sample,
        }
    }

    pub fn build_feature_map(&self) -> Result<FeatureMapSpec> {
        let d = self.generator.input_dim;
        match &self.feature_map {
            FeatureMapConfig::Identity => FeatureMapSpec::identity(d),
            FeatureMapConfig::Poly2 => FeatureMapSpec::poly2(d),
            FeatureMapConfig::Rff {
                feature_dim,
                bandwidth,
                ..
            } => FeatureMapSpec::rff(d, *feature_dim, *bandwidth, self.trial_seeds(0).feature_map),
        }
    }

    /// Sweep ratios, which must be at least two.
    pub fn sweep_ratios(&self) -> Result<&[f64]> {
        match self.ratios.as_deref() {
            Some(r) if r.len() >= 2 => Ok(r),
            Some(r) => Err(Error::Config(format!(
                "a sweep needs at least 2 ratios, got {}",
                r.len()
            ))),
            None => Err(Error::Config("a sweep needs a ratios list".into())),
        }
    }
}

fn validate_ratio(r: f64, field: &str) -> Result<()> {
    if !(r >= 1.0) || !r.is_finite() {
        return Err(Error::Config(format!(
            "{field}: ratio {r} must be finite and at least 1"
        )));
    }
    Ok(())
}

/// Byte offset of a 1-based line/column position.
pub(crate) fn byte_offset(text: &str, line: usize, column: usize) -> u64 {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(text.len()) as u64
}

fn json_error(text: &str, e: &serde_json::Error) -> Error {
    Error::Config(format!(
        "{e} (byte {})",
        byte_offset(text, e.line(), e.column())
    ))
}
