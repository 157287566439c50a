//! Explicit feature maps `φ: ℝᵈ → ℝᵐ`.
//!
//! Three maps are provided:
//!
//! * `Identity`: `m = d`, recovers linear streaming PCA.
//! * `Poly2`: homogeneous degree-2 monomials with off-diagonal products scaled by `√2`,
//!   so that `⟨φ(x), φ(y)⟩ = ⟨x, y⟩²` exactly.
//! * `Rff`: random Fourier features `√(2/m)·cos(wⱼᵀx + bⱼ)` approximating the RBF kernel
//!   `exp(-‖x - y‖² / 2σ²)`. The draws are frozen when the spec is built so the map stays
//!   a fixed function for the whole stream.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::linalg::DenseVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Identity,
    Poly2,
    Rff,
}

impl std::str::FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Self::Identity),
            "poly2" => Ok(Self::Poly2),
            "rff" => Ok(Self::Rff),
            other => Err(input(format!(
                "unknown feature map `{other}` (expected identity, poly2 or rff)"
            ))),
        }
    }
}

/// Frozen random Fourier feature draws: `freqs` is `m × d` row-major.
#[derive(Debug, Clone, PartialEq)]
struct RffDraw {
    bandwidth: f64,
    seed: Option<u64>,
    freqs: Vec<f64>,
    phases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMapSpec {
    kind: FeatureKind,
    input_dim: usize,
    feature_dim: usize,
    rff: Option<RffDraw>,
}

impl FeatureMapSpec {
    pub fn identity(input_dim: usize) -> Result<Self> {
        check_dim(input_dim)?;
        Ok(Self {
            kind: FeatureKind::Identity,
            input_dim,
            feature_dim: input_dim,
            rff: None,
        })
    }

    pub fn poly2(input_dim: usize) -> Result<Self> {
        check_dim(input_dim)?;
        Ok(Self {
            kind: FeatureKind::Poly2,
            input_dim,
            feature_dim: input_dim * (input_dim + 1) / 2,
            rff: None,
        })
    }

    /// Random Fourier features with `wⱼ ~ N(0, σ⁻² I)` and `bⱼ ~ U[0, 2π)` drawn from `seed`.
    pub fn rff(input_dim: usize, feature_dim: usize, bandwidth: f64, seed: u64) -> Result<Self> {
        check_dim(input_dim)?;
        check_rff(feature_dim, bandwidth)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut freqs = Vec::with_capacity(feature_dim * input_dim);
        let mut phases = Vec::with_capacity(feature_dim);
        for _ in 0..feature_dim {
            for _ in 0..input_dim {
                let g: f64 = rng.sample(StandardNormal);
                freqs.push(g / bandwidth);
            }
            phases.push(rng.random_range(0.0..2.0 * PI));
        }
        Ok(Self {
            kind: FeatureKind::Rff,
            input_dim,
            feature_dim,
            rff: Some(RffDraw {
                bandwidth,
                seed: Some(seed),
                freqs,
                phases,
            }),
        })
    }

    /// Random Fourier features with caller-supplied draws (`freqs` is `m × d` row-major).
    pub fn rff_from_draws(
        input_dim: usize,
        bandwidth: f64,
        freqs: Vec<f64>,
        phases: Vec<f64>,
    ) -> Result<Self> {
        check_dim(input_dim)?;
        let feature_dim = phases.len();
        check_rff(feature_dim, bandwidth)?;
        if freqs.len() != feature_dim * input_dim {
            return Err(Error::Dimension {
                expected: feature_dim * input_dim,
                found: freqs.len(),
            });
        }
        if freqs.iter().chain(&phases).any(|x| !x.is_finite()) {
            return Err(input("rff draws must be finite"));
        }
        Ok(Self {
            kind: FeatureKind::Rff,
            input_dim,
            feature_dim,
            rff: Some(RffDraw {
                bandwidth,
                seed: None,
                freqs,
                phases,
            }),
        })
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn bandwidth(&self) -> Option<f64> {
        self.rff.as_ref().map(|r| r.bandwidth)
    }

    pub fn rff_seed(&self) -> Option<u64> {
        self.rff.as_ref().and_then(|r| r.seed)
    }

    /// `φ(x)`.
    pub fn apply(&self, x: &DenseVector) -> Result<DenseVector> {
        if x.len() != self.input_dim {
            return Err(Error::Dimension {
                expected: self.input_dim,
                found: x.len(),
            });
        }
        let xs = x.as_slice();
        let out = match self.kind {
            FeatureKind::Identity => xs.to_vec(),
            FeatureKind::Poly2 => {
                let d = self.input_dim;
                let mut out = Vec::with_capacity(self.feature_dim);
                for i in 0..d {
                    out.push(xs[i] * xs[i]);
                    for j in (i + 1)..d {
                        out.push(std::f64::consts::SQRT_2 * xs[i] * xs[j]);
                    }
                }
                out
            }
            FeatureKind::Rff => {
                let draw = self.rff.as_ref().expect("rff spec carries its draws");
                let scale = (2.0 / self.feature_dim as f64).sqrt();
                draw.freqs
                    .chunks_exact(self.input_dim)
                    .zip(&draw.phases)
                    .map(|(w, b)| {
                        let proj: f64 = w.iter().zip(xs).map(|(a, c)| a * c).sum();
                        scale * (proj + b).cos()
                    })
                    .collect()
            }
        };
        DenseVector::new(out)
    }

    /// Certified bound on `‖φ(x)‖²` given `‖x‖² ≤ generator_bound`.
    pub fn norm_bound(&self, generator_bound: f64) -> Result<f64> {
        if !(generator_bound > 0.0) || !generator_bound.is_finite() {
            return Err(input("generator bound must be positive and finite"));
        }
        Ok(match self.kind {
            FeatureKind::Identity => generator_bound,
            // ‖φ(x)‖² = Σᵢ xᵢ⁴ + 2Σ_{i<j} xᵢ²xⱼ² = ‖x‖⁴
            FeatureKind::Poly2 => generator_bound * generator_bound,
            // Σⱼ (2/m) cos² ≤ 2
            FeatureKind::Rff => 2.0,
        })
    }
}

fn check_dim(input_dim: usize) -> Result<()> {
    if input_dim == 0 {
        return Err(input("input dimension must be positive"));
    }
    Ok(())
}

fn check_rff(feature_dim: usize, bandwidth: f64) -> Result<()> {
    if feature_dim == 0 {
        return Err(input("rff feature dimension must be positive"));
    }
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(input("rff bandwidth must be positive"));
    }
    Ok(())
}
