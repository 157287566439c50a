//! Offline ground truth in feature space: second moments, eigenpairs, the spectral ratio and
//! the stream energies `α`, `β` along and orthogonal to a reference direction `v*`.

use std::borrow::Borrow;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{input, Error, Result};
use crate::feature_map::FeatureMapSpec;
use crate::linalg::{
    dot, jacobi_eigendecomposition, DenseVector, EigenDecomposition, SymmetricMatrix,
    MAX_ORACLE_DIM,
};
use crate::numerics::KahanSum;

/// `λ₂ ≤ RANK_ONE_CUTOFF · λ₁` reports an infinite ratio.
pub const RANK_ONE_CUTOFF: f64 = 1e-12;

const UNIT_TOL: f64 = 1e-9;

/// `λ₁/λ₂`, or infinite for (numerically) rank-one spectra.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpectralRatio {
    Finite(f64),
    Infinite,
}

impl SpectralRatio {
    pub fn value(self) -> f64 {
        match self {
            Self::Finite(r) => r,
            Self::Infinite => f64::INFINITY,
        }
    }

    /// `+∞` maps to `Infinite`.
    pub fn from_value(r: f64) -> Self {
        if r == f64::INFINITY {
            Self::Infinite
        } else {
            Self::Finite(r)
        }
    }
}

// JSON has no infinity; the sentinel is the string "inf".
impl Serialize for SpectralRatio {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Self::Finite(r) => s.serialize_f64(*r),
            Self::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for SpectralRatio {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(r) => Ok(Self::Finite(r)),
            Raw::Str(s) if s == "inf" => Ok(Self::Infinite),
            Raw::Str(s) => Err(serde::de::Error::custom(format!(
                "expected a number or \"inf\", got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpectralSummary {
    pub n: usize,
    /// `M = Σᵢ φ(xᵢ)φ(xᵢ)ᵀ`
    pub second_moment: SymmetricMatrix,
    /// `Σ = M / n`
    pub covariance: SymmetricMatrix,
    /// Eigenpairs of `Σ`.
    pub eig: EigenDecomposition,
    pub ratio: SpectralRatio,
    /// Top eigenvector `x*` of `Σ`.
    pub top_vector: DenseVector,
}

impl SpectralSummary {
    pub fn lambda1(&self) -> f64 {
        self.eig.eigenvalues[0]
    }

    pub fn lambda2(&self) -> f64 {
        self.eig.eigenvalues.get(1).copied().unwrap_or(0.0)
    }
}

/// Maps the stream through `φ` and summarizes it.
pub fn summarize<I, X>(xs: I, phi: &FeatureMapSpec) -> Result<SpectralSummary>
where
    I: IntoIterator<Item = X>,
    X: Borrow<DenseVector>,
{
    let mut features = Vec::new();
    for x in xs {
        features.push(phi.apply(x.borrow())?);
    }
    summarize_features(&features)
}

/// Summarizes already-mapped features in one compensated pass.
pub fn summarize_features(features: &[DenseVector]) -> Result<SpectralSummary> {
    let n = features.len();
    if n == 0 {
        return Err(input("stream must contain at least one sample"));
    }
    let m = features[0].len();
    if m > MAX_ORACLE_DIM {
        return Err(input(format!(
            "feature dimension {m} exceeds oracle limit {MAX_ORACLE_DIM}"
        )));
    }
    let mut acc = vec![KahanSum::new(); m * (m + 1) / 2];
    for f in features {
        if f.len() != m {
            return Err(Error::Dimension {
                expected: m,
                found: f.len(),
            });
        }
        let fs = f.as_slice();
        let mut k = 0;
        for i in 0..m {
            for j in i..m {
                acc[k].add(fs[i] * fs[j]);
                k += 1;
            }
        }
    }
    let upper: Vec<f64> = acc.iter().map(KahanSum::value).collect();
    let second_moment = SymmetricMatrix::from_upper(m, upper)?;
    let covariance = second_moment.scaled(1.0 / n as f64);
    let eig = jacobi_eigendecomposition(&covariance)?;

    let lambda1 = eig.eigenvalues[0];
    if !(lambda1 > 0.0) {
        return Err(Error::Degenerate(
            "largest eigenvalue is not positive (all-zero stream)".into(),
        ));
    }
    let lambda2 = eig.eigenvalues.get(1).copied().unwrap_or(0.0);
    let ratio = if lambda2 <= RANK_ONE_CUTOFF * lambda1 {
        SpectralRatio::Infinite
    } else {
        SpectralRatio::Finite(lambda1 / lambda2)
    };
    let top_vector = eig.eigenvectors[0].clone();
    Ok(SpectralSummary {
        n,
        second_moment,
        covariance,
        eig,
        ratio,
        top_vector,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaBeta {
    pub alpha: f64,
    pub beta: f64,
    pub v_star: DenseVector,
}

/// `β = η·v*ᵀMv*` and `α = η·λ_max(PMP)` with `P = I − v*v*ᵀ`.
///
/// The supremum over unit `w ⊥ v*` of `η Σᵢ⟨w, φ(xᵢ)⟩²` is the top Rayleigh quotient of `M`
/// restricted to the orthogonal complement, which is the top eigenvalue of the deflated matrix.
pub fn compute_alpha_beta(
    summary: &SpectralSummary,
    eta: f64,
    v_star: &DenseVector,
) -> Result<AlphaBeta> {
    if !(eta > 0.0) {
        return Err(input("learning rate must be positive"));
    }
    let m = &summary.second_moment;
    if v_star.len() != m.dim() {
        return Err(Error::Dimension {
            expected: m.dim(),
            found: v_star.len(),
        });
    }
    if (v_star.norm() - 1.0).abs() > UNIT_TOL {
        return Err(input("v* must be a unit vector"));
    }
    let beta = eta * m.quadratic_form(v_star)?;
    let alpha = if m.dim() == 1 {
        0.0
    } else {
        let deflated = m.deflate(v_star)?;
        let eig = jacobi_eigendecomposition(&deflated)?;
        eta * eig.eigenvalues[0].max(0.0)
    };
    Ok(AlphaBeta {
        alpha,
        beta: beta.max(0.0),
        v_star: v_star.clone(),
    })
}

/// `‖(I − v*v*ᵀ)û‖₂` with `û = u/‖u‖`.
pub fn projection_residual(v_star: &DenseVector, u: &DenseVector) -> Result<f64> {
    let u_hat = u
        .normalized()
        .map_err(|_| input("u must be nonzero"))?;
    let v_norm = v_star.norm();
    if v_norm == 0.0 {
        return Err(input("v* must be nonzero"));
    }
    let c = dot(&u_hat, v_star)? / (v_norm * v_norm);
    Ok(u_hat.add_scaled(-c, v_star)?.norm())
}

/// `1 − ⟨x*, û⟩²`, clamped to `[0, 1]`.
pub fn alignment_error(x_star: &DenseVector, u: &DenseVector) -> Result<f64> {
    for (name, v) in [("x*", x_star), ("u", u)] {
        if (v.norm() - 1.0).abs() > UNIT_TOL {
            return Err(input(format!("{name} must be a unit vector")));
        }
    }
    let c = dot(x_star, u)?;
    Ok((1.0 - c * c).clamp(0.0, 1.0))
}
