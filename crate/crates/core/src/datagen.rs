//! Seeded spiked-covariance streams and the Gaussian offset-norm Monte Carlo check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::linalg::{dot_slices, DenseVector};

fn default_tail_decay() -> f64 {
    1.0
}

/// Population spectrum `λ₁ ≥ λ₂ ≥ λ₂·decay ≥ …` in a random orthonormal basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpikedSpec {
    pub input_dim: usize,
    pub n: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    #[serde(default = "default_tail_decay")]
    pub tail_decay: f64,
    pub basis_seed: u64,
    pub sample_seed: u64,
}

impl SpikedSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(input("input_dim must be positive"));
        }
        if self.n == 0 {
            return Err(input("n must be positive"));
        }
        if !(self.lambda1 > 0.0) || !self.lambda1.is_finite() {
            return Err(input("lambda1 must be positive and finite"));
        }
        if !(self.lambda2 > 0.0) {
            return Err(input("lambda2 must be positive"));
        }
        if self.lambda2 > self.lambda1 {
            return Err(input("lambda2 must not exceed lambda1"));
        }
        if !(self.tail_decay > 0.0 && self.tail_decay <= 1.0) {
            return Err(input("tail_decay must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn target_ratio(&self) -> f64 {
        self.lambda1 / self.lambda2
    }

    /// `λ_k` for `k = 1..d`: `λ₁`, then `λ₂·decay^{k-2}`.
    pub fn spectrum(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.input_dim);
        out.push(self.lambda1);
        let mut lam = self.lambda2;
        for _ in 1..self.input_dim {
            out.push(lam);
            lam *= self.tail_decay;
        }
        out
    }

    /// Guard `λ₁(d + 10√d + 50)` on `‖x‖²`; draws above it are rejected.
    pub fn norm_guard(&self) -> f64 {
        let d = self.input_dim as f64;
        self.lambda1 * (d + 10.0 * d.sqrt() + 50.0)
    }
}

/// Population quantities the stream is drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationTruth {
    pub eigenvalues: Vec<f64>,
    /// `u₁`, the population top direction in input space.
    pub top_direction: DenseVector,
    pub basis: Vec<DenseVector>,
    pub norm_guard: f64,
}

impl PopulationTruth {
    pub fn ratio(&self) -> f64 {
        match self.eigenvalues.get(1) {
            Some(l2) => self.eigenvalues[0] / l2,
            None => f64::INFINITY,
        }
    }
}

/// Uniformly random orthonormal basis: Gram–Schmidt on Gaussian draws.
pub fn random_orthonormal_basis(d: usize, seed: u64) -> Vec<DenseVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d);
    while basis.len() < d {
        let mut g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let start = dot_slices(&g, &g).sqrt();
        // two passes of modified Gram–Schmidt keep orthogonality at roundoff level
        for _ in 0..2 {
            for q in &basis {
                let c = dot_slices(&g, q);
                g.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        let norm = dot_slices(&g, &g).sqrt();
        if norm > 1e-8 * start {
            g.iter_mut().for_each(|x| *x /= norm);
            basis.push(g);
        }
    }
    basis
        .into_iter()
        .map(DenseVector::from_vec_unchecked)
        .collect()
}

/// Lazily draws `xᵢ = Σₖ √λₖ gᵢₖ uₖ`, skipping draws whose squared norm exceeds the guard.
#[derive(Debug, Clone)]
pub struct SpikedSampler {
    scaled_basis: Vec<Vec<f64>>,
    guard: f64,
    rng: ChaCha8Rng,
    remaining: usize,
    rejected: usize,
}

impl SpikedSampler {
    pub fn new(spec: &SpikedSpec) -> Result<Self> {
        spec.validate()?;
        let basis = random_orthonormal_basis(spec.input_dim, spec.basis_seed);
        let scaled_basis = basis
            .iter()
            .zip(spec.spectrum())
            .map(|(u, lam)| u.as_slice().iter().map(|x| x * lam.sqrt()).collect())
            .collect();
        Ok(Self {
            scaled_basis,
            guard: spec.norm_guard(),
            rng: ChaCha8Rng::seed_from_u64(spec.sample_seed),
            remaining: spec.n,
            rejected: 0,
        })
    }

    pub fn rejected(&self) -> usize {
        self.rejected
    }

    fn draw(&mut self) -> Vec<f64> {
        let d = self.scaled_basis.len();
        loop {
            let mut x = vec![0.0; d];
            for u in &self.scaled_basis {
                let g: f64 = self.rng.sample(StandardNormal);
                x.iter_mut().zip(u).for_each(|(xi, ui)| *xi += g * ui);
            }
            if dot_slices(&x, &x) <= self.guard {
                return x;
            }
            self.rejected += 1;
        }
    }
}

impl Iterator for SpikedSampler {
    type Item = DenseVector;

    fn next(&mut self) -> Option<DenseVector> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        Some(DenseVector::from_vec_unchecked(self.draw()))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

#[derive(Debug, Clone)]
pub struct SpikedStream {
    pub samples: Vec<DenseVector>,
    pub population: PopulationTruth,
    /// Draws discarded for exceeding the norm guard.
    pub rejected: usize,
}

pub fn make_spiked_stream(spec: &SpikedSpec) -> Result<SpikedStream> {
    let mut sampler = SpikedSampler::new(spec)?;
    let samples: Vec<DenseVector> = sampler.by_ref().collect();
    let basis = random_orthonormal_basis(spec.input_dim, spec.basis_seed);
    Ok(SpikedStream {
        samples,
        rejected: sampler.rejected(),
        population: PopulationTruth {
            eigenvalues: spec.spectrum(),
            top_direction: basis[0].clone(),
            basis,
            norm_guard: spec.norm_guard(),
        },
    })
}

/// Fraction of `a ~ N(0, 1)` draws with `‖a·u + v‖₂ ≥ δ‖u‖₂`.
pub fn monte_carlo_offset_norm(
    u: &DenseVector,
    v: &DenseVector,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Dimension {
            expected: u.len(),
            found: v.len(),
        });
    }
    let u_norm = u.norm();
    if u_norm == 0.0 {
        return Err(input("u must be nonzero"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(input("delta must lie in (0, 1)"));
    }
    if trials < 1000 {
        return Err(input("at least 1000 trials are required"));
    }
    // ‖au + v‖² = a²‖u‖² + 2a⟨u,v⟩ + ‖v‖²
    let uu = u_norm * u_norm;
    let uv = dot_slices(u.as_slice(), v.as_slice());
    let vv = v.norm_sq();
    let threshold = delta * delta * uu;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hits = (0..trials)
        .filter(|_| {
            let a: f64 = rng.sample(StandardNormal);
            a * a * uu + 2.0 * a * uv + vv >= threshold
        })
        .count();
    Ok(hits as f64 / trials as f64)
}
