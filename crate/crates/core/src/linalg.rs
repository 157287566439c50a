//! Dense vectors, packed symmetric matrices and the desk-scale eigensolvers used as ground truth.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};

/// Largest matrix the Jacobi oracle accepts.
pub const MAX_ORACLE_DIM: usize = 2048;

const JACOBI_MAX_SWEEPS: usize = 100;

/// A real vector with finite entries.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(input("vector must have at least one entry"));
        }
        if let Some(i) = entries.iter().position(|x| !x.is_finite()) {
            return Err(input(format!("non-finite entry at index {i}")));
        }
        Ok(Self(entries))
    }

    /// Caller guarantees finiteness.
    pub(crate) fn from_vec_unchecked(entries: Vec<f64>) -> Self {
        debug_assert!(entries.iter().all(|x| x.is_finite()));
        Self(entries)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    /// The `index`-th standard basis vector of length `len`.
    pub fn basis(len: usize, index: usize) -> Self {
        let mut v = vec![0.0; len];
        v[index] = 1.0;
        Self(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &DenseVector) -> Result<f64> {
        dot(self, other)
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum()
    }

    /// Euclidean norm, rescaled when the plain sum of squares would overflow or underflow.
    pub fn norm(&self) -> f64 {
        let plain = self.norm_sq();
        if plain.is_finite() && plain > f64::MIN_POSITIVE {
            return plain.sqrt();
        }
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let sum: f64 = self.0.iter().map(|x| (x / scale) * (x / scale)).sum();
        scale * sum.sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Unit vector in the same direction.
    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 {
            return Err(input("cannot normalize the zero vector"));
        }
        Ok(Self(self.0.iter().map(|x| x / n).collect()))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|x| x * factor).collect())
    }

    /// `self - other`
    pub fn sub(&self, other: &DenseVector) -> Result<Self> {
        check_len(self.len(), other.len())?;
        Ok(Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect()))
    }

    /// `self + factor * other`
    pub fn add_scaled(&self, factor: f64, other: &DenseVector) -> Result<Self> {
        check_len(self.len(), other.len())?;
        Ok(Self(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + factor * b)
                .collect(),
        ))
    }
}

impl fmt::Debug for DenseVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.0).finish()
    }
}

impl TryFrom<Vec<f64>> for DenseVector {
    type Error = Error;

    fn try_from(value: Vec<f64>) -> Result<Self> {
        Self::new(value)
    }
}

impl From<DenseVector> for Vec<f64> {
    fn from(v: DenseVector) -> Self {
        v.0
    }
}

impl std::ops::Index<usize> for DenseVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::Dimension { expected, found });
    }
    Ok(())
}

/// Inner product `Σ aᵢbᵢ`.
pub fn dot(a: &DenseVector, b: &DenseVector) -> Result<f64> {
    check_len(a.len(), b.len())?;
    Ok(dot_slices(&a.0, &b.0))
}

#[inline]
pub(crate) fn dot_slices(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Symmetric matrix storing only the upper triangle, row-major.
#[derive(Clone, PartialEq)]
pub struct SymmetricMatrix {
    dim: usize,
    upper: Vec<f64>,
}

impl SymmetricMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            upper: vec![0.0; dim * (dim + 1) / 2],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.set(i, i, d);
        }
        m.validate()?;
        Ok(m)
    }

    /// Builds from full square rows; the rows must already be symmetric to within `1e-12` relative.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(input("matrix must have positive dimension"));
        }
        let mut m = Self::zeros(dim);
        for (i, row) in rows.iter().enumerate() {
            check_len(dim, row.len())?;
            for j in i..dim {
                let (a, b) = (row[j], rows[j][i]);
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                    return Err(input(format!("matrix not symmetric at ({i}, {j})")));
                }
                m.set(i, j, a);
            }
        }
        m.validate()?;
        Ok(m)
    }

    /// Builds from the packed upper triangle.
    pub fn from_upper(dim: usize, upper: Vec<f64>) -> Result<Self> {
        check_len(dim * (dim + 1) / 2, upper.len())?;
        let m = Self { dim, upper };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(input("matrix must have positive dimension"));
        }
        if self.upper.iter().any(|x| !x.is_finite()) {
            return Err(input("matrix has non-finite entries"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.upper[packed_index(self.dim, i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let k = packed_index(self.dim, i, j);
        self.upper[k] = value;
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// `self += scale · v vᵀ`
    pub fn add_outer(&mut self, scale: f64, v: &DenseVector) -> Result<()> {
        check_len(self.dim, v.len())?;
        let mut k = 0;
        for i in 0..self.dim {
            let si = scale * v.0[i];
            for j in i..self.dim {
                self.upper[k] += si * v.0[j];
                k += 1;
            }
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            upper: self.upper.iter().map(|x| x * factor).collect(),
        }
    }

    pub fn matvec(&self, v: &DenseVector) -> Result<DenseVector> {
        check_len(self.dim, v.len())?;
        Ok(DenseVector::from_vec_unchecked(self.matvec_slice(&v.0)))
    }

    fn matvec_slice(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut out = vec![0.0; n];
        let mut k = 0;
        for i in 0..n {
            out[i] += self.upper[k] * v[i];
            k += 1;
            for j in (i + 1)..n {
                let a = self.upper[k];
                out[i] += a * v[j];
                out[j] += a * v[i];
                k += 1;
            }
        }
        out
    }

    /// `vᵀ A v`
    pub fn quadratic_form(&self, v: &DenseVector) -> Result<f64> {
        let av = self.matvec(v)?;
        dot(v, &av)
    }

    pub fn max_abs(&self) -> f64 {
        self.upper.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Full row-major copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.dim;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let a = self.get(i, j);
                out[i * n + j] = a;
                out[j * n + i] = a;
            }
        }
        out
    }

    /// `(I - u uᵀ) A (I - u uᵀ)` for a unit vector `u`, without forming the projector.
    pub fn deflate(&self, u: &DenseVector) -> Result<Self> {
        check_len(self.dim, u.len())?;
        let n = self.dim;
        let au = self.matvec_slice(&u.0);
        let uau = dot_slices(&u.0, &au);
        // PAP = A - u(Au)ᵀ - (Au)uᵀ + (uᵀAu) u uᵀ
        let mut out = Self::zeros(n);
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                out.upper[k] = self.upper[k] - u.0[i] * au[j] - au[i] * u.0[j] + uau * u.0[i] * u.0[j];
                k += 1;
            }
        }
        Ok(out)
    }
}

#[inline]
fn packed_index(dim: usize, i: usize, j: usize) -> usize {
    let (r, c) = if i <= j { (i, j) } else { (j, i) };
    // row r starts after dim + (dim - 1) + ... + (dim - r + 1) entries
    r * dim - r * r.saturating_sub(1) / 2 + (c - r)
}

impl fmt::Debug for SymmetricMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<Vec<f64>> = (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j)).collect())
            .collect();
        f.debug_struct("SymmetricMatrix")
            .field("dim", &self.dim)
            .field("rows", &rows)
            .finish()
    }
}

/// Eigenpairs sorted by descending eigenvalue; `eigenvectors[k]` pairs with `eigenvalues[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<DenseVector>,
}

impl EigenDecomposition {
    pub fn top(&self) -> (f64, &DenseVector) {
        (self.eigenvalues[0], &self.eigenvectors[0])
    }

    /// `Q diag(λ) Qᵀ`
    pub fn reconstruct(&self) -> SymmetricMatrix {
        let n = self.eigenvalues.len();
        let mut m = SymmetricMatrix::zeros(n);
        for (lambda, q) in self.eigenvalues.iter().zip(&self.eigenvectors) {
            m.add_outer(*lambda, q).expect("eigenvector length matches");
        }
        m
    }

    /// `max |QᵀQ - I|`
    pub fn orthogonality_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, a) in self.eigenvectors.iter().enumerate() {
            for (j, b) in self.eigenvectors.iter().enumerate().skip(i) {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot_slices(&a.0, &b.0) - target).abs());
            }
        }
        worst
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Each rotation zeroes one off-diagonal pair; sweeps repeat until the off-diagonal mass
/// falls below roundoff relative to the Frobenius norm. Eigenvectors are normalized so
/// that their first non-negligible component is positive.
pub fn jacobi_eigendecomposition(a: &SymmetricMatrix) -> Result<EigenDecomposition> {
    let n = a.dim();
    if n > MAX_ORACLE_DIM {
        return Err(input(format!(
            "oracle dimension {n} exceeds limit {MAX_ORACLE_DIM}"
        )));
    }
    a.validate()?;

    let mut m = a.to_dense();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let frob = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tiny = if frob > 0.0 { 1e-2 * f64::EPSILON * frob } else { 0.0 };

    let mut converged = frob == 0.0 || n == 1;
    let mut sweep = 0;
    while !converged {
        if sweep == JACOBI_MAX_SWEEPS {
            return Err(Error::Convergence {
                what: "jacobi eigendecomposition",
                iterations: sweep,
            });
        }
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[p * n + q] * m[p * n + q];
            }
        }
        if off.sqrt() <= tiny * n as f64 {
            break;
        }
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq.abs() <= tiny {
                    m[p * n + q] = 0.0;
                    m[q * n + p] = 0.0;
                    continue;
                }
                rotated = true;
                rotate(&mut m, &mut v, n, p, q);
            }
        }
        sweep += 1;
        converged = !rotated;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j * n + j].total_cmp(&m[i * n + i]).then(i.cmp(&j)));

    let mut eigenvalues = Vec::with_capacity(n);
    let mut eigenvectors = Vec::with_capacity(n);
    for &k in &order {
        eigenvalues.push(m[k * n + k]);
        let mut col: Vec<f64> = (0..n).map(|r| v[r * n + k]).collect();
        let norm = dot_slices(&col, &col).sqrt();
        col.iter_mut().for_each(|x| *x /= norm);
        canonical_sign(&mut col);
        eigenvectors.push(DenseVector::from_vec_unchecked(col));
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

fn rotate(m: &mut [f64], v: &mut [f64], n: usize, p: usize, q: usize) {
    let apq = m[p * n + q];
    let app = m[p * n + p];
    let aqq = m[q * n + q];
    let tau = (aqq - app) / (2.0 * apq);
    let t = if tau >= 0.0 {
        1.0 / (tau + (1.0 + tau * tau).sqrt())
    } else {
        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;

    m[p * n + p] = app - t * apq;
    m[q * n + q] = aqq + t * apq;
    m[p * n + q] = 0.0;
    m[q * n + p] = 0.0;
    for r in 0..n {
        if r == p || r == q {
            continue;
        }
        let arp = m[r * n + p];
        let arq = m[r * n + q];
        let new_rp = c * arp - s * arq;
        let new_rq = s * arp + c * arq;
        m[r * n + p] = new_rp;
        m[p * n + r] = new_rp;
        m[r * n + q] = new_rq;
        m[q * n + r] = new_rq;
    }
    for r in 0..n {
        let vrp = v[r * n + p];
        let vrq = v[r * n + q];
        v[r * n + p] = c * vrp - s * vrq;
        v[r * n + q] = s * vrp + c * vrq;
    }
}

/// First component above `1e-12 · max|x|` made positive.
fn canonical_sign(x: &mut [f64]) {
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if let Some(first) = x.iter().find(|v| v.abs() > 1e-12 * scale) {
        if *first < 0.0 {
            x.iter_mut().for_each(|v| *v = -*v);
        }
    }
}

/// Top eigenpair by power iteration, used to cross-check the Jacobi oracle.
///
/// The matrix is shifted by its Gershgorin lower bound when that bound is negative, so the
/// iteration targets the algebraically largest eigenvalue. Iteration stops once the residual
/// `‖Av - λv‖` drops below `tol · max(1, |λ|)`.
pub fn power_iteration_top(
    a: &SymmetricMatrix,
    tol: f64,
    max_iters: usize,
) -> Result<(f64, DenseVector)> {
    if !(tol > 0.0) {
        return Err(input("tolerance must be positive"));
    }
    a.validate()?;
    let n = a.dim();

    let mut lower = f64::INFINITY;
    for i in 0..n {
        let radius: f64 = (0..n).filter(|&j| j != i).map(|j| a.get(i, j).abs()).sum();
        lower = lower.min(a.get(i, i) - radius);
    }
    let shift = if lower < 0.0 { -lower } else { 0.0 };

    let mut rng = ChaCha8Rng::seed_from_u64(0x9e37_79b9_7f4a_7c15);
    let mut v: Vec<f64> = (0..n).map(|_| 1.0 + 0.5 * rng.random::<f64>()).collect();
    let norm = dot_slices(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= norm);

    for _ in 0..max_iters {
        let av = a.matvec_slice(&v);
        let lambda = dot_slices(&v, &av);
        let residual = av
            .iter()
            .zip(&v)
            .map(|(x, y)| (x - lambda * y).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual <= tol * lambda.abs().max(1.0) {
            canonical_sign(&mut v);
            return Ok((lambda, DenseVector::from_vec_unchecked(v)));
        }
        let mut next: Vec<f64> = av.iter().zip(&v).map(|(x, y)| x + shift * y).collect();
        let norm = dot_slices(&next, &next).sqrt();
        if norm == 0.0 {
            // v lies in the null space of the shifted matrix; only possible when A = -shift·I there
            canonical_sign(&mut v);
            return Ok((lambda, DenseVector::from_vec_unchecked(v)));
        }
        next.iter_mut().for_each(|x| *x /= norm);
        v = next;
    }
    Err(Error::Convergence {
        what: "power iteration",
        iterations: max_iters,
    })
}
