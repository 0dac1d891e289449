//! Small dense linear algebra.
//!
//! Matrices here are at most a few dozen rows (K ≤ 8 antennas, Newton
//! systems of a few hundred unknowns), so everything is row-major `Vec`
//! storage with straightforward O(n³) kernels.
//!
//! Hermitian eigenproblems are solved through the real symmetric embedding
//! `[[Re H, -Im H], [Im H, Re H]]`, whose spectrum is the spectrum of `H`
//! with every eigenvalue doubled.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Real dense matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matrix product shape");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.data[k * other.cols + j];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|r| self.data[r * self.cols..(r + 1) * self.cols].iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn add_scaled(&mut self, other: &Self, scale: f64) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }
}

impl Index<(usize, usize)> for RMatrix {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for RMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Complex dense matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row vectors; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Option<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return None;
        }
        Some(Self { rows: rows.len(), cols: n_cols, data: rows.concat() })
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = Complex64::new(v, 0.0);
        }
        m
    }

    /// `u v†`.
    pub fn outer(u: &[Complex64], v: &[Complex64]) -> Self {
        Self::from_fn(u.len(), v.len(), |r, c| u[r] * v[c].conj())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<Complex64>> {
        self.data.chunks(self.cols.max(1)).map(<[Complex64]>::to_vec).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matrix product shape");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == ZERO {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.data[k * other.cols + j];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|r| self.data[r * self.cols..(r + 1) * self.cols].iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `h† A h`, real part only (exact for Hermitian `A`).
    pub fn quad_form(&self, h: &[Complex64]) -> f64 {
        assert!(self.is_square() && self.rows == h.len());
        let mut acc = ZERO;
        for r in 0..self.rows {
            let mut row = ZERO;
            for c in 0..self.cols {
                row += self[(r, c)] * h[c];
            }
            acc += h[r].conj() * row;
        }
        acc.re
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, z| m.max(z.norm()))
    }

    /// Largest deviation from Hermitian symmetry, `max |A_rc - conj(A_cr)|`.
    pub fn hermitian_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst = 0.0_f64;
        for r in 0..self.rows {
            for c in r..self.cols {
                worst = worst.max((self[(r, c)] - self[(c, r)].conj()).norm());
            }
        }
        worst
    }

    /// Real symmetric embedding `[[Re H, -Im H], [Im H, Re H]]`.
    pub fn real_embedding(&self) -> RMatrix {
        let (n, m) = (self.rows, self.cols);
        let mut out = RMatrix::zeros(2 * n, 2 * m);
        for r in 0..n {
            for c in 0..m {
                let z = self[(r, c)];
                out[(r, c)] = z.re;
                out[(r, c + m)] = -z.im;
                out[(r + n, c)] = z.im;
                out[(r + n, c + m)] = z.re;
            }
        }
        out
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r * self.cols + c]
    }
}

pub fn norm(v: &[Complex64]) -> f64 {
    libm::sqrt(norm_sqr(v))
}

pub fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(Complex64::norm_sqr).sum()
}

/// `u† v`.
pub fn dot(u: &[Complex64], v: &[Complex64]) -> Complex64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

/// Lower-triangular `L` with `A = L L†`, or `None` if `A` is not numerically
/// positive definite.
pub fn cholesky_hermitian(a: &CMatrix) -> Option<CMatrix> {
    let n = a.rows();
    let mut l = CMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let d = libm::sqrt(d);
        l[(j, j)] = Complex64::new(d, 0.0);
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

/// `log det A` from its Cholesky factor.
pub fn log_det_from_cholesky(l: &CMatrix) -> f64 {
    (0..l.rows()).map(|i| 2.0 * libm::log(l[(i, i)].re)).sum()
}

/// `A⁻¹` from the Cholesky factor of a Hermitian positive definite `A`.
pub fn inverse_from_cholesky(l: &CMatrix) -> CMatrix {
    let n = l.rows();
    // L⁻¹ by forward substitution, then A⁻¹ = L⁻† L⁻¹.
    let mut linv = CMatrix::zeros(n, n);
    for c in 0..n {
        for r in c..n {
            let mut s = if r == c { ONE } else { ZERO };
            for k in c..r {
                s -= l[(r, k)] * linv[(k, c)];
            }
            linv[(r, c)] = s / l[(r, r)];
        }
    }
    let mut inv = CMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = ZERO;
            for k in i..n {
                s += linv[(k, i)].conj() * linv[(k, j)];
            }
            inv[(i, j)] = s;
            inv[(j, i)] = s.conj();
        }
    }
    inv
}

/// Lower-triangular real Cholesky factor.
pub fn cholesky_real(a: &RMatrix) -> Option<RMatrix> {
    let n = a.rows();
    let mut l = RMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let d = libm::sqrt(d);
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

/// Solves `L Lᵀ x = b`.
pub fn cholesky_solve(l: &RMatrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[(i, k)] * y[k];
        }
        y[i] /= l[(i, i)];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            y[i] -= l[(k, i)] * y[k];
        }
        y[i] /= l[(i, i)];
    }
    y
}

/// Eigen-decomposition of a real symmetric matrix; values sorted descending,
/// `vectors` holds the matching unit eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: RMatrix,
}

/// Cyclic Jacobi rotations. Accurate to a few ulps of `‖A‖` for the small
/// matrices used here.
pub fn symmetric_eigen(a: &RMatrix) -> SymmetricEigen {
    assert_eq!(a.rows(), a.cols(), "eigenproblem needs a square matrix");
    let n = a.rows();
    let mut m = a.clone();
    let mut v = RMatrix::identity(n);
    let scale = a.max_abs().max(f64::MIN_POSITIVE);

    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[(p, q)] * m[(p, q)];
            }
        }
        if libm::sqrt(off) <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = RMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    SymmetricEigen { values, vectors }
}

/// Eigen-decomposition of a Hermitian matrix; values descending, unit
/// eigenvectors as columns of `vectors`.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

/// Hermitian eigenproblem via the real symmetric embedding.
///
/// Each eigenvalue of `H` appears twice in the embedding, with eigenvectors
/// `[x; y]` and `[-y; x]` that both map to the complex vector `x + iy` up to
/// a phase. Walking the embedding's eigenvectors in descending order and
/// keeping those that survive complex Gram-Schmidt recovers one vector per
/// eigenvalue of `H`.
pub fn hermitian_eigen(h: &CMatrix) -> HermitianEigen {
    assert!(h.is_square());
    let n = h.rows();
    let emb = symmetric_eigen(&h.real_embedding());
    let mut values = Vec::with_capacity(n);
    let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(n);
    for idx in 0..2 * n {
        if basis.len() == n {
            break;
        }
        let mut u: Vec<Complex64> =
            (0..n).map(|r| Complex64::new(emb.vectors[(r, idx)], emb.vectors[(r + n, idx)])).collect();
        for b in &basis {
            let proj = dot(b, &u);
            for (ui, bi) in u.iter_mut().zip(b) {
                *ui -= proj * bi;
            }
        }
        let len = norm(&u);
        if len > 0.5 {
            for ui in &mut u {
                *ui /= len;
            }
            basis.push(u);
            values.push(emb.values[idx]);
        }
    }
    let vectors = CMatrix::from_fn(n, n, |r, c| basis[c][r]);
    HermitianEigen { values, vectors }
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn hermitian_min_eigenvalue(h: &CMatrix) -> f64 {
    symmetric_eigen(&h.real_embedding()).values.last().copied().unwrap_or(0.0)
}
