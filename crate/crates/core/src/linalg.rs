//! Dense complex square matrices.
//!
//! [`ComplexMatrix`] stores its entries row-major and is the common currency
//! for density matrices, gate unitaries, Kraus operators and Choi matrices.
//! Hermitian eigenvalues are delegated to `nalgebra`'s symmetric
//! (tridiagonalization + implicit QR) eigensolver.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub const C0: Complex64 = Complex64::new(0.0, 0.0);
pub const C1: Complex64 = Complex64::new(1.0, 0.0);
pub const CI: Complex64 = Complex64::new(0.0, 1.0);

/// Absolute tolerance used for Hermiticity checks.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// A dense `dim × dim` complex matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![C0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = C1;
        }
        m
    }

    /// Builds a matrix from row-major data; fails on non-square input or
    /// non-finite entries.
    pub fn from_vec(dim: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: data.len(),
            });
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidMatrix("non-finite entry".into()));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::InvalidMatrix(format!(
                    "row of length {} in a {dim}-row matrix",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::from_vec(dim, data)
    }

    /// Real matrix from row-major entries.
    pub fn from_real(dim: usize, entries: &[f64]) -> Self {
        assert_eq!(entries.len(), dim * dim);
        Self {
            dim,
            data: entries.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        }
    }

    pub fn diagonal(entries: &[Complex64]) -> Self {
        let mut m = Self::zeros(entries.len());
        for (i, &z) in entries.iter().enumerate() {
            m[(i, i)] = z;
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for r in 0..dim {
            for c in 0..dim {
                data.push(f(r, c));
            }
        }
        Self { dim, data }
    }

    /// Outer product `|a⟩⟨b|`.
    pub fn outer(a: &[Complex64], b: &[Complex64]) -> Self {
        assert_eq!(a.len(), b.len());
        Self::from_fn(a.len(), |r, c| a[r] * b[c].conj())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn adjoint(&self) -> Self {
        let n = self.dim;
        Self::from_fn(n, |r, c| self.data[c * n + r].conj())
    }

    pub fn transpose(&self) -> Self {
        let n = self.dim;
        Self::from_fn(n, |r, c| self.data[c * n + r])
    }

    pub fn conj(&self) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn scale(&self, k: Complex64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z * k).collect(),
        }
    }

    pub fn scale_real(&self, k: f64) -> Self {
        self.scale(Complex64::new(k, 0.0))
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.dim == other.dim && self.max_abs_diff(other) <= tol
    }

    /// Largest `|h_ij − conj(h_ji)|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.dim;
        let mut worst = 0.0f64;
        for r in 0..n {
            for c in r..n {
                let d = (self.data[r * n + c] - self.data[c * n + r].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    /// `(h + h†) / 2`.
    pub fn hermitian_part(&self) -> Self {
        let n = self.dim;
        Self::from_fn(n, |r, c| {
            (self.data[r * n + c] + self.data[c * n + r].conj()) * 0.5
        })
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "matmul dimension mismatch");
        let n = self.dim;
        let mut out = vec![C0; n * n];
        for r in 0..n {
            let row = &self.data[r * n..(r + 1) * n];
            let out_row = &mut out[r * n..(r + 1) * n];
            for (k, &a) in row.iter().enumerate() {
                if a == C0 {
                    continue;
                }
                let other_row = &other.data[k * n..(k + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(other_row) {
                    *o += a * b;
                }
            }
        }
        Self { dim: n, data: out }
    }

    pub fn matvec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.dim);
        let n = self.dim;
        (0..n)
            .map(|r| {
                self.data[r * n..(r + 1) * n]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// `U ρ U†`.
    pub fn conjugate_by(&self, u: &Self) -> Self {
        u.matmul(self).matmul(&u.adjoint())
    }

    /// Tensor product `self ⊗ other`.
    pub fn kron(&self, other: &Self) -> Self {
        kron(self, other)
    }

    /// Partial trace over the second tensor factor of dimension `d_b`.
    pub fn partial_trace_second(&self, d_b: usize) -> Self {
        assert_eq!(self.dim % d_b, 0);
        let d_a = self.dim / d_b;
        Self::from_fn(d_a, |r, c| {
            (0..d_b).map(|k| self[(r * d_b + k, c * d_b + k)]).sum()
        })
    }

    /// Partial trace over the first tensor factor of dimension `d_a`.
    pub fn partial_trace_first(&self, d_a: usize) -> Self {
        assert_eq!(self.dim % d_a, 0);
        let d_b = self.dim / d_a;
        Self::from_fn(d_b, |r, c| {
            (0..d_a).map(|k| self[(k * d_b + r, k * d_b + c)]).sum()
        })
    }

    pub fn to_nalgebra(&self) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }

    /// Eigenvalues of the Hermitian part, ascending. Fails when the matrix
    /// deviates from Hermiticity by more than [`HERMITIAN_TOL`] (scaled by the
    /// largest entry when that exceeds one).
    pub fn hermitian_eigenvalues(&self) -> Result<Vec<f64>> {
        let defect = self.hermiticity_defect();
        let scale = self.data.iter().map(|z| z.norm()).fold(1.0, f64::max);
        if defect > HERMITIAN_TOL * scale {
            return Err(Error::NonHermitian(defect));
        }
        let h = self.hermitian_part().to_nalgebra();
        let mut eig: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        Ok(eig)
    }
}

/// Standard tensor product of two square matrices.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (da, db) = (a.dim, b.dim);
    let n = da * db;
    let mut data = vec![C0; n * n];
    for ar in 0..da {
        for ac in 0..da {
            let x = a.data[ar * da + ac];
            if x == C0 {
                continue;
            }
            for br in 0..db {
                let row = ar * db + br;
                for bc in 0..db {
                    data[row * n + ac * db + bc] = x * b.data[br * db + bc];
                }
            }
        }
    }
    ComplexMatrix { dim: n, data }
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(h: &ComplexMatrix) -> Result<f64> {
    Ok(h.hermitian_eigenvalues()?[0])
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.dim + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r * self.dim + c]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim);
        ComplexMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim);
        ComplexMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({}x{})", self.dim, self.dim)?;
        for r in 0..self.dim {
            let row: Vec<String> = (0..self.dim)
                .map(|c| {
                    let z = self[(r, c)];
                    format!("{:+.4}{:+.4}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn pauli_x() -> ComplexMatrix {
        ComplexMatrix::from_real(2, &[0.0, 1.0, 1.0, 0.0])
    }

    fn pauli_z() -> ComplexMatrix {
        ComplexMatrix::from_real(2, &[1.0, 0.0, 0.0, -1.0])
    }

    #[test]
    fn kron_identities() {
        let i2 = ComplexMatrix::identity(2);
        assert_eq!(kron(&i2, &i2), ComplexMatrix::identity(4));
    }

    #[test]
    fn kron_z_z_is_diagonal() {
        let zz = kron(&pauli_z(), &pauli_z());
        let expected = ComplexMatrix::diagonal(&[c(1.0), c(-1.0), c(-1.0), c(1.0)]);
        assert_eq!(zz, expected);
    }

    #[test]
    fn kron_index_formula() {
        let (a, b) = (pauli_x(), pauli_z());
        let xz = kron(&a, &b);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(xz[(i, j)], a[(i / 2, j / 2)] * b[(i % 2, j % 2)]);
            }
        }
        assert_eq!(xz[(2, 0)], c(1.0));
    }

    #[test]
    fn min_eigenvalue_simple_spectra() {
        let d = ComplexMatrix::diagonal(&[c(1.0), c(2.0), c(3.0)]);
        assert!((min_eigenvalue(&d).unwrap() - 1.0).abs() < 1e-14);
        assert!((min_eigenvalue(&pauli_x()).unwrap() + 1.0).abs() < 1e-14);
    }

    #[test]
    fn min_eigenvalue_rejects_non_hermitian() {
        let m = ComplexMatrix::from_real(2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(min_eigenvalue(&m), Err(Error::NonHermitian(_))));
    }

    #[test]
    fn partial_traces() {
        let a = ComplexMatrix::diagonal(&[c(0.25), c(0.75)]);
        let b = pauli_x().scale_real(0.5);
        let ab = kron(&a, &b);
        assert!(ab
            .partial_trace_second(2)
            .approx_eq(&a.scale(b.trace()), 1e-15));
        assert!(ab
            .partial_trace_first(2)
            .approx_eq(&b.scale(a.trace()), 1e-15));
    }

    #[test]
    fn from_vec_rejects_nan() {
        let r = ComplexMatrix::from_vec(1, vec![Complex64::new(f64::NAN, 0.0)]);
        assert!(r.is_err());
    }
}
