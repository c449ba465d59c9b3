//! Dense complex linear algebra used throughout the crate.
//!
//! Matrices are small (the design envelope is N <= 64), so everything is
//! stored dense in row-major order. The Hermitian eigensolver is backed by
//! `nalgebra`; the rest is written out directly.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;

/// Entrywise tolerance for accepting a matrix as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Default relative tolerance for [`rank_with_tolerance`].
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("entry count {len} does not match shape {rows}x{cols}")]
    BadShape { rows: usize, cols: usize, len: usize },
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian: |m - m^H| = {deviation:.3e} at ({row}, {col})")]
    NotHermitian { row: usize, col: usize, deviation: f64 },
    #[error("matrix is not skew-Hermitian: |a + a^H| = {deviation:.3e} at ({row}, {col})")]
    NotSkewHermitian { row: usize, col: usize, deviation: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self, NumericsError> {
        if data.len() != rows * cols {
            return Err(NumericsError::BadShape { rows, cols, len: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

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

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(d, 0.0);
        }
        m
    }

    /// Builds a matrix from nested rows of real and imaginary parts.
    pub fn from_re_im(re: &[Vec<f64>], im: &[Vec<f64>]) -> Result<Self, NumericsError> {
        let rows = re.len();
        if im.len() != rows {
            return Err(NumericsError::DimensionMismatch(format!(
                "real part has {rows} rows, imaginary part has {}",
                im.len()
            )));
        }
        let cols = re.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows * cols);
        for (r, (re_row, im_row)) in re.iter().zip(im).enumerate() {
            if re_row.len() != cols || im_row.len() != cols {
                return Err(NumericsError::DimensionMismatch(format!(
                    "row {r} has {} real / {} imaginary entries, expected {cols}",
                    re_row.len(),
                    im_row.len()
                )));
            }
            data.extend(re_row.iter().zip(im_row).map(|(&a, &b)| C64::new(a, b)));
        }
        Ok(Self { rows, cols, data })
    }

    /// Rank-one projector `|v><v|` (not normalized).
    pub fn outer(v: &[C64]) -> Self {
        let n = v.len();
        Self::from_fn(n, n, |i, j| v[i] * v[j].conj())
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn re_im(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let re = (0..self.rows).map(|i| self.row(i).iter().map(|z| z.re).collect()).collect();
        let im = (0..self.rows).map(|i| self.row(i).iter().map(|z| z.im).collect()).collect();
        (re, im)
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn scale_complex(&self, s: C64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    /// `self += s * other`
    pub fn add_scaled(&mut self, s: C64, other: &Self) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch in add_scaled");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise `|m_ij - conj(m_ji)|` with its location.
    pub fn hermitian_deviation(&self) -> (f64, usize, usize) {
        let mut worst = (0.0, 0, 0);
        for i in 0..self.rows {
            for j in i..self.cols.min(self.rows) {
                let d = (self[(i, j)] - self[(j, i)].conj()).norm();
                if d > worst.0 {
                    worst = (d, i, j);
                }
            }
        }
        worst
    }

    pub fn check_hermitian(&self, tol: f64) -> Result<(), NumericsError> {
        if !self.is_square() {
            return Err(NumericsError::NotSquare { rows: self.rows, cols: self.cols });
        }
        let (deviation, row, col) = self.hermitian_deviation();
        if deviation > tol {
            return Err(NumericsError::NotHermitian { row, col, deviation });
        }
        Ok(())
    }

    /// `(m + m^H) / 2`
    pub fn hermitian_part(&self) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| (self[(i, j)] + self[(j, i)].conj()) * 0.5)
    }

    pub fn matvec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.cols, "matvec dimension mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `<u| self |v>`
    pub fn sandwich(&self, u: &[C64], v: &[C64]) -> C64 {
        let mv = self.matvec(v);
        inner(u, &mv)
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `[self, other] = self other - other self`
    pub fn commutator(&self, other: &Self) -> Self {
        &self.matmul(other) - &other.matmul(self)
    }

    /// Real part of `Tr[self * other]`, without forming the product.
    pub fn trace_product(&self, other: &Self) -> C64 {
        assert_eq!((self.cols, self.rows), (other.rows, other.cols), "trace_product shape mismatch");
        let mut acc = ZERO;
        for i in 0..self.rows {
            for k in 0..self.cols {
                acc += self[(i, k)] * other[(k, i)];
            }
        }
        acc
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch in add");
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch in sub");
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

/// Eigen-decomposition of a Hermitian matrix.
///
/// Eigenvalues are sorted in descending order; column `k` of `eigenvectors`
/// belongs to `eigenvalues[k]`.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: ComplexMatrix,
}

impl HermitianEigen {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn vector(&self, k: usize) -> Vec<C64> {
        self.eigenvectors.column(k)
    }

    /// `V diag(lambda) V^H`
    pub fn reconstruct(&self) -> ComplexMatrix {
        self.map_spectrum(|l| C64::new(l, 0.0))
    }

    /// `V diag(f(lambda)) V^H`
    pub fn map_spectrum(&self, f: impl Fn(f64) -> C64) -> ComplexMatrix {
        let n = self.dim();
        let v = &self.eigenvectors;
        let fl: Vec<C64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        ComplexMatrix::from_fn(n, n, |i, j| (0..n).map(|k| v[(i, k)] * fl[k] * v[(j, k)].conj()).sum())
    }
}

/// Eigen-decomposition of a Hermitian matrix (within [`HERMITIAN_TOL`]).
pub fn eig_hermitian(m: &ComplexMatrix) -> Result<HermitianEigen, NumericsError> {
    m.check_hermitian(HERMITIAN_TOL)?;
    Ok(eig_hermitian_part(m))
}

/// Eigen-decomposition of `(m + m^H)/2`, skipping the Hermiticity check.
pub fn eig_hermitian_part(m: &ComplexMatrix) -> HermitianEigen {
    let n = m.n_rows();
    if n == 1 {
        return HermitianEigen {
            eigenvalues: vec![m[(0, 0)].re],
            eigenvectors: ComplexMatrix::identity(1),
        };
    }
    let dm = DMatrix::<C64>::from_fn(n, n, |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5);
    let eig = SymmetricEigen::new(dm);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let eigenvectors = ComplexMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    HermitianEigen { eigenvalues, eigenvectors }
}

/// Eigenvalues only, descending.
pub fn eigenvalues_hermitian(m: &ComplexMatrix) -> Vec<f64> {
    let n = m.n_rows();
    if n == 1 {
        return vec![m[(0, 0)].re];
    }
    let dm = DMatrix::<C64>::from_fn(n, n, |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5);
    let mut ev: Vec<f64> = dm.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// `exp(a)` for skew-Hermitian `a = iH`, computed as `V diag(e^{i lambda}) V^H`.
pub fn expm_skew_hermitian(a: &ComplexMatrix) -> Result<ComplexMatrix, NumericsError> {
    if !a.is_square() {
        return Err(NumericsError::NotSquare { rows: a.n_rows(), cols: a.n_cols() });
    }
    let mut worst = (0.0, 0, 0);
    for i in 0..a.n_rows() {
        for j in i..a.n_cols() {
            let d = (a[(i, j)] + a[(j, i)].conj()).norm();
            if d > worst.0 {
                worst = (d, i, j);
            }
        }
    }
    if worst.0 > HERMITIAN_TOL {
        return Err(NumericsError::NotSkewHermitian { row: worst.1, col: worst.2, deviation: worst.0 });
    }
    Ok(exp_i_hermitian(&a.scale_complex(-I)))
}

/// `exp(iH)` for Hermitian `H`. The anti-Hermitian part of `h`, if any, is dropped.
pub fn exp_i_hermitian(h: &ComplexMatrix) -> ComplexMatrix {
    eig_hermitian_part(h).map_spectrum(|l| C64::from_polar(1.0, l))
}

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (ar, ac, br, bc) = (a.n_rows(), a.n_cols(), b.n_rows(), b.n_cols());
    ComplexMatrix::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// Number of eigenvalues above `rel_tol` times the largest eigenvalue.
pub fn rank_with_tolerance(m: &ComplexMatrix, rel_tol: f64) -> usize {
    rank_from_spectrum(&eigenvalues_hermitian(m), rel_tol)
}

pub fn rank_from_spectrum(eigenvalues: &[f64], rel_tol: f64) -> usize {
    let top = eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(top > 0.0) {
        return 0;
    }
    eigenvalues.iter().filter(|&&l| l > rel_tol * top).count()
}

/// `<u|v>`, conjugate-linear in the first argument.
pub fn inner(u: &[C64], v: &[C64]) -> C64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

pub fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Returns `v / |v|`; a zero vector is returned unchanged.
pub fn normalized(v: &[C64]) -> Vec<C64> {
    let n = norm(v);
    if n == 0.0 {
        return v.to_vec();
    }
    v.iter().map(|z| z / n).collect()
}

pub fn kron_vec(a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            out.push(x * y);
        }
    }
    out
}


#[cfg(test)]
mod tests {
    use super::test_util::*;
    use super::*;
    use rand::Rng;

    #[test]
    fn identity_spectrum() {
        let e = eig_hermitian(&ComplexMatrix::identity(2)).unwrap();
        assert_eq!(e.eigenvalues.len(), 2);
        for l in e.eigenvalues {
            assert!((l - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn pauli_z_spectrum() {
        let e = eig_hermitian(&pauli_z()).unwrap();
        assert!((e.eigenvalues[0] - 1.0).abs() < 1e-14);
        assert!((e.eigenvalues[1] + 1.0).abs() < 1e-14);
        assert!((e.eigenvectors[(0, 0)].norm() - 1.0).abs() < 1e-12);
        assert!((e.eigenvectors[(1, 1)].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kron_eigenvalue_multiplicities() {
        let m = kron(&kron(&ComplexMatrix::identity(3), &pauli_z()), &ComplexMatrix::identity(2));
        assert_eq!(m.n_rows(), 12);
        let e = eig_hermitian(&m).unwrap();
        // Kronecker rule: spectrum {1*(+1)*1, 1*(-1)*1} each repeated 3*2 times.
        let plus = e.eigenvalues.iter().filter(|&&l| (l - 1.0).abs() < 1e-12).count();
        let minus = e.eigenvalues.iter().filter(|&&l| (l + 1.0).abs() < 1e-12).count();
        assert_eq!((plus, minus), (6, 6));
        assert!((&e.reconstruct() - &m).frobenius_norm() < 1e-12);
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut m = ComplexMatrix::identity(3);
        m[(0, 2)] = C64::new(0.5, 0.0);
        match eig_hermitian(&m) {
            Err(NumericsError::NotHermitian { row, col, deviation }) => {
                assert_eq!((row, col), (0, 2));
                assert!((deviation - 0.5).abs() < 1e-15);
            }
            other => panic!("expected NotHermitian, got {other:?}"),
        }
    }

    #[test]
    fn random_hermitian_reconstruction() {
        let mut r = rng(7);
        for trial in 0..500 {
            let n = 1 + trial % 12;
            let mut h = random_hermitian(&mut r, n);
            let s = h.frobenius_norm();
            h = h.scale(r.random_range(0.1..10.0) / s);
            let e = eig_hermitian(&h).unwrap();
            assert!(e.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
            let err = (&e.reconstruct() - &h).frobenius_norm();
            assert!(err < 1e-10, "n={n} reconstruction error {err:e}");
            let gram = e.eigenvectors.adjoint().matmul(&e.eigenvectors);
            let gerr = (&gram - &ComplexMatrix::identity(n)).frobenius_norm();
            assert!(gerr < 1e-10, "n={n} gram error {gerr:e}");
        }
    }

    #[test]
    fn expm_zero_is_identity() {
        let u = expm_skew_hermitian(&ComplexMatrix::zeros(3, 3)).unwrap();
        assert!((&u - &ComplexMatrix::identity(3)).frobenius_norm() < 1e-14);
    }

    #[test]
    fn expm_pauli_x_closed_form() {
        let theta = std::f64::consts::FRAC_PI_2;
        let a = pauli_x().scale_complex(I * theta);
        let u = expm_skew_hermitian(&a).unwrap();
        // e^{i theta sx} = cos(theta) I + i sin(theta) sx
        let expected = &ComplexMatrix::identity(2).scale(theta.cos()) + &pauli_x().scale_complex(I * theta.sin());
        assert!((&u - &expected).frobenius_norm() < 1e-12);
        let unitarity = &u.adjoint().matmul(&u) - &ComplexMatrix::identity(2);
        assert!(unitarity.frobenius_norm() < 1e-9);
        let sq = &u.matmul(&u) + &ComplexMatrix::identity(2);
        assert!(sq.frobenius_norm() < 1e-9);
    }

    #[test]
    fn expm_diagonal() {
        let h = ComplexMatrix::from_real_diagonal(&[1.0, 2.0]);
        let u = exp_i_hermitian(&h);
        assert!((u[(0, 0)] - C64::from_polar(1.0, 1.0)).norm() < 1e-14);
        assert!((u[(1, 1)] - C64::from_polar(1.0, 2.0)).norm() < 1e-14);
        assert!(u[(0, 1)].norm() < 1e-14);
    }

    #[test]
    fn expm_rejects_hermitian_input() {
        assert!(matches!(
            expm_skew_hermitian(&pauli_x()),
            Err(NumericsError::NotSkewHermitian { .. })
        ));
    }

    #[test]
    fn expm_unitary_and_inverse() {
        let mut r = rng(11);
        for n in 1..=12 {
            let h = random_hermitian(&mut r, n);
            let u = exp_i_hermitian(&h);
            let v = exp_i_hermitian(&h.scale(-1.0));
            let id = ComplexMatrix::identity(n);
            assert!((&u.adjoint().matmul(&u) - &id).max_abs() < 1e-9);
            assert!((&u.matmul(&v) - &id).max_abs() < 1e-9);
        }
    }

    #[test]
    fn kron_basics() {
        let i4 = kron(&ComplexMatrix::identity(2), &ComplexMatrix::identity(2));
        assert_eq!(i4, ComplexMatrix::identity(4));
        let xz = kron(&pauli_x(), &pauli_z());
        let z = pauli_z();
        let expected = ComplexMatrix::from_fn(4, 4, |i, j| {
            if (i < 2) != (j < 2) {
                z[(i % 2, j % 2)]
            } else {
                ZERO
            }
        });
        assert_eq!(xz, expected);
    }

    #[test]
    fn kron_associative() {
        let mut r = rng(3);
        let a = random_matrix(&mut r, 2, 2);
        let b = random_matrix(&mut r, 2, 2);
        let c = random_matrix(&mut r, 3, 3);
        let left = kron(&kron(&a, &b), &c);
        let right = kron(&a, &kron(&b, &c));
        assert!((&left - &right).max_abs() < 1e-12);
    }

    #[test]
    fn kron_preserves_positivity() {
        let mut r = rng(5);
        for _ in 0..20 {
            let a = random_psd(&mut r, 3);
            let b = random_psd(&mut r, 2);
            let ab = kron(&a, &b);
            assert!(ab.hermitian_deviation().0 < 1e-12);
            let min = *eig_hermitian(&ab).unwrap().eigenvalues.last().unwrap();
            assert!(min > -1e-10);
        }
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank_with_tolerance(&ComplexMatrix::identity(4), DEFAULT_RANK_TOL), 4);
        let mut e0 = vec![ZERO; 12];
        e0[0] = ONE;
        assert_eq!(rank_with_tolerance(&ComplexMatrix::outer(&e0), DEFAULT_RANK_TOL), 1);
        let d = ComplexMatrix::from_real_diagonal(&[1.0, 1e-12, 0.0]).scale(1.0 / (1.0 + 1e-12));
        assert_eq!(rank_with_tolerance(&d, 1e-8), 1);
        assert_eq!(rank_with_tolerance(&ComplexMatrix::zeros(3, 3), 1e-8), 0);
    }
}
