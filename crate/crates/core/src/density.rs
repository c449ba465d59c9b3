//! Validated density matrices over a declared subsystem partition.

use thiserror::Error;

use crate::liouville::{GeneratorBasis, LiouvilleError, LiouvilleVector, PartitionSpec};
use crate::numerics::{eig_hermitian_part, ComplexMatrix, HermitianEigen, C64, ZERO};
use std::sync::Arc;

use crate::states::{haar_random_pure, random_product_state, ProductLayout, PureState, RngStream};

pub const DENSITY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DensityError {
    #[error("matrix is {rows}x{cols}, partition requires {dim}x{dim}")]
    Shape { rows: usize, cols: usize, dim: usize },
    #[error("matrix is not Hermitian: |rho[{row},{col}] - conj(rho[{col},{row}])| = {deviation:.3e}")]
    NotHermitian { row: usize, col: usize, deviation: f64 },
    #[error("trace is {0} (expected 1)")]
    Trace(f64),
    #[error("matrix is not positive semidefinite: minimum eigenvalue {0:.3e}")]
    NotPositive(f64),
    #[error("non-finite matrix entry")]
    NonFinite,
    #[error(transparent)]
    Liouville(#[from] LiouvilleError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    partition: PartitionSpec,
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    pub fn new(partition: PartitionSpec, matrix: ComplexMatrix) -> Result<Self, DensityError> {
        Self::with_tolerance(partition, matrix, DENSITY_TOL)
    }

    /// Validates Hermiticity, unit trace and positivity at `tol`, then stores
    /// the exact Hermitian part.
    pub fn with_tolerance(partition: PartitionSpec, matrix: ComplexMatrix, tol: f64) -> Result<Self, DensityError> {
        let n = partition.total_dim();
        if matrix.n_rows() != n || matrix.n_cols() != n {
            return Err(DensityError::Shape { rows: matrix.n_rows(), cols: matrix.n_cols(), dim: n });
        }
        if matrix.as_slice().iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(DensityError::NonFinite);
        }
        let (dev, row, col) = matrix.hermitian_deviation();
        if dev > tol {
            return Err(DensityError::NotHermitian { row, col, deviation: dev });
        }
        let matrix = matrix.hermitian_part();
        let tr = matrix.trace().re;
        if (tr - 1.0).abs() > tol {
            return Err(DensityError::Trace(tr));
        }
        let min_ev = eig_hermitian_part(&matrix).eigenvalues.last().copied().unwrap_or(0.0);
        if min_ev < -tol {
            return Err(DensityError::NotPositive(min_ev));
        }
        Ok(Self { partition, matrix })
    }

    pub fn from_pure(partition: PartitionSpec, psi: &PureState) -> Result<Self, DensityError> {
        Self::new(partition, psi.projector())
    }

    pub fn maximally_mixed(partition: PartitionSpec) -> Self {
        let n = partition.total_dim();
        let matrix = ComplexMatrix::identity(n).scale(1.0 / n as f64);
        Self { partition, matrix }
    }

    /// `p |Psi-><Psi-| + (1 - p) I/4` on two qubits.
    pub fn werner(p: f64) -> Result<Self, DensityError> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let singlet = PureState::new(vec![ZERO, C64::new(s, 0.0), C64::new(-s, 0.0), ZERO]).expect("normalized");
        let mut m = singlet.projector().scale(p);
        m.add_scaled(C64::new((1.0 - p) / 4.0, 0.0), &ComplexMatrix::identity(4));
        Self::new(PartitionSpec::new(vec![2, 2])?, m)
    }

    /// Convex combination `sum w_k rho_k` of matrices on a common partition.
    pub fn mixture(parts: &[(f64, &DensityMatrix)]) -> Result<Self, DensityError> {
        let first = parts.first().expect("at least one component").1;
        let n = first.dim();
        let mut m = ComplexMatrix::zeros(n, n);
        for (w, r) in parts {
            m.add_scaled(C64::new(*w, 0.0), &r.matrix);
        }
        Self::new(first.partition.clone(), m)
    }

    pub fn from_liouville(partition: PartitionSpec, r: &[f64], tol: f64) -> Result<Self, DensityError> {
        let basis = GeneratorBasis::shared(partition.total_dim())?;
        let m = basis.devectorize(r)?;
        Self::with_tolerance(partition, m, tol)
    }

    pub fn partition(&self) -> &PartitionSpec {
        &self.partition
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.n_rows()
    }

    pub fn purity(&self) -> f64 {
        self.matrix.trace_product(&self.matrix).re
    }

    pub fn eigen(&self) -> HermitianEigen {
        eig_hermitian_part(&self.matrix)
    }

    pub fn liouville(&self) -> LiouvilleVector {
        GeneratorBasis::shared(self.dim())
            .expect("dim >= 2")
            .vectorize_matrix(&self.matrix)
            .expect("dimension matches")
    }

    /// Partial transpose over the listed subsystems.
    pub fn partial_transpose(&self, subsystems: &[usize]) -> ComplexMatrix {
        partial_transpose(&self.matrix, self.partition.dims(), subsystems)
    }
}

/// Transposes the subsystem indices in `subsystems` of a matrix on `dims`
/// (subsystem 0 most significant).
pub fn partial_transpose(m: &ComplexMatrix, dims: &[usize], subsystems: &[usize]) -> ComplexMatrix {
    let n: usize = dims.iter().product();
    let digits = |mut i: usize| {
        let mut d = vec![0; dims.len()];
        for k in (0..dims.len()).rev() {
            d[k] = i % dims[k];
            i /= dims[k];
        }
        d
    };
    let compose = |d: &[usize]| d.iter().zip(dims).fold(0, |acc, (x, dim)| acc * dim + x);
    let mut out = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        let di = digits(i);
        for j in 0..n {
            let mut a = di.clone();
            let mut b = digits(j);
            for &s in subsystems {
                std::mem::swap(&mut a[s], &mut b[s]);
            }
            out[(compose(&a), compose(&b))] = m[(i, j)];
        }
    }
    out
}

/// `sum_k w_k |psi_k><psi_k|` over `rank` Haar-random states with uniform
/// random weights (rank at most `rank`).
pub fn random_mixture(partition: &PartitionSpec, rank: usize, rng: &mut RngStream) -> DensityMatrix {
    let n = partition.total_dim();
    let w: Vec<f64> = (0..rank.max(1)).map(|_| rng.uniform() + 1e-3).collect();
    let total: f64 = w.iter().sum();
    let mut m = ComplexMatrix::zeros(n, n);
    for wk in w {
        m.add_scaled(C64::new(wk / total, 0.0), &haar_random_pure(n, rng).projector());
    }
    DensityMatrix::new(partition.clone(), m).expect("convex mixture of pure states")
}

/// Mixture of `terms` random product states over the full split.
pub fn random_separable(partition: &PartitionSpec, terms: usize, rng: &mut RngStream) -> DensityMatrix {
    let layout = Arc::new(ProductLayout::full_split(partition.clone()));
    let n = partition.total_dim();
    let w: Vec<f64> = (0..terms.max(1)).map(|_| rng.uniform() + 1e-3).collect();
    let total: f64 = w.iter().sum();
    let mut m = ComplexMatrix::zeros(n, n);
    for wk in w {
        m.add_scaled(C64::new(wk / total, 0.0), &random_product_state(&layout, rng).assembled().projector());
    }
    DensityMatrix::new(partition.clone(), m).expect("convex mixture of pure states")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::eigenvalues_hermitian;

    #[test]
    fn validation_names_the_violation() {
        let p = PartitionSpec::new(vec![2]).unwrap();
        let mut m = ComplexMatrix::identity(2).scale(0.5);
        m[(0, 1)] = C64::new(0.1, 0.0);
        assert!(matches!(DensityMatrix::new(p.clone(), m), Err(DensityError::NotHermitian { .. })));
        let m = ComplexMatrix::identity(2);
        assert!(matches!(DensityMatrix::new(p.clone(), m), Err(DensityError::Trace(_))));
        let m = ComplexMatrix::from_real_diagonal(&[1.5, -0.5]);
        assert!(matches!(DensityMatrix::new(p.clone(), m), Err(DensityError::NotPositive(_))));
        let m = ComplexMatrix::identity(3).scale(1.0 / 3.0);
        assert!(matches!(DensityMatrix::new(p, m), Err(DensityError::Shape { .. })));
    }

    #[test]
    fn werner_partial_transpose_spectrum() {
        for &p in &[0.0, 0.2, 1.0 / 3.0, 0.5, 1.0] {
            let w = DensityMatrix::werner(p).unwrap();
            let ev = eigenvalues_hermitian(&w.partial_transpose(&[1]));
            let expected_min = (1.0 - 3.0 * p) / 4.0;
            let expected_max = (1.0 + p) / 4.0;
            assert!((ev[3] - expected_min.min(expected_max)).abs() < 1e-12);
            assert!((ev[0] - expected_max.max(expected_min)).abs() < 1e-12);
        }
    }

    #[test]
    fn partial_transpose_is_an_involution_and_full_transpose() {
        let psi = PureState::normalize(vec![
            C64::new(0.3, 0.1),
            C64::new(-0.2, 0.5),
            C64::new(0.7, 0.0),
            C64::new(0.1, -0.4),
            C64::new(0.0, 0.2),
            C64::new(0.6, 0.6),
        ])
        .unwrap();
        let m = psi.projector();
        let dims = [2, 3];
        let pt = partial_transpose(&m, &dims, &[1]);
        assert_eq!(partial_transpose(&pt, &dims, &[1]), m);
        assert_eq!(partial_transpose(&m, &dims, &[0, 1]), m.transpose());
    }

    #[test]
    fn purity_and_liouville_norm_agree() {
        let w = DensityMatrix::werner(0.4).unwrap();
        assert!((w.purity() - w.liouville().squared_norm()).abs() < 1e-14);
        let mm = DensityMatrix::maximally_mixed(PartitionSpec::new(vec![3, 2, 2]).unwrap());
        assert!((mm.purity() - 1.0 / 12.0).abs() < 1e-15);
    }
}
