//! Orthonormal SU(N) generator bases and the real Liouville-vector picture
//! of density matrices.
//!
//! The basis is the generalized Gell-Mann set normalized to
//! `Tr[g_i g_j] = delta_ij`, with `g_0 = I/sqrt(N)`. Ordering is fixed:
//! identity, then off-diagonal pairs `(j, k)`, `j < k`, in lexicographic
//! order (symmetric member first), then the diagonal members by increasing
//! size. Result files and LP column layouts depend on this ordering.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{eigenvalues_hermitian, ComplexMatrix, C64, I, ONE, ZERO};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LiouvilleError {
    #[error("generator basis needs dimension >= 2, got {0}")]
    DimensionTooSmall(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("invalid grouping: {0}")]
    InvalidGrouping(String),
}

/// Subsystem dimensions of a composite Hilbert space. Subsystem 0 is the
/// leftmost tensor factor.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct PartitionSpec {
    subsystem_dims: Vec<usize>,
}

impl TryFrom<Vec<usize>> for PartitionSpec {
    type Error = LiouvilleError;
    fn try_from(dims: Vec<usize>) -> Result<Self, Self::Error> {
        Self::new(dims)
    }
}

impl From<PartitionSpec> for Vec<usize> {
    fn from(p: PartitionSpec) -> Self {
        p.subsystem_dims
    }
}

impl PartitionSpec {
    pub fn new(subsystem_dims: Vec<usize>) -> Result<Self, LiouvilleError> {
        if subsystem_dims.is_empty() {
            return Err(LiouvilleError::InvalidPartition("no subsystems".into()));
        }
        if let Some(d) = subsystem_dims.iter().find(|&&d| d < 2) {
            return Err(LiouvilleError::InvalidPartition(format!("subsystem dimension {d} < 2")));
        }
        Ok(Self { subsystem_dims })
    }

    pub fn dims(&self) -> &[usize] {
        &self.subsystem_dims
    }

    pub fn n_subsystems(&self) -> usize {
        self.subsystem_dims.len()
    }

    pub fn total_dim(&self) -> usize {
        self.subsystem_dims.iter().product()
    }

    /// Complex parameters of a generic state vector, `N - 1`.
    pub fn n_generic_params(&self) -> usize {
        self.total_dim() - 1
    }

    /// Complex parameters of a product state vector, `sum_k (N_k - 1)`.
    pub fn n_product_params(&self) -> usize {
        self.subsystem_dims.iter().map(|d| d - 1).sum()
    }

    /// `N - sum_k N_k + K - 1`: the largest rank an essentially entangled
    /// component can have when only this split's product states are separable.
    pub fn rank_bound(&self) -> usize {
        self.total_dim() + self.n_subsystems() - 1 - self.subsystem_dims.iter().sum::<usize>()
    }
}

/// A coarsening of a base partition: each group is a set of subsystem indices
/// that is treated as a single party.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grouping {
    pub groups: Vec<Vec<usize>>,
}

impl Grouping {
    pub fn new(groups: Vec<Vec<usize>>, base: &PartitionSpec) -> Result<Self, LiouvilleError> {
        let g = Self { groups };
        g.validate(base)?;
        Ok(g)
    }

    /// Every subsystem on its own.
    pub fn full_split(base: &PartitionSpec) -> Self {
        Self { groups: (0..base.n_subsystems()).map(|k| vec![k]).collect() }
    }

    /// All bipartitions `S | complement(S)` of the base partition, each listed once.
    pub fn all_bipartitions(base: &PartitionSpec) -> Vec<Self> {
        let k = base.n_subsystems();
        let mut out = Vec::new();
        // Subsystem k-1 always lands in the second group so each cut appears once.
        for mask in 1u64..(1u64 << (k - 1)) {
            let first: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
            let second: Vec<usize> = (0..k).filter(|i| mask & (1 << i) == 0).collect();
            out.push(Self { groups: vec![first, second] });
        }
        out
    }

    pub fn validate(&self, base: &PartitionSpec) -> Result<(), LiouvilleError> {
        let k = base.n_subsystems();
        let mut seen = vec![false; k];
        if self.groups.is_empty() {
            return Err(LiouvilleError::InvalidGrouping("no groups".into()));
        }
        for g in &self.groups {
            if g.is_empty() {
                return Err(LiouvilleError::InvalidGrouping("empty group".into()));
            }
            for &s in g {
                if s >= k {
                    return Err(LiouvilleError::InvalidGrouping(format!(
                        "subsystem index {s} out of range for {k} subsystems"
                    )));
                }
                if seen[s] {
                    return Err(LiouvilleError::InvalidGrouping(format!("subsystem {s} listed twice")));
                }
                seen[s] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(LiouvilleError::InvalidGrouping(format!("subsystem {missing} not covered")));
        }
        Ok(())
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn group_dims(&self, base: &PartitionSpec) -> Vec<usize> {
        self.groups.iter().map(|g| g.iter().map(|&s| base.dims()[s]).product()).collect()
    }

    /// The partition seen by this grouping (group dimensions as subsystems).
    pub fn coarse_partition(&self, base: &PartitionSpec) -> PartitionSpec {
        PartitionSpec { subsystem_dims: self.group_dims(base) }
    }

    pub fn rank_bound(&self, base: &PartitionSpec) -> usize {
        self.coarse_partition(base).rank_bound()
    }
}

/// Which generalized Gell-Mann matrix a basis element is.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeneratorKind {
    Identity,
    /// `(E_jk + E_kj)/sqrt(2)`
    Symmetric { j: usize, k: usize },
    /// `-i(E_jk - E_kj)/sqrt(2)`
    Antisymmetric { j: usize, k: usize },
    /// `diag(1, ..., 1, -l, 0, ...)/sqrt(l(l+1))` with `l` leading ones.
    Diagonal { l: usize },
}

/// Orthonormal Hermitian basis `g_0 .. g_{N^2-1}` of `N x N` matrices.
#[derive(Clone, Debug)]
pub struct GeneratorBasis {
    dim: usize,
    kinds: Vec<GeneratorKind>,
}

impl GeneratorBasis {
    pub fn build(n: usize) -> Result<Self, LiouvilleError> {
        if n < 2 {
            return Err(LiouvilleError::DimensionTooSmall(n));
        }
        let mut kinds = Vec::with_capacity(n * n);
        kinds.push(GeneratorKind::Identity);
        for j in 0..n {
            for k in (j + 1)..n {
                kinds.push(GeneratorKind::Symmetric { j, k });
                kinds.push(GeneratorKind::Antisymmetric { j, k });
            }
        }
        for l in 1..n {
            kinds.push(GeneratorKind::Diagonal { l });
        }
        Ok(Self { dim: n, kinds })
    }

    /// Process-wide cached basis for dimension `n`.
    pub fn shared(n: usize) -> Result<Arc<Self>, LiouvilleError> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GeneratorBasis>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("basis cache poisoned");
        if let Some(b) = guard.get(&n) {
            return Ok(b.clone());
        }
        let b = Arc::new(Self::build(n)?);
        guard.insert(n, b.clone());
        Ok(b)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn kinds(&self) -> &[GeneratorKind] {
        &self.kinds
    }

    /// Explicit matrix of generator `i`.
    pub fn generator(&self, i: usize) -> ComplexMatrix {
        let n = self.dim;
        let mut m = ComplexMatrix::zeros(n, n);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        match self.kinds[i] {
            GeneratorKind::Identity => {
                let v = 1.0 / (n as f64).sqrt();
                for a in 0..n {
                    m[(a, a)] = C64::new(v, 0.0);
                }
            }
            GeneratorKind::Symmetric { j, k } => {
                m[(j, k)] = C64::new(s, 0.0);
                m[(k, j)] = C64::new(s, 0.0);
            }
            GeneratorKind::Antisymmetric { j, k } => {
                m[(j, k)] = C64::new(0.0, -s);
                m[(k, j)] = C64::new(0.0, s);
            }
            GeneratorKind::Diagonal { l } => {
                let c = 1.0 / ((l * (l + 1)) as f64).sqrt();
                for a in 0..l {
                    m[(a, a)] = C64::new(c, 0.0);
                }
                m[(l, l)] = C64::new(-(l as f64) * c, 0.0);
            }
        }
        m
    }

    /// Index of the traceless generators, i.e. `1..N^2`.
    pub fn traceless(&self) -> std::ops::Range<usize> {
        1..self.kinds.len()
    }

    /// Complex coefficients `Tr[g_i a]` of an arbitrary square matrix.
    pub fn coefficients(&self, a: &ComplexMatrix) -> Result<Vec<C64>, LiouvilleError> {
        self.check_dim(a.n_rows())?;
        self.check_dim(a.n_cols())?;
        let n = self.dim;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        // prefix[l] = sum_{a<l} a_aa
        let mut prefix = vec![ZERO; n + 1];
        for d in 0..n {
            prefix[d + 1] = prefix[d] + a[(d, d)];
        }
        Ok(self
            .kinds
            .iter()
            .map(|kind| match *kind {
                GeneratorKind::Identity => prefix[n] / (n as f64).sqrt(),
                GeneratorKind::Symmetric { j, k } => (a[(j, k)] + a[(k, j)]) * s,
                GeneratorKind::Antisymmetric { j, k } => (a[(j, k)] - a[(k, j)]) * I * s,
                GeneratorKind::Diagonal { l } => {
                    (prefix[l] - a[(l, l)] * l as f64) / ((l * (l + 1)) as f64).sqrt()
                }
            })
            .collect())
    }

    /// Real Liouville components `r_i = Re Tr[g_i rho]` of a Hermitian matrix.
    pub fn vectorize_matrix(&self, rho: &ComplexMatrix) -> Result<LiouvilleVector, LiouvilleError> {
        let c = self.coefficients(rho)?;
        Ok(LiouvilleVector { components: c.into_iter().map(|z| z.re).collect() })
    }

    /// Liouville components of the projector `|v><v|` without forming it.
    pub fn vectorize_pure(&self, v: &[C64]) -> Result<Vec<f64>, LiouvilleError> {
        self.check_dim(v.len())?;
        let mut out = vec![0.0; self.len()];
        self.vectorize_pure_into(v, &mut out);
        Ok(out)
    }

    /// As [`vectorize_pure`](Self::vectorize_pure), writing into `out` (length `N^2`).
    pub fn vectorize_pure_into(&self, v: &[C64], out: &mut [f64]) {
        let n = self.dim;
        debug_assert_eq!(v.len(), n);
        debug_assert_eq!(out.len(), n * n);
        let sqrt2 = std::f64::consts::SQRT_2;
        let pops: Vec<f64> = v.iter().map(|z| z.norm_sqr()).collect();
        out[0] = pops.iter().sum::<f64>() / (n as f64).sqrt();
        let mut idx = 1;
        for j in 0..n {
            for k in (j + 1)..n {
                // rho_jk = v_j conj(v_k)
                let rho_jk = v[j] * v[k].conj();
                out[idx] = sqrt2 * rho_jk.re;
                out[idx + 1] = -sqrt2 * rho_jk.im;
                idx += 2;
            }
        }
        let mut prefix = 0.0;
        for l in 1..n {
            prefix += pops[l - 1];
            out[idx] = (prefix - l as f64 * pops[l]) / ((l * (l + 1)) as f64).sqrt();
            idx += 1;
        }
    }

    /// `sum_i r_i g_i`. Hermitian by construction, not necessarily positive.
    pub fn devectorize(&self, r: &[f64]) -> Result<ComplexMatrix, LiouvilleError> {
        if r.len() != self.len() {
            return Err(LiouvilleError::DimensionMismatch { expected: self.len(), got: r.len() });
        }
        let n = self.dim;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut m = ComplexMatrix::zeros(n, n);
        let mut diag = vec![r[0] / (n as f64).sqrt(); n];
        for (kind, &ri) in self.kinds.iter().zip(r) {
            match *kind {
                GeneratorKind::Identity => {}
                GeneratorKind::Symmetric { j, k } => {
                    m[(j, k)] += C64::new(ri * s, 0.0);
                    m[(k, j)] += C64::new(ri * s, 0.0);
                }
                GeneratorKind::Antisymmetric { j, k } => {
                    m[(j, k)] += C64::new(0.0, -ri * s);
                    m[(k, j)] += C64::new(0.0, ri * s);
                }
                GeneratorKind::Diagonal { l } => {
                    let c = ri / ((l * (l + 1)) as f64).sqrt();
                    for d in diag.iter_mut().take(l) {
                        *d += c;
                    }
                    diag[l] -= l as f64 * c;
                }
            }
        }
        for (a, d) in diag.into_iter().enumerate() {
            m[(a, a)] = C64::new(d, 0.0);
        }
        Ok(m)
    }

    fn check_dim(&self, got: usize) -> Result<(), LiouvilleError> {
        if got != self.dim {
            return Err(LiouvilleError::DimensionMismatch { expected: self.dim, got });
        }
        Ok(())
    }
}

/// Real coordinates `r_i = Tr[g_i rho]` of a Hermitian matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiouvilleVector {
    pub components: Vec<f64>,
}

impl LiouvilleVector {
    pub fn dim(&self) -> usize {
        (self.components.len() as f64).sqrt().round() as usize
    }

    /// `sum r_i^2 = Tr[rho^2]`
    pub fn squared_norm(&self) -> f64 {
        self.components.iter().map(|x| x * x).sum()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.components.iter().zip(&other.components).map(|(a, b)| a * b).sum()
    }
}

/// Coefficients `c_2 .. c_N` of `det(lambda I - rho) = sum_m c_m lambda^(N-m)`
/// (with `c_0 = 1`, `c_1 = -Tr rho`). They all vanish exactly when `rho` has
/// rank one.
pub fn characteristic_constraints(r: &LiouvilleVector, basis: &GeneratorBasis) -> Result<Vec<f64>, LiouvilleError> {
    let m = basis.devectorize(&r.components)?;
    let ev = eigenvalues_hermitian(&m);
    // Elementary symmetric polynomials e_0..e_N of the eigenvalues.
    let n = ev.len();
    let mut e = vec![0.0; n + 1];
    e[0] = 1.0;
    for &l in &ev {
        for m in (1..=n).rev() {
            e[m] += l * e[m - 1];
        }
    }
    Ok((2..=n).map(|m| if m % 2 == 0 { e[m] } else { -e[m] }).collect())
}

/// Standard (unnormalized) Pauli matrix: 1 = x, 2 = y, 3 = z.
pub fn pauli(i: usize) -> ComplexMatrix {
    let data = match i {
        1 => vec![ZERO, ONE, ONE, ZERO],
        2 => vec![ZERO, -I, I, ZERO],
        3 => vec![ONE, ZERO, ZERO, -ONE],
        _ => panic!("pauli index must be 1..=3, got {i}"),
    };
    ComplexMatrix::new(2, 2, data).unwrap()
}

/// Standard (unnormalized) Gell-Mann matrix `lambda_i`, `i = 1..=8`.
pub fn gell_mann(i: usize) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(3, 3);
    match i {
        1 => {
            m[(0, 1)] = ONE;
            m[(1, 0)] = ONE;
        }
        2 => {
            m[(0, 1)] = -I;
            m[(1, 0)] = I;
        }
        3 => {
            m[(0, 0)] = ONE;
            m[(1, 1)] = -ONE;
        }
        4 => {
            m[(0, 2)] = ONE;
            m[(2, 0)] = ONE;
        }
        5 => {
            m[(0, 2)] = -I;
            m[(2, 0)] = I;
        }
        6 => {
            m[(1, 2)] = ONE;
            m[(2, 1)] = ONE;
        }
        7 => {
            m[(1, 2)] = -I;
            m[(2, 1)] = I;
        }
        8 => {
            let c = 1.0 / 3f64.sqrt();
            m[(0, 0)] = C64::new(c, 0.0);
            m[(1, 1)] = C64::new(c, 0.0);
            m[(2, 2)] = C64::new(-2.0 * c, 0.0);
        }
        _ => panic!("gell-mann index must be 1..=8, got {i}"),
    }
    m
}
