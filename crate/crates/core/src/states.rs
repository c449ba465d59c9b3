//! Pure and product states, seeded sampling, and the random unitary moves
//! used by the decomposition search.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::liouville::{GeneratorBasis, Grouping, LiouvilleError, PartitionSpec};
use crate::numerics::{exp_i_hermitian, inner, norm, ComplexMatrix, C64, ONE, ZERO};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("state has zero norm")]
    ZeroNorm,
    #[error("state is not normalized: |psi| = {0}")]
    NotNormalized(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Liouville(#[from] LiouvilleError),
}

/// Normalized state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    amplitudes: Vec<C64>,
}

impl PureState {
    /// Accepts amplitudes that are already normalized within 1e-12.
    pub fn new(amplitudes: Vec<C64>) -> Result<Self, StateError> {
        let n = norm(&amplitudes);
        if (n - 1.0).abs() > 1e-12 {
            return Err(StateError::NotNormalized(n));
        }
        Ok(Self { amplitudes })
    }

    pub fn normalize(amplitudes: Vec<C64>) -> Result<Self, StateError> {
        let n = norm(&amplitudes);
        if n == 0.0 || !n.is_finite() {
            return Err(StateError::ZeroNorm);
        }
        Ok(Self { amplitudes: amplitudes.into_iter().map(|z| z / n).collect() })
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut a = vec![ZERO; dim];
        a[index] = ONE;
        Self { amplitudes: a }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    pub fn projector(&self) -> ComplexMatrix {
        ComplexMatrix::outer(&self.amplitudes)
    }

    /// `|<self|other>|^2`
    pub fn fidelity(&self, other: &Self) -> f64 {
        inner(&self.amplitudes, &other.amplitudes).norm_sqr()
    }

    pub fn apply(&self, u: &ComplexMatrix) -> Self {
        Self { amplitudes: u.matvec(&self.amplitudes) }
    }
}

/// Index bookkeeping for product states over a grouping of a base partition.
///
/// Full indices are mixed-radix over the base dimensions with subsystem 0
/// most significant. A group's local index is mixed-radix over its members
/// in the listed order.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductLayout {
    base: PartitionSpec,
    grouping: Grouping,
    group_dims: Vec<usize>,
    /// `local[i * n_groups + g]`: local index of group `g` in full index `i`.
    local: Vec<usize>,
}

impl ProductLayout {
    pub fn new(base: PartitionSpec, grouping: Grouping) -> Result<Self, StateError> {
        grouping.validate(&base)?;
        let dims = base.dims().to_vec();
        let n = base.total_dim();
        let group_dims = grouping.group_dims(&base);
        let ng = grouping.n_groups();
        let mut local = vec![0; n * ng];
        let mut digits = vec![0usize; dims.len()];
        for i in 0..n {
            let mut rem = i;
            for k in (0..dims.len()).rev() {
                digits[k] = rem % dims[k];
                rem /= dims[k];
            }
            for (g, members) in grouping.groups.iter().enumerate() {
                let mut idx = 0;
                for &s in members {
                    idx = idx * dims[s] + digits[s];
                }
                local[i * ng + g] = idx;
            }
        }
        Ok(Self { base, grouping, group_dims, local })
    }

    pub fn full_split(base: PartitionSpec) -> Self {
        let g = Grouping::full_split(&base);
        Self::new(base, g).expect("full split is always valid")
    }

    pub fn base(&self) -> &PartitionSpec {
        &self.base
    }

    pub fn grouping(&self) -> &Grouping {
        &self.grouping
    }

    pub fn group_dims(&self) -> &[usize] {
        &self.group_dims
    }

    pub fn n_groups(&self) -> usize {
        self.group_dims.len()
    }

    pub fn total_dim(&self) -> usize {
        self.base.total_dim()
    }

    #[inline]
    pub fn local_index(&self, full: usize, group: usize) -> usize {
        self.local[full * self.group_dims.len() + group]
    }

    /// Amplitudes of `factor_0 (x) factor_1 (x) ...` placed according to the grouping.
    pub fn assemble(&self, factors: &[&[C64]]) -> Vec<C64> {
        let ng = self.n_groups();
        (0..self.total_dim())
            .map(|i| {
                let mut a = ONE;
                for (g, f) in factors.iter().enumerate() {
                    a *= f[self.local[i * ng + g]];
                }
                a
            })
            .collect()
    }

    /// `(M_g)_{ab} = sum conj(w_I) M_IJ w_J` over full indices with local
    /// index `a` (resp. `b`) in group `g`, where `w` is the product with
    /// factor `g` removed. Then `<p|M|p> = <f_g|M_g|f_g>`.
    pub fn contract_except(&self, m: &ComplexMatrix, factors: &[&[C64]], group: usize) -> ComplexMatrix {
        let n = self.total_dim();
        let ng = self.n_groups();
        let w: Vec<C64> = (0..n)
            .map(|i| {
                let mut a = ONE;
                for (g, f) in factors.iter().enumerate() {
                    if g != group {
                        a *= f[self.local[i * ng + g]];
                    }
                }
                a
            })
            .collect();
        let dg = self.group_dims[group];
        let mut out = ComplexMatrix::zeros(dg, dg);
        // Contract the column index first: t_{I,b} = sum_{J: J_g = b} M_IJ w_J.
        let mut t = vec![ZERO; n * dg];
        for i in 0..n {
            let row = m.row(i);
            for j in 0..n {
                let b = self.local[j * ng + group];
                t[i * dg + b] += row[j] * w[j];
            }
        }
        for i in 0..n {
            let a = self.local[i * ng + group];
            let wi = w[i].conj();
            for b in 0..dg {
                out[(a, b)] += wi * t[i * dg + b];
            }
        }
        out
    }
}

/// Product of normalized factors, one per group of a layout.
#[derive(Clone, Debug)]
pub struct ProductState {
    layout: Arc<ProductLayout>,
    factors: Vec<PureState>,
    assembled: PureState,
}

impl ProductState {
    pub fn new(layout: Arc<ProductLayout>, factors: Vec<PureState>) -> Result<Self, StateError> {
        if factors.len() != layout.n_groups() {
            return Err(StateError::DimensionMismatch { expected: layout.n_groups(), got: factors.len() });
        }
        for (f, &d) in factors.iter().zip(layout.group_dims()) {
            if f.dim() != d {
                return Err(StateError::DimensionMismatch { expected: d, got: f.dim() });
            }
        }
        let refs: Vec<&[C64]> = factors.iter().map(|f| f.amplitudes()).collect();
        let assembled = PureState::normalize(layout.assemble(&refs))?;
        Ok(Self { layout, factors, assembled })
    }

    pub fn layout(&self) -> &Arc<ProductLayout> {
        &self.layout
    }

    pub fn factors(&self) -> &[PureState] {
        &self.factors
    }

    pub fn assembled(&self) -> &PureState {
        &self.assembled
    }

    pub fn into_assembled(self) -> PureState {
        self.assembled
    }
}

/// Seeded random stream. Child streams derived with [`RngStream::derive`]
/// depend only on the parent seed and the tag, so parallel sampling stays
/// reproducible under a single seed.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    rng: ChaCha8Rng,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn derive(&self, tag: u64) -> Self {
        Self::new(splitmix64(self.seed ^ splitmix64(tag.wrapping_add(0x5851_F42D_4C95_7F2D))))
    }

    /// Derive with two tags, e.g. (iteration, sample index).
    pub fn derive2(&self, a: u64, b: u64) -> Self {
        self.derive(a).derive(b)
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn complex_normal(&mut self) -> C64 {
        C64::new(self.normal(), self.normal())
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}

/// Haar-random pure state: normalized vector of i.i.d. complex Gaussians.
pub fn haar_random_pure(dim: usize, rng: &mut RngStream) -> PureState {
    loop {
        let v: Vec<C64> = (0..dim).map(|_| rng.complex_normal()).collect();
        if let Ok(s) = PureState::normalize(v) {
            return s;
        }
    }
}

pub fn random_product_state(layout: &Arc<ProductLayout>, rng: &mut RngStream) -> ProductState {
    let factors = layout.group_dims().iter().map(|&d| haar_random_pure(d, rng)).collect();
    ProductState::new(layout.clone(), factors).expect("factor dimensions match layout")
}

/// `exp(i sum_j alpha_j g_j)` over the traceless generators of `SU(dim)`,
/// `alpha_j ~ N(0, width^2)`.
pub fn random_generic_unitary(dim: usize, width: f64, rng: &mut RngStream) -> ComplexMatrix {
    let basis = GeneratorBasis::shared(dim).expect("dim >= 2");
    let mut r = vec![0.0; dim * dim];
    for x in r.iter_mut().skip(1) {
        *x = width * rng.normal();
    }
    let h = basis.devectorize(&r).expect("length matches");
    exp_i_hermitian(&h)
}

/// Applies an independent random `SU(d_g)` rotation to each factor.
pub fn perturb_local(p: &ProductState, width: f64, rng: &mut RngStream) -> ProductState {
    assert!(width >= 0.0, "width must be non-negative");
    if width == 0.0 {
        return p.clone();
    }
    let factors = p
        .factors()
        .iter()
        .map(|f| {
            let u = random_generic_unitary(f.dim(), width, rng);
            PureState::normalize(u.matvec(f.amplitudes())).expect("unitary preserves norm")
        })
        .collect();
    ProductState::new(p.layout().clone(), factors).expect("same layout")
}

/// Applies a random `SU(N)` rotation of the whole space.
pub fn perturb_generic(s: &PureState, width: f64, rng: &mut RngStream) -> PureState {
    assert!(width >= 0.0, "width must be non-negative");
    if width == 0.0 || s.dim() < 2 {
        return s.clone();
    }
    let u = random_generic_unitary(s.dim(), width, rng);
    PureState::normalize(u.matvec(s.amplitudes())).expect("unitary preserves norm")
}

/// Schmidt coefficients (descending) of a bipartite vector `dim_a x dim_b`.
pub fn schmidt_coefficients(psi: &[C64], dim_a: usize, dim_b: usize) -> Vec<f64> {
    let m = nalgebra::DMatrix::<C64>::from_fn(dim_a, dim_b, |i, j| psi[i * dim_b + j]);
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_qubits() -> Arc<ProductLayout> {
        Arc::new(ProductLayout::full_split(PartitionSpec::new(vec![2, 2]).unwrap()))
    }

    #[test]
    fn dim_one_state_has_unit_modulus() {
        let mut r = RngStream::new(1);
        let s = haar_random_pure(1, &mut r);
        assert!((s.amplitudes()[0].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn seeded_sampling_is_deterministic() {
        let a = haar_random_pure(4, &mut RngStream::new(42));
        let b = haar_random_pure(4, &mut RngStream::new(42));
        assert_eq!(a, b);
        let c = haar_random_pure(4, &mut RngStream::new(43));
        assert_ne!(a, c);
        let d1 = RngStream::new(42).derive(7);
        let d2 = RngStream::new(42).derive(7);
        assert_eq!(d1.seed(), d2.seed());
        assert_ne!(RngStream::new(42).derive(8).seed(), d1.seed());
    }

    #[test]
    fn haar_marginal_population() {
        let mut r = RngStream::new(9);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| haar_random_pure(2, &mut r).amplitudes()[0].norm_sqr()).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean population {mean}");
    }

    #[test]
    fn haar_bloch_vectors_uniform_over_octants() {
        let mut r = RngStream::new(10);
        let n = 10_000;
        let mut counts = [0usize; 8];
        for _ in 0..n {
            let s = haar_random_pure(2, &mut r);
            let (a, b) = (s.amplitudes()[0], s.amplitudes()[1]);
            let rho01 = a * b.conj();
            let x = 2.0 * rho01.re;
            let y = -2.0 * rho01.im;
            let z = a.norm_sqr() - b.norm_sqr();
            let o = (x > 0.0) as usize | ((y > 0.0) as usize) << 1 | ((z > 0.0) as usize) << 2;
            counts[o] += 1;
        }
        let expected = n as f64 / 8.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // chi-square, 7 dof: p = 0.001 at 24.32
        assert!(chi2 < 24.32, "chi2 = {chi2}, counts {counts:?}");
    }

    #[test]
    fn product_states_have_schmidt_rank_one() {
        let layout = two_qubits();
        let mut r = RngStream::new(3);
        for _ in 0..100 {
            let p = random_product_state(&layout, &mut r);
            let sc = schmidt_coefficients(p.assembled().amplitudes(), 2, 2);
            assert!(sc[1] < 1e-12);
            assert!((p.assembled().fidelity(p.assembled()) - 1.0).abs() < 1e-9);
        }
        let layout322 = Arc::new(ProductLayout::full_split(PartitionSpec::new(vec![3, 2, 2]).unwrap()));
        assert_eq!(random_product_state(&layout322, &mut r).assembled().dim(), 12);
    }

    #[test]
    fn assembled_matches_kron() {
        let layout = Arc::new(ProductLayout::full_split(PartitionSpec::new(vec![3, 2, 2]).unwrap()));
        let mut r = RngStream::new(4);
        let p = random_product_state(&layout, &mut r);
        let f = p.factors();
        let k = crate::numerics::kron_vec(&crate::numerics::kron_vec(f[0].amplitudes(), f[1].amplitudes()), f[2].amplitudes());
        for (a, b) in k.iter().zip(p.assembled().amplitudes()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn non_contiguous_grouping_places_factors() {
        let base = PartitionSpec::new(vec![3, 2, 2]).unwrap();
        let g = Grouping::new(vec![vec![1], vec![0, 2]], &base).unwrap();
        let layout = Arc::new(ProductLayout::new(base, g).unwrap());
        assert_eq!(layout.group_dims(), &[2, 6]);
        let mut r = RngStream::new(5);
        let p = random_product_state(&layout, &mut r);
        let a = p.factors()[0].amplitudes();
        let b = p.factors()[1].amplitudes();
        for q in 0..3 {
            for s1 in 0..2 {
                for s2 in 0..2 {
                    let full = (q * 2 + s1) * 2 + s2;
                    let expect = a[s1] * b[q * 2 + s2];
                    assert!((p.assembled().amplitudes()[full] - expect).norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn contraction_reproduces_expectation() {
        let base = PartitionSpec::new(vec![3, 2, 2]).unwrap();
        let layout = Arc::new(ProductLayout::full_split(base));
        let mut r = RngStream::new(6);
        let m = {
            let v: Vec<C64> = (0..144).map(|_| r.complex_normal()).collect();
            ComplexMatrix::new(12, 12, v).unwrap().hermitian_part()
        };
        let p = random_product_state(&layout, &mut r);
        let refs: Vec<&[C64]> = p.factors().iter().map(|f| f.amplitudes()).collect();
        let full = m.sandwich(p.assembled().amplitudes(), p.assembled().amplitudes());
        for g in 0..3 {
            let mg = layout.contract_except(&m, &refs, g);
            let part = mg.sandwich(refs[g], refs[g]);
            assert!((full - part).norm() < 1e-12);
        }
    }

    #[test]
    fn local_perturbation_examples() {
        let layout = two_qubits();
        let mut r = RngStream::new(7);
        let p = random_product_state(&layout, &mut r);
        let same = perturb_local(&p, 0.0, &mut r);
        assert_eq!(same.assembled(), p.assembled());

        let mut fids = Vec::new();
        for _ in 0..200 {
            let q = perturb_local(&p, 0.1, &mut r);
            fids.push(p.assembled().fidelity(q.assembled()));
            assert!(schmidt_coefficients(q.assembled().amplitudes(), 2, 2)[1] < 1e-12);
        }
        let typical = fids.iter().filter(|&&f| f > 0.9).count();
        assert!(typical > 190, "only {typical}/200 above 0.9");

        for _ in 0..20 {
            let q = perturb_local(&p, 10.0, &mut r);
            assert!((norm(q.assembled().amplitudes()) - 1.0).abs() < 1e-12);
            assert!(schmidt_coefficients(q.assembled().amplitudes(), 2, 2)[1] < 1e-9);
        }
    }

    #[test]
    fn generic_perturbation_examples() {
        let mut r = RngStream::new(8);
        let s = haar_random_pure(4, &mut r);
        assert_eq!(perturb_generic(&s, 0.0, &mut r), s);
        for w in [0.01, 1.0, 10.0] {
            let t = perturb_generic(&s, w, &mut r);
            assert!((norm(t.amplitudes()) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn generic_infidelity_scales_quadratically() {
        let mut r = RngStream::new(12);
        let s = haar_random_pure(4, &mut r);
        let mean_infidelity = |w: f64, r: &mut RngStream| {
            (0..1000).map(|_| 1.0 - s.fidelity(&perturb_generic(&s, w, r))).sum::<f64>() / 1000.0
        };
        let w1 = 0.05;
        let w2 = 0.1;
        let i1 = mean_infidelity(w1, &mut r);
        let i2 = mean_infidelity(w2, &mut r);
        let slope = (i2 / i1).ln() / (w2 / w1).ln();
        assert!(slope > 1.0 && slope < 4.0, "log-log slope {slope}");
    }
}
