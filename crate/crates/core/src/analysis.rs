//! Characterization of the entangled component: the tanglemeter canonical
//! form of qutrit ⊗ qubit ⊗ qubit states, corner states of an entangled
//! subspace, and the tanglemeter distribution over that subspace.
//!
//! Level labels. Amplitudes are written `psi_abc` with qutrit label
//! `a in {0,1,2}` and qubit labels `b, c in {0,1}`; label 0 is the reference
//! level. The nilpotent raising operators of [`NilpotentBasis`] raise out of
//! the last matrix index, so the label-to-index map is reversed:
//! `a -> 2 - a`, `b -> 1 - b` (see [`label_index`]).

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bsa::{BsaError, SeparabilityMode};
use crate::density::DensityMatrix;
use crate::liouville::{Grouping, PartitionSpec};
use crate::numerics::{inner, kron, norm, ComplexMatrix, C64, ONE, ZERO};
use crate::product_search::{ascend, multi_start, SearchOptions};
use crate::states::{haar_random_pure, ProductLayout, ProductState, PureState, RngStream, StateError};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("tanglemeter needs a 3x2x2 partition, got {0:?}")]
    NotQutritQubitQubit(Vec<usize>),
    #[error("empty subspace")]
    EmptySubspace,
    #[error(transparent)]
    Bsa(#[from] BsaError),
    #[error(transparent)]
    State(#[from] StateError),
}

/// Vector index of the labelled level `|a b c>`.
pub fn label_index(a: usize, b: usize, c: usize) -> usize {
    (2 - a) * 4 + (1 - b) * 2 + (1 - c)
}

/// `(|000> + |111>)/sqrt(2)` in level labels.
pub fn ghz_like() -> PureState {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut v = vec![ZERO; 12];
    v[label_index(0, 0, 0)] = C64::new(s, 0.0);
    v[label_index(1, 1, 1)] = C64::new(s, 0.0);
    PureState::new(v).expect("normalized")
}

pub fn partition_322() -> PartitionSpec {
    PartitionSpec::new(vec![3, 2, 2]).expect("valid dims")
}

#[derive(Clone, Debug, PartialEq)]
pub struct NilpotentBasis {
    pub u_plus: ComplexMatrix,
    pub t_plus: ComplexMatrix,
    pub sigma_plus: ComplexMatrix,
}

impl Default for NilpotentBasis {
    fn default() -> Self {
        Self::new()
    }
}

impl NilpotentBasis {
    pub fn new() -> Self {
        let mut u_plus = ComplexMatrix::zeros(3, 3);
        u_plus[(0, 2)] = ONE;
        let mut t_plus = ComplexMatrix::zeros(3, 3);
        t_plus[(1, 2)] = ONE;
        let mut sigma_plus = ComplexMatrix::zeros(2, 2);
        sigma_plus[(0, 1)] = ONE;
        Self { u_plus, t_plus, sigma_plus }
    }

    /// The six monomials on the full space, in tanglemeter order
    /// `t s1, u s1, u s2, t s1 s2, t s2, s1 s2` (labels 110, 210, 201, 111, 101, 011).
    pub fn monomials(&self) -> [ComplexMatrix; 6] {
        let i3 = ComplexMatrix::identity(3);
        let i2 = ComplexMatrix::identity(2);
        let op = |q: &ComplexMatrix, a: &ComplexMatrix, b: &ComplexMatrix| kron(&kron(q, a), b);
        let s = &self.sigma_plus;
        [
            op(&self.t_plus, s, &i2),
            op(&self.u_plus, s, &i2),
            op(&self.u_plus, &i2, s),
            op(&self.t_plus, s, s),
            op(&self.t_plus, &i2, s),
            op(&i3, s, s),
        ]
    }

    /// Largest entry of any product of two monomials (zero by nilpotency).
    pub fn max_quadratic_product(&self) -> f64 {
        let m = self.monomials();
        let mut worst = 0.0f64;
        for a in &m {
            for b in &m {
                worst = worst.max(a.matmul(b).max_abs());
            }
        }
        worst
    }

    /// `exp(sum beta_k m_k) |000>`, using that quadratic terms vanish.
    pub fn assemble(&self, t: &Tanglemeter) -> Vec<C64> {
        let mut v = vec![ZERO; 12];
        let reference = label_index(0, 0, 0);
        v[reference] = ONE;
        for (m, beta) in self.monomials().iter().zip(t.coefficients()) {
            for i in 0..12 {
                v[i] += beta * m[(i, reference)];
            }
        }
        v
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CanonicalState {
    pub alpha_110: f64,
    pub alpha_210: f64,
    pub alpha_201: f64,
    pub alpha_111: f64,
    pub alpha_101: C64,
    pub alpha_011: C64,
    /// `psi_000` of the normalized canonical vector.
    pub norm_factor: f64,
    pub achieved_reference_population: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Tanglemeter {
    pub beta_110: f64,
    pub beta_210: f64,
    pub beta_201: f64,
    pub beta_111: f64,
    pub beta_101: C64,
    pub beta_011: C64,
}

impl Tanglemeter {
    /// Coefficients in monomial order (see [`NilpotentBasis::monomials`]).
    pub fn coefficients(&self) -> [C64; 6] {
        let r = |x: f64| C64::new(x, 0.0);
        [r(self.beta_110), r(self.beta_210), r(self.beta_201), r(self.beta_111), self.beta_101, self.beta_011]
    }

    /// `(b110, b210, b201, b111, re b101, im b101, re b011, im b011)`
    pub fn real_vector(&self) -> [f64; 8] {
        [
            self.beta_110,
            self.beta_210,
            self.beta_201,
            self.beta_111,
            self.beta_101.re,
            self.beta_101.im,
            self.beta_011.re,
            self.beta_011.im,
        ]
    }

    /// The six quantities invariant under local unitaries.
    pub fn invariants(&self) -> [f64; 6] {
        [self.beta_110, self.beta_210, self.beta_201, self.beta_111, self.beta_101.norm(), self.beta_011.norm()]
    }

    pub fn max_abs(&self) -> f64 {
        self.coefficients().iter().fold(0.0, |a, z| a.max(z.norm()))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct CanonicalOptions {
    pub n_starts: usize,
    pub max_sweeps: usize,
    pub amplitude_tol: f64,
    pub phase_tol: f64,
    /// Two reference product states count as distinct maxima when their
    /// overlaps agree to this tolerance.
    pub degeneracy_tol: f64,
}

impl Default for CanonicalOptions {
    fn default() -> Self {
        Self { n_starts: 24, max_sweeps: 500, amplitude_tol: 1e-7, phase_tol: 1e-6, degeneracy_tol: 1e-8 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CanonicalResiduals {
    /// Largest of `|psi_100|, |psi_200|, |psi_010|, |psi_001|, |psi_211|`.
    pub vanishing: f64,
    /// Largest phase offset of `psi_110, psi_210, psi_201, psi_111` from `psi_000`.
    pub phase: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CanonicalOutcome {
    pub state: CanonicalState,
    /// Normalized canonical vector.
    pub vector: Vec<C64>,
    pub residuals: CanonicalResiduals,
    pub converged: bool,
    /// The reference population has several inequivalent maximizers.
    pub degenerate_reference: bool,
    /// Stage (b) had nothing to rotate (`psi_111 = psi_211 = 0`).
    pub degenerate_rotation: bool,
}

/// Unitary whose row `target` is `v^H` (so it maps `v` to `e_target`).
fn unitary_sending(v: &[C64], target: usize) -> ComplexMatrix {
    let n = v.len();
    let mut rows: Vec<Vec<C64>> = vec![v.iter().map(|z| z.conj()).collect()];
    for k in 0..n {
        if rows.len() == n {
            break;
        }
        // Gram-Schmidt of e_k against the rows so far (rows hold conjugates)
        let mut w: Vec<C64> = (0..n).map(|i| if i == k { ONE } else { ZERO }).collect();
        for r in &rows {
            let c: C64 = r.iter().zip(&w).map(|(a, b)| a.conj() * b).sum();
            for (wi, ri) in w.iter_mut().zip(r) {
                *wi -= c * ri;
            }
        }
        let nw = norm(&w);
        if nw > 1e-6 {
            rows.push(w.iter().map(|z| z / nw).collect());
        }
    }
    // put v^H at row `target`
    rows.swap(0, target);
    let mut u = ComplexMatrix::zeros(n, n);
    for (i, r) in rows.iter().enumerate() {
        for j in 0..n {
            u[(i, j)] = r[j];
        }
    }
    u
}

fn phase_of(z: C64) -> f64 {
    z.im.atan2(z.re)
}

fn wrap(x: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let y = x.rem_euclid(tau);
    if y > std::f64::consts::PI {
        y - tau
    } else {
        y
    }
}

/// Sweep budget of the final polish, relative to `max_sweeps`.
const POLISH_FACTOR: usize = 100;

/// Canonical representative of the local-unitary orbit of a qutrit ⊗ qubit ⊗
/// qubit state: (a) maximize the reference population, (b) rotate the
/// excited qutrit levels so `psi_211 = 0`, (c) align the phases of
/// `psi_110, psi_210, psi_201, psi_111` with `psi_000`.
pub fn canonicalize_322(psi: &PureState, opts: &CanonicalOptions, rng: &mut RngStream) -> CanonicalOutcome {
    assert_eq!(psi.dim(), 12, "canonical form is defined for 12-dimensional states");
    let layout = Arc::new(ProductLayout::full_split(partition_322()));
    let proj = psi.projector();
    let search = SearchOptions { max_sweeps: opts.max_sweeps, tol: 1e-15 };
    let found = multi_start(&proj, &layout, &[], opts.n_starts.max(1), rng, &search);
    let (best_val, best) = found[0].clone();
    // Alternating ascent converges only linearly when the maximum is nearly
    // degenerate (e.g. two populations close to 1/2); polish the winner.
    let polish = SearchOptions { max_sweeps: opts.max_sweeps.saturating_mul(POLISH_FACTOR), tol: 1e-15 };
    let degenerate_reference = found.iter().skip(1).any(|(v, p)| {
        best_val - v < opts.degeneracy_tol && p.assembled().fidelity(best.assembled()) < 1.0 - 1e-6
    });
    let (_, best) = ascend(&proj, &best, &polish);

    // stage (a): local unitaries taking the optimal factors to the reference levels
    let f = best.factors();
    let uq = unitary_sending(f[0].amplitudes(), 2);
    let u1 = unitary_sending(f[1].amplitudes(), 1);
    let u2 = unitary_sending(f[2].amplitudes(), 1);
    let mut v = kron(&kron(&uq, &u1), &u2).matvec(psi.amplitudes());
    let at = |a, b, c| label_index(a, b, c);

    // stage (b): rotation of qutrit labels {1, 2} zeroing psi_211
    let (x, y) = (v[at(1, 1, 1)], v[at(2, 1, 1)]);
    let r = (x.norm_sqr() + y.norm_sqr()).sqrt();
    let degenerate_rotation = r < opts.amplitude_tol;
    if !degenerate_rotation {
        let (w11, w12, w21, w22) = (x.conj() / r, y.conj() / r, -y / r, x / r);
        for b in 0..2 {
            for c in 0..2 {
                let (p, q) = (v[at(1, b, c)], v[at(2, b, c)]);
                v[at(1, b, c)] = w11 * p + w12 * q;
                v[at(2, b, c)] = w21 * p + w22 * q;
            }
        }
    }

    // stage (c): diagonal phases. With psi_000 real, the conditions
    //   t110 + chi1 + phi1 = 0, t210 + chi2 + phi1 = 0,
    //   t201 + chi2 + phi2 = 0, t111 + chi1 + phi1 + phi2 = 0
    // have the unique solution below.
    let g = phase_of(v[at(0, 0, 0)]);
    let th = |a, b, c| phase_of(v[at(a, b, c)]) - g;
    let phi2 = th(1, 1, 0) - th(1, 1, 1);
    let chi2 = -th(2, 0, 1) - phi2;
    let phi1 = -th(2, 1, 0) - chi2;
    let chi1 = -th(1, 1, 0) - phi1;
    for a in 0..3 {
        for b in 0..2 {
            for c in 0..2 {
                let chi = [0.0, chi1, chi2][a];
                let ph = -g + chi + phi1 * b as f64 + phi2 * c as f64;
                v[at(a, b, c)] *= C64::from_polar(1.0, ph);
            }
        }
    }

    let vanishing = [at(1, 0, 0), at(2, 0, 0), at(0, 1, 0), at(0, 0, 1), at(2, 1, 1)]
        .iter()
        .fold(0.0f64, |m, &i| m.max(v[i].norm()));
    let phase = [at(1, 1, 0), at(2, 1, 0), at(2, 0, 1), at(1, 1, 1)]
        .iter()
        .filter(|&&i| v[i].norm() > opts.amplitude_tol)
        .fold(0.0f64, |m, &i| m.max(wrap(phase_of(v[i]) - phase_of(v[at(0, 0, 0)])).abs()));
    let p0 = v[at(0, 0, 0)].re;
    let rel = |a, b, c| v[at(a, b, c)] / p0;
    let state = CanonicalState {
        alpha_110: rel(1, 1, 0).norm(),
        alpha_210: rel(2, 1, 0).norm(),
        alpha_201: rel(2, 0, 1).norm(),
        alpha_111: rel(1, 1, 1).norm(),
        alpha_101: rel(1, 0, 1),
        alpha_011: rel(0, 1, 1),
        norm_factor: p0,
        achieved_reference_population: p0 * p0,
    };
    CanonicalOutcome {
        state,
        vector: v,
        residuals: CanonicalResiduals { vanishing, phase },
        converged: vanishing < opts.amplitude_tol && phase < opts.phase_tol,
        degenerate_reference,
        degenerate_rotation,
    }
}

/// `log(1 + x) = x` for the nilpotent polynomial of a canonical state.
pub fn nilpotent_log(c: &CanonicalState) -> Tanglemeter {
    let worst = NilpotentBasis::new().max_quadratic_product();
    assert!(worst == 0.0, "quadratic monomial products must vanish, found {worst}");
    Tanglemeter {
        beta_110: c.alpha_110,
        beta_210: c.alpha_210,
        beta_201: c.alpha_201,
        beta_111: c.alpha_111,
        beta_101: c.alpha_101,
        beta_011: c.alpha_011,
    }
}

/// Orthonormal basis of the range of an entangled component.
#[derive(Clone, Debug, PartialEq)]
pub struct EntangledSubspace {
    partition: PartitionSpec,
    basis_vectors: Vec<PureState>,
}

impl EntangledSubspace {
    pub fn new(partition: PartitionSpec, vectors: Vec<PureState>) -> Result<Self, AnalysisError> {
        if vectors.is_empty() {
            return Err(AnalysisError::EmptySubspace);
        }
        // re-orthonormalize
        let mut basis: Vec<PureState> = Vec::new();
        for v in vectors {
            let mut w = v.into_amplitudes();
            for b in &basis {
                let c = inner(b.amplitudes(), &w);
                for (wi, bi) in w.iter_mut().zip(b.amplitudes()) {
                    *wi -= c * bi;
                }
            }
            if norm(&w) > 1e-8 {
                basis.push(PureState::normalize(w)?);
            }
        }
        Ok(Self { partition, basis_vectors: basis })
    }

    /// Eigenvectors of `rho` with eigenvalue above `rel_tol` times the largest.
    pub fn from_density(rho: &DensityMatrix, rel_tol: f64) -> Self {
        let eig = rho.eigen();
        let top = eig.eigenvalues[0];
        let vectors = (0..eig.dim())
            .filter(|&k| eig.eigenvalues[k] > rel_tol * top)
            .map(|k| PureState::normalize(eig.vector(k)).expect("unit eigenvector"))
            .collect();
        Self { partition: rho.partition().clone(), basis_vectors: vectors }
    }

    pub fn dim(&self) -> usize {
        self.basis_vectors.len()
    }

    pub fn partition(&self) -> &PartitionSpec {
        &self.partition
    }

    pub fn basis_vectors(&self) -> &[PureState] {
        &self.basis_vectors
    }

    pub fn projector(&self) -> ComplexMatrix {
        let n = self.partition.total_dim();
        let mut p = ComplexMatrix::zeros(n, n);
        for v in &self.basis_vectors {
            p.add_scaled(ONE, &v.projector());
        }
        p
    }

    /// `V |x>` for coordinates `x` in the subspace basis.
    pub fn embed(&self, x: &[C64]) -> Vec<C64> {
        let n = self.partition.total_dim();
        let mut out = vec![ZERO; n];
        for (b, c) in self.basis_vectors.iter().zip(x) {
            for (o, a) in out.iter_mut().zip(b.amplitudes()) {
                *o += c * a;
            }
        }
        out
    }

    pub fn gram_deviation(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, a) in self.basis_vectors.iter().enumerate() {
            for (j, b) in self.basis_vectors.iter().enumerate() {
                let g = inner(a.amplitudes(), b.amplitudes());
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - C64::new(target, 0.0)).norm());
            }
        }
        worst
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OverlapOptions {
    pub n_starts: usize,
    pub search: SearchOptions,
}

impl Default for OverlapOptions {
    fn default() -> Self {
        Self { n_starts: 16, search: SearchOptions::default() }
    }
}

#[derive(Clone, Debug)]
pub struct ProductOverlap {
    pub overlap: f64,
    pub argmax: ProductState,
    pub grouping: Grouping,
}

/// Largest `<p|P|p>` over product states of every grouping of `mode`.
pub fn max_product_overlap(
    subspace: &EntangledSubspace,
    mode: &SeparabilityMode,
    opts: &OverlapOptions,
    rng: &mut RngStream,
) -> Result<ProductOverlap, AnalysisError> {
    let proj = subspace.projector();
    let mut best: Option<ProductOverlap> = None;
    for g in mode.groupings(subspace.partition())? {
        let layout = Arc::new(ProductLayout::new(subspace.partition().clone(), g.clone())?);
        let (val, p) = multi_start(&proj, &layout, &[], opts.n_starts.max(1), rng, &opts.search)
            .into_iter()
            .next()
            .expect("at least one start");
        if best.as_ref().is_none_or(|b| val > b.overlap) {
            best = Some(ProductOverlap { overlap: val.clamp(0.0, 1.0), argmax: p, grouping: g });
        }
    }
    best.ok_or(AnalysisError::EmptySubspace)
}

/// Successive in-subspace states closest to the product states: each corner
/// is the normalized projection of the best product state onto what is left
/// of the subspace after removing the earlier corners.
pub fn corner_states(
    subspace: &EntangledSubspace,
    mode: &SeparabilityMode,
    opts: &OverlapOptions,
    rng: &mut RngStream,
) -> Result<Vec<PureState>, AnalysisError> {
    let mut remaining = subspace.clone();
    let mut corners = Vec::new();
    loop {
        let best = max_product_overlap(&remaining, mode, opts, rng)?;
        let p = best.argmax.assembled().amplitudes();
        let c = PureState::normalize(remaining.projector().matvec(p))?;
        corners.push(c.clone());
        if remaining.dim() == 1 {
            break;
        }
        // complement of c within the remaining subspace
        let mut vecs = vec![c.clone()];
        vecs.extend(remaining.basis_vectors.iter().cloned());
        let full = EntangledSubspace::new(subspace.partition.clone(), vecs)?;
        let rest: Vec<PureState> = full.basis_vectors.into_iter().skip(1).collect();
        remaining = EntangledSubspace::new(subspace.partition.clone(), rest)?;
    }
    Ok(corners)
}

/// Top eigenpair of a density matrix.
pub fn dominant_eigenvector(rho: &DensityMatrix) -> (f64, PureState) {
    let eig = rho.eigen();
    (eig.eigenvalues[0], PureState::normalize(eig.vector(0)).expect("unit eigenvector"))
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BetaSample {
    pub weight: f64,
    pub tanglemeter: Tanglemeter,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BetaDistribution {
    pub samples: Vec<BetaSample>,
    /// Weighted mean of [`Tanglemeter::real_vector`].
    pub mean: Vec<f64>,
    /// Weighted covariance (row-major 8x8).
    pub covariance: Vec<f64>,
    pub failures: usize,
    pub failure_fraction: f64,
}

/// Haar-random states of the range of `rho_ent`, each canonicalized and
/// weighted by `<psi|rho_ent|psi>`.
pub fn beta_distribution(
    rho_ent: &DensityMatrix,
    n_samples: usize,
    opts: &CanonicalOptions,
    rng: &mut RngStream,
) -> Result<BetaDistribution, AnalysisError> {
    if rho_ent.partition().dims() != [3, 2, 2] {
        return Err(AnalysisError::NotQutritQubitQubit(rho_ent.partition().dims().to_vec()));
    }
    let subspace = EntangledSubspace::from_density(rho_ent, 1e-8);
    // one stream per sample, so the result does not depend on the thread count
    let base = rng.derive(0xbe7a);
    let outcomes: Vec<Option<BetaSample>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|k| {
            let mut r = base.derive(k);
            let x = haar_random_pure(subspace.dim(), &mut r);
            let psi = PureState::normalize(subspace.embed(x.amplitudes())).expect("isometric embedding of a unit vector");
            let weight = rho_ent.matrix().sandwich(psi.amplitudes(), psi.amplitudes()).re;
            let out = canonicalize_322(&psi, opts, &mut r);
            out.converged.then(|| BetaSample { weight, tanglemeter: nilpotent_log(&out.state) })
        })
        .collect();
    let failures = outcomes.iter().filter(|o| o.is_none()).count();
    let samples: Vec<BetaSample> = outcomes.into_iter().flatten().collect();
    let total: f64 = samples.iter().map(|s| s.weight).sum();
    let mut mean = vec![0.0; 8];
    let mut covariance = vec![0.0; 64];
    if total > 0.0 {
        for s in &samples {
            for (m, x) in mean.iter_mut().zip(s.tanglemeter.real_vector()) {
                *m += s.weight * x / total;
            }
        }
        for s in &samples {
            let x = s.tanglemeter.real_vector();
            for i in 0..8 {
                for j in 0..8 {
                    covariance[i * 8 + j] += s.weight * (x[i] - mean[i]) * (x[j] - mean[j]) / total;
                }
            }
        }
    }
    let failure_fraction = if n_samples == 0 { 0.0 } else { failures as f64 / n_samples as f64 };
    Ok(BetaDistribution { samples, mean, covariance, failures, failure_fraction })
}

/// Random local unitary `U_3 ⊗ U_2 ⊗ U_2`.
pub fn random_local_unitary(rng: &mut RngStream) -> ComplexMatrix {
    let haar_unitary = |n: usize, rng: &mut RngStream| {
        let cols: Vec<PureState> = (0..n).map(|_| haar_random_pure(n, rng)).collect();
        let s = EntangledSubspace::new(PartitionSpec::new(vec![n]).expect("dim"), cols).expect("nonempty");
        ComplexMatrix::from_fn(n, n, |i, j| s.basis_vectors[j].amplitudes()[i])
    };
    kron(&kron(&haar_unitary(3, rng), &haar_unitary(2, rng)), &haar_unitary(2, rng))
}
