//! Best separable approximation: `rho = (1 - B) rho_sep + B rho_ent` with the
//! entangled weight `B` minimal.
//!
//! Each iteration solves an LP over pure-state columns in Liouville space:
//! product vertices cost 0, entangled vertices cost 1, and the rhs is the
//! Liouville vector of `rho`. The vertex pool is refreshed between
//! iterations (fresh samples, shrinking perturbations of the support, the
//! eigenvectors of `rho`), and the previous basis is always carried over so
//! `B` never increases. With `dual_guided` the LP duals also price new
//! columns directly: the best entangled column is the top eigenvector of the
//! dual operator and the best product columns come from an alternating
//! local search. With `barrier_master` the pricing operator comes instead
//! from a log-barrier solve of the exact problem over the current key
//! products, whose remainder eigenvectors are fed back to the LP.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::barrier::{solve_master, MasterSolution};
use crate::density::{partial_transpose, DensityError, DensityMatrix};
use crate::liouville::{GeneratorBasis, Grouping, LiouvilleError, PartitionSpec};
use crate::lp::{lp_solve, lp_warm_solve, LpError, LpOptions, LpProblem, LpSolution, LpStatus};
use crate::numerics::{
    eig_hermitian_part, eigenvalues_hermitian, inner, normalized, rank_from_spectrum, ComplexMatrix, HermitianEigen, C64,
};
use crate::product_search::{ascend, multi_start, SearchOptions};
use crate::states::{
    haar_random_pure, perturb_generic, perturb_local, random_product_state, ProductLayout, ProductState, PureState,
    RngStream, StateError,
};

#[derive(Debug, Error)]
pub enum BsaError {
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Liouville(#[from] LiouvilleError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error("invalid separability mode: {0}")]
    InvalidMode(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("decomposition LP ended with status {0:?}")]
    NotOptimal(LpStatus),
}

/// Which product states populate the separable polytope.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SeparabilityMode {
    /// Products over the full split into subsystems.
    #[default]
    KSep,
    /// Full split plus every bipartition.
    BisepAugmented,
    /// Explicit list of groupings (lists of subsystem-index groups).
    Custom(Vec<Vec<Vec<usize>>>),
}

impl SeparabilityMode {
    pub fn groupings(&self, base: &PartitionSpec) -> Result<Vec<Grouping>, BsaError> {
        let gs = match self {
            Self::KSep => vec![Grouping::full_split(base)],
            Self::BisepAugmented => {
                let mut gs = vec![Grouping::full_split(base)];
                for g in Grouping::all_bipartitions(base) {
                    if !gs.contains(&g) {
                        gs.push(g);
                    }
                }
                gs
            }
            Self::Custom(list) => {
                if list.is_empty() {
                    return Err(BsaError::InvalidMode("custom mode needs at least one grouping".into()));
                }
                list.iter()
                    .map(|g| Grouping::new(g.clone(), base).map_err(|e| BsaError::InvalidMode(e.to_string())))
                    .collect::<Result<_, _>>()?
            }
        };
        Ok(gs)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::KSep => "k-sep",
            Self::BisepAugmented => "bisep-augmented",
            Self::Custom(_) => "custom",
        }
    }
}

/// Largest rank an essentially entangled component can have: the minimum
/// over the mode's groupings of `N - sum_k N_k + K - 1`.
pub fn rank_bound(mode: &SeparabilityMode, partition: &PartitionSpec) -> Result<usize, BsaError> {
    Ok(mode
        .groupings(partition)?
        .iter()
        .map(|g| g.rank_bound(partition))
        .min()
        .expect("at least one grouping"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BsaConfig {
    /// Fresh product samples per iteration; `None` means `min(20 N^2, vertex_cap)`.
    pub n_product_vertices: Option<usize>,
    /// Fresh Haar samples per iteration; same default as above.
    pub n_entangled_vertices: Option<usize>,
    /// Perturbed clones per support vertex; `None` means `N^2`. The total is capped at `vertex_cap`.
    pub clones_per_support: Option<usize>,
    pub vertex_cap: usize,
    pub width_0: f64,
    pub width_decay: f64,
    pub convergence_tol: f64,
    pub patience: usize,
    pub max_iterations: usize,
    pub support_tol: f64,
    pub feasibility_tol: f64,
    pub rank_check_floor: f64,
    pub rank_rel_tol: f64,
    pub perturb_input_on_breakdown: bool,
    /// Price new columns from the LP duals each iteration.
    pub dual_guided: bool,
    /// Price from the central-path dual of the restricted problem
    /// `max sum w_p  s.t.  sum w_p |p><p| <= rho` instead of the LP duals.
    pub barrier_master: bool,
    /// Random restarts per grouping for the product pricing search.
    pub pricing_random_starts: usize,
    /// Stop early once the estimated optimality gap falls below this.
    pub gap_tol: f64,
    /// With dual pricing, the patience rule only counts once the gap
    /// estimate is below this; `None` disables the extra condition.
    pub stall_gap_tol: Option<f64>,
    /// Eigenvalues of the input at or below this are treated as zero and
    /// the search is restricted to the range.
    pub range_tol: f64,
}

impl Default for BsaConfig {
    fn default() -> Self {
        Self {
            n_product_vertices: None,
            n_entangled_vertices: None,
            clones_per_support: None,
            vertex_cap: 4000,
            width_0: 0.3,
            width_decay: 0.9,
            convergence_tol: 1e-6,
            patience: 5,
            max_iterations: 200,
            support_tol: 1e-9,
            feasibility_tol: 1e-8,
            rank_check_floor: 1e-3,
            rank_rel_tol: 1e-6,
            perturb_input_on_breakdown: true,
            dual_guided: true,
            barrier_master: true,
            pricing_random_starts: 16,
            gap_tol: 1e-9,
            stall_gap_tol: Some(1e-7),
            range_tol: 1e-10,
        }
    }
}

impl BsaConfig {
    pub fn validate(&self) -> Result<(), BsaError> {
        let positive = [
            ("width_0", self.width_0),
            ("convergence_tol", self.convergence_tol),
            ("support_tol", self.support_tol),
            ("feasibility_tol", self.feasibility_tol),
            ("rank_check_floor", self.rank_check_floor),
            ("rank_rel_tol", self.rank_rel_tol),
            ("gap_tol", self.gap_tol),
            ("range_tol", self.range_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(BsaError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.width_decay > 0.0 && self.width_decay < 1.0) {
            return Err(BsaError::InvalidConfig(format!("width_decay must lie in (0,1), got {}", self.width_decay)));
        }
        if self.max_iterations == 0 || self.patience == 0 {
            return Err(BsaError::InvalidConfig("max_iterations and patience must be at least 1".into()));
        }
        Ok(())
    }

    fn default_count(&self, n: usize) -> usize {
        (20 * n * n).min(self.vertex_cap)
    }

    pub fn product_count(&self, n: usize) -> usize {
        self.n_product_vertices.unwrap_or_else(|| self.default_count(n))
    }

    pub fn entangled_count(&self, n: usize) -> usize {
        self.n_entangled_vertices.unwrap_or_else(|| self.default_count(n))
    }

    pub fn clone_count(&self, n: usize) -> usize {
        self.clones_per_support.unwrap_or(n * n)
    }
}

/// A column of the decomposition LP.
#[derive(Clone, Debug)]
pub enum Vertex {
    /// Product over grouping `grouping` of the mode.
    ///
    /// `column`, when present, is the LP vector actually used: the product
    /// state projected into the range of the input (within `1e-10` fidelity).
    Product { grouping: usize, state: ProductState, column: Option<PureState> },
    Entangled(PureState),
}

impl Vertex {
    pub fn amplitudes(&self) -> &[C64] {
        match self {
            Self::Product { column: Some(c), .. } => c.amplitudes(),
            Self::Product { state, .. } => state.assembled().amplitudes(),
            Self::Entangled(s) => s.amplitudes(),
        }
    }

    pub fn is_product(&self) -> bool {
        matches!(self, Self::Product { .. })
    }

    pub fn cost(&self) -> f64 {
        if self.is_product() {
            0.0
        } else {
            1.0
        }
    }

    pub fn state(&self) -> &PureState {
        match self {
            Self::Product { column: Some(c), .. } => c,
            Self::Product { state, .. } => state.assembled(),
            Self::Entangled(s) => s,
        }
    }
}

#[derive(Clone, Debug)]
pub struct WeightedVertex {
    pub weight: f64,
    pub vertex: Vertex,
}

/// Vertices carried from a related decomposition (e.g. the previous time step).
#[derive(Clone, Debug, Default)]
pub struct BsaSeed {
    pub vertices: Vec<Vertex>,
}

#[derive(Clone, Debug)]
pub struct BsaDecomposition {
    /// Total entangled weight.
    pub b: f64,
    pub product_terms: Vec<WeightedVertex>,
    pub entangled_terms: Vec<WeightedVertex>,
    /// Absent when `B = 1`.
    pub rho_sep: Option<DensityMatrix>,
    /// Absent when `B <= support_tol` (the state is separable).
    pub rho_ent: Option<DensityMatrix>,
    pub iterations_used: usize,
    pub converged: bool,
    /// `B_t` after every iteration.
    pub history: Vec<f64>,
    /// Estimated distance of `B` from the optimum over all pure states,
    /// available when columns are priced from duals.
    pub dual_gap: Option<f64>,
    /// Mixing weight `eta` with `I/N` applied after an LP breakdown.
    pub input_perturbation: Option<f64>,
    /// Final basis vertices, usable as a [`BsaSeed`].
    pub basis_vertices: Vec<Vertex>,
}

impl BsaDecomposition {
    pub fn seed(&self) -> BsaSeed {
        BsaSeed { vertices: self.basis_vertices.clone() }
    }

    pub fn support_size(&self) -> usize {
        self.product_terms.len() + self.entangled_terms.len()
    }

    pub fn weight_sum(&self) -> f64 {
        self.product_terms.iter().chain(&self.entangled_terms).map(|t| t.weight).sum()
    }

    /// Rank of `rho_ent` at relative tolerance `rel_tol` (0 when absent).
    pub fn entangled_rank(&self, rel_tol: f64) -> usize {
        self.rho_ent.as_ref().map_or(0, |r| rank_from_spectrum(&eigenvalues_hermitian(r.matrix()), rel_tol))
    }

    /// `(1 - B) rho_sep + B rho_ent`
    pub fn reconstruct(&self) -> ComplexMatrix {
        let n = self.product_terms.iter().chain(&self.entangled_terms).next().map_or(0, |t| t.vertex.state().dim());
        let mut m = ComplexMatrix::zeros(n, n);
        if let Some(s) = &self.rho_sep {
            m.add_scaled(C64::new(1.0 - self.b, 0.0), s.matrix());
        }
        if let Some(e) = &self.rho_ent {
            m.add_scaled(C64::new(self.b, 0.0), e.matrix());
        }
        m
    }
}

/// One column per vertex (`vectorize(|v><v|)`), rhs `vectorize(rho)`,
/// cost 0 for product and 1 for entangled columns.
pub fn build_lp(
    rho: &DensityMatrix,
    product_vertices: &[PureState],
    entangled_vertices: &[PureState],
    basis: &GeneratorBasis,
) -> Result<LpProblem, BsaError> {
    let cols: Vec<(&[C64], f64)> = product_vertices
        .iter()
        .map(|v| (v.amplitudes(), 0.0))
        .chain(entangled_vertices.iter().map(|v| (v.amplitudes(), 1.0)))
        .collect();
    build_lp_columns(rho, &cols, basis)
}

fn build_lp_columns(rho: &DensityMatrix, cols: &[(&[C64], f64)], basis: &GeneratorBasis) -> Result<LpProblem, BsaError> {
    let n = rho.dim();
    if basis.dim() != n {
        return Err(LiouvilleError::DimensionMismatch { expected: n, got: basis.dim() }.into());
    }
    let m = n * n;
    let ncol = cols.len();
    let mut a = vec![0.0; m * ncol];
    let mut buf = vec![0.0; m];
    for (j, (amp, _)) in cols.iter().enumerate() {
        if amp.len() != n {
            return Err(StateError::DimensionMismatch { expected: n, got: amp.len() }.into());
        }
        basis.vectorize_pure_into(amp, &mut buf);
        for (i, v) in buf.iter().enumerate() {
            a[i * ncol + j] = *v;
        }
    }
    let b = basis.vectorize_matrix(rho.matrix())?.components;
    let c = cols.iter().map(|(_, c)| *c).collect();
    Ok(LpProblem::new(m, ncol, a, b, c)?)
}

pub fn bsa_decompose(
    rho: &DensityMatrix,
    mode: &SeparabilityMode,
    config: &BsaConfig,
    rng: &RngStream,
) -> Result<BsaDecomposition, BsaError> {
    bsa_decompose_seeded(rho, mode, config, rng, None)
}

/// As [`bsa_decompose`], additionally offering `seed` vertices to the first iteration.
pub fn bsa_decompose_seeded(
    rho: &DensityMatrix,
    mode: &SeparabilityMode,
    config: &BsaConfig,
    rng: &RngStream,
    seed: Option<&BsaSeed>,
) -> Result<BsaDecomposition, BsaError> {
    config.validate()?;
    match Search::new(rho, mode, config)?.run(rng, seed) {
        Err(BsaError::Lp(LpError::NumericalBreakdown(msg))) if config.perturb_input_on_breakdown => {
            let eta = 1e-8;
            log::warn!("LP breakdown ({msg}); retrying on input mixed with {eta:e} I/N");
            let n = rho.dim();
            let mut m = rho.matrix().scale(1.0 - eta);
            m.add_scaled(C64::new(eta / n as f64, 0.0), &ComplexMatrix::identity(n));
            let perturbed = DensityMatrix::new(rho.partition().clone(), m)?;
            let mut d = Search::new(&perturbed, mode, config)?.run(&rng.derive(0x5eed), seed)?;
            d.input_perturbation = Some(eta);
            Ok(d)
        }
        other => other,
    }
}

/// Isometry onto the numerical range of `rho`. Every column of an exact
/// decomposition lies in this range, so the LP is posed in the reduced space.
struct Frame {
    /// `N x r` eigenvector columns; `None` when `rho` has full rank.
    iso: Option<ComplexMatrix>,
    /// `V V^H`
    proj: Option<ComplexMatrix>,
    rank: usize,
}

impl Frame {
    fn reduce(&self, a: &[C64]) -> Vec<C64> {
        match &self.iso {
            None => a.to_vec(),
            Some(v) => {
                let n = v.n_rows();
                (0..self.rank).map(|k| (0..n).map(|i| v[(i, k)].conj() * a[i]).sum()).collect()
            }
        }
    }

    fn lift(&self, a: &[C64]) -> Vec<C64> {
        match &self.iso {
            None => a.to_vec(),
            Some(v) => v.matvec(a),
        }
    }

    /// `V M V^H`
    fn lift_op(&self, m: &ComplexMatrix) -> ComplexMatrix {
        match &self.iso {
            None => m.clone(),
            Some(v) => v.matmul(m).matmul(&v.adjoint()),
        }
    }
}

struct Search<'a> {
    rho: &'a DensityMatrix,
    config: &'a BsaConfig,
    frame: Frame,
    /// Generator basis of the reduced space.
    basis: Arc<GeneratorBasis>,
    rhs: Vec<f64>,
    layouts: Vec<Arc<ProductLayout>>,
    lp_opts: LpOptions,
    eigvecs: Vec<Vertex>,
    /// `rho` in reduced coordinates, matching `rhs`.
    reduced: ComplexMatrix,
}

struct Pricing {
    columns: Vec<Vertex>,
    /// Lower bound on `B` certified by the priced duals (up to the
    /// locality of the product search).
    lb: f64,
}


const IN_RANGE_TOL: f64 = 1e-10;
/// Priced product columns per iteration that get compensating entangled columns.
const COMPENSATED: usize = 8;
/// Tightest duality gap the barrier master is driven to; tighter only costs conditioning.
const MASTER_GAP: f64 = 1e-9;
/// Barrier weights below this, or below `MASTER_SLACK / t` (dual slack
/// above `1 / MASTER_SLACK`), drop out of the master set.
const MASTER_DROP: f64 = 1e-7;
const MASTER_SLACK: f64 = 20.0;
/// Eigenvalues of the compressed range complement below this count as admissible directions.
const OUTER_NULL_TOL: f64 = 1e-12;
/// Objective evaluations per start of the outer-factor hill climb.
const OUTER_EVALS: usize = 150;

impl<'a> Search<'a> {
    fn new(rho: &'a DensityMatrix, mode: &SeparabilityMode, config: &'a BsaConfig) -> Result<Self, BsaError> {
        let base = rho.partition().clone();
        let layouts = mode
            .groupings(&base)?
            .into_iter()
            .map(|g| ProductLayout::new(base.clone(), g).map(Arc::new))
            .collect::<Result<Vec<_>, _>>()?;
        let n = rho.dim();
        let eig = rho.eigen();
        let rank = eig.eigenvalues.iter().filter(|&&l| l > config.range_tol).count().max(1);
        let frame = if rank == n {
            Frame { iso: None, proj: None, rank }
        } else {
            let v = ComplexMatrix::from_fn(n, rank, |i, k| eig.eigenvectors[(i, k)]);
            let proj = v.matmul(&v.adjoint());
            Frame { iso: Some(v), proj: Some(proj), rank }
        };
        let kept: f64 = eig.eigenvalues[..rank].iter().sum();
        let reduced = match &frame.iso {
            None => rho.matrix().clone(),
            Some(_) => {
                ComplexMatrix::from_real_diagonal(&eig.eigenvalues[..rank].iter().map(|l| l / kept).collect::<Vec<_>>())
            }
        };
        let (basis, rhs) = if rank >= 2 {
            let basis = GeneratorBasis::shared(rank)?;
            let rhs = basis.vectorize_matrix(&reduced)?.components;
            (basis, rhs)
        } else {
            (GeneratorBasis::shared(2)?, Vec::new())
        };
        let lp_opts = LpOptions {
            feasibility_tol: config.feasibility_tol,
            support_tol: config.support_tol,
            ..LpOptions::default()
        };
        let mut s = Self { rho, config, frame, basis, rhs, layouts, lp_opts, eigvecs: Vec::new(), reduced };
        s.eigvecs = s.eigenvector_vertices(&eig);
        Ok(s)
    }

    fn in_range(&self) -> bool {
        self.frame.iso.is_some()
    }

    /// Range eigenvectors of `rho` as entangled columns, plus product
    /// columns for those that are product across some grouping.
    fn eigenvector_vertices(&self, eig: &HermitianEigen) -> Vec<Vertex> {
        let mut rng = RngStream::new(0xe16e);
        let mut out = Vec::new();
        let opts = SearchOptions::default();
        for k in 0..self.frame.rank {
            let v = PureState::normalize(eig.vector(k)).expect("unit eigenvector");
            let proj = v.projector();
            for (gi, layout) in self.layouts.iter().enumerate() {
                let starts: Vec<ProductState> = (0..2).map(|_| random_product_state(layout, &mut rng)).collect();
                let best = starts.iter().map(|s| ascend(&proj, s, &opts)).max_by(|a, b| a.0.total_cmp(&b.0));
                if let Some((val, p)) = best {
                    if val > 1.0 - 1e-12 {
                        out.push(Vertex::Product { grouping: gi, state: p, column: Some(v.clone()) });
                        break;
                    }
                }
            }
            out.push(Vertex::Entangled(v));
        }
        out
    }

    fn solve(&self, cols: &[Vertex], warm: Option<&[usize]>) -> Result<LpSolution, BsaError> {
        let r = self.frame.rank;
        let m = r * r;
        let ncol = cols.len();
        let mut a = vec![0.0; m * ncol];
        let mut buf = vec![0.0; m];
        for (j, v) in cols.iter().enumerate() {
            if self.in_range() {
                let red = normalized(&self.frame.reduce(v.amplitudes()));
                self.basis.vectorize_pure_into(&red, &mut buf);
            } else {
                self.basis.vectorize_pure_into(v.amplitudes(), &mut buf);
            }
            for (i, x) in buf.iter().enumerate() {
                a[i * ncol + j] = *x;
            }
        }
        let c = cols.iter().map(Vertex::cost).collect();
        let lp = LpProblem::new(m, ncol, a, self.rhs.clone(), c)?;
        let sol = match warm {
            Some(b) => lp_warm_solve(&lp, b, &self.lp_opts),
            None => lp_solve(&lp, &self.lp_opts),
        };
        let sol = sol?;
        match sol.status {
            LpStatus::Optimal => Ok(sol),
            ref s => Err(BsaError::NotOptimal(s.clone())),
        }
    }

    /// Pulls a product state into the range of `rho`; `None` if the nearest
    /// local maximum of the range overlap is not (numerically) in range.
    fn into_range(&self, grouping: usize, start: &ProductState) -> Option<Vertex> {
        let proj = self.frame.proj.as_ref().expect("range mode");
        let (ov, p) = ascend(proj, start, &SearchOptions { max_sweeps: 500, tol: 1e-16 });
        if ov < 1.0 - IN_RANGE_TOL {
            return None;
        }
        let column = PureState::normalize(proj.matvec(p.assembled().amplitudes())).ok()?;
        Some(Vertex::Product { grouping, state: p, column: Some(column) })
    }

    fn fresh_vertices(&self, rng: &mut RngStream, out: &mut Vec<Vertex>) {
        let n = self.rho.dim();
        let ng = self.layouts.len();
        if self.in_range() {
            let attempts = self.config.product_count(n).min(4 * n * n);
            for i in 0..attempts {
                let gi = i % ng;
                let start = random_product_state(&self.layouts[gi], rng);
                if let Some(v) = self.into_range(gi, &start) {
                    out.push(v);
                }
            }
            for _ in 0..self.config.entangled_count(n) {
                let h = haar_random_pure(self.frame.rank, rng);
                let v = PureState::normalize(self.frame.lift(h.amplitudes())).expect("isometry preserves norm");
                out.push(Vertex::Entangled(v));
            }
            return;
        }
        for i in 0..self.config.product_count(n) {
            let gi = i % ng;
            out.push(Vertex::Product { grouping: gi, state: random_product_state(&self.layouts[gi], rng), column: None });
        }
        for _ in 0..self.config.entangled_count(n) {
            out.push(Vertex::Entangled(haar_random_pure(n, rng)));
        }
    }

    fn clones(&self, support: &[Vertex], width: f64, rng: &mut RngStream, out: &mut Vec<Vertex>) {
        let n = self.rho.dim();
        let per = self.config.clone_count(n);
        let mut total = (per * support.len()).min(self.config.vertex_cap);
        if self.in_range() {
            total = total.min(4 * n * n);
        }
        if support.is_empty() || total == 0 {
            return;
        }
        for i in 0..total {
            match &support[i % support.len()] {
                Vertex::Product { grouping, state, .. } => {
                    let moved = perturb_local(state, width, rng);
                    if self.in_range() {
                        if let Some(v) = self.into_range(*grouping, &moved) {
                            out.push(v);
                        }
                    } else {
                        out.push(Vertex::Product { grouping: *grouping, state: moved, column: None });
                    }
                }
                Vertex::Entangled(s) => {
                    if self.in_range() {
                        let red = PureState::normalize(self.frame.reduce(s.amplitudes()));
                        if let Ok(red) = red {
                            let moved = perturb_generic(&red, width, rng);
                            let v = PureState::normalize(self.frame.lift(moved.amplitudes())).expect("isometry");
                            out.push(Vertex::Entangled(v));
                        }
                    } else {
                        out.push(Vertex::Entangled(perturb_generic(s, width, rng)));
                    }
                }
            }
        }
    }

    /// New columns with negative reduced cost under the dual operator
    /// `y_red` (reduced coordinates), plus the implied lower bound on `B`.
    fn price(&self, y_red: &ComplexMatrix, support: &[Vertex], remainder: &ComplexMatrix, rng: &mut RngStream) -> Pricing {
        let eig = eig_hermitian_part(y_red);
        let mut columns = Vec::new();
        let lambda_max = eig.eigenvalues[0];
        for k in 0..eig.dim().min(2) {
            if eig.eigenvalues[k] > 1.0 + 1e-12 {
                let v = PureState::normalize(self.frame.lift(&eig.vector(k))).expect("unit eigenvector");
                columns.push(Vertex::Entangled(v));
            }
        }
        let y = self.frame.lift_op(y_red);
        let opts = SearchOptions { max_sweeps: 50, tol: 1e-13 };
        // Penalized operators for the in-range steps, from long to short.
        let penalized: Vec<ComplexMatrix> = match &self.frame.proj {
            None => Vec::new(),
            Some(p) => {
                let scale = 1.0 + y.max_abs();
                let q = &ComplexMatrix::identity(p.n_rows()) - p;
                [1.0, 10.0, 100.0]
                    .iter()
                    .map(|mu| {
                        let mut m = y.clone();
                        m.add_scaled(C64::new(-mu * scale, 0.0), &q);
                        m
                    })
                    .collect()
            }
        };
        let mut mu_p = 0.0f64;
        let mut priced: Vec<(f64, Vertex)> = Vec::new();
        for (gi, layout) in self.layouts.iter().enumerate() {
            let starts: Vec<ProductState> = support
                .iter()
                .filter_map(|v| match v {
                    Vertex::Product { grouping, state, .. } if *grouping == gi => Some(state.clone()),
                    _ => None,
                })
                .collect();
            let found: Vec<(f64, Vertex)> = if self.in_range() {
                let mut all = starts;
                all.extend((0..self.config.pricing_random_starts).map(|_| random_product_state(layout, rng)));
                let mut found: Vec<(f64, Vertex)> =
                    all.iter().filter_map(|s| self.ascend_in_range(&y, &penalized, gi, s)).collect();
                for s in &all {
                    found.extend(self.ascend_outer(&y, gi, s, rng));
                }
                found.sort_by(|a, b| b.0.total_cmp(&a.0));
                found
            } else {
                multi_start(&y, layout, &starts, self.config.pricing_random_starts, rng, &opts)
                    .into_iter()
                    .map(|(val, p)| (val, Vertex::Product { grouping: gi, state: p, column: None }))
                    .collect()
            };
            let mut kept: Vec<PureState> = Vec::new();
            for (val, v) in found {
                mu_p = mu_p.max(val);
                if val <= 1e-12 {
                    break;
                }
                if kept.iter().any(|q| q.fidelity(v.state()) > 1.0 - 1e-12) {
                    continue;
                }
                kept.push(v.state().clone());
                priced.push((val, v));
            }
        }
        priced.sort_by(|a, b| b.0.total_cmp(&a.0));
        let top: Vec<&Vertex> = priced.iter().take(COMPENSATED).map(|(_, v)| v).collect();
        columns.extend(self.compensating(remainder, &top));
        columns.extend(priced.into_iter().map(|(_, v)| v));
        let dual_obj = self.reduced.trace_product(y_red).re;
        let lb = ((dual_obj - mu_p) / (lambda_max - mu_p).max(1.0)).max(0.0);
        log::trace!("pricing: mu_p = {mu_p:.3e} lambda_max = {lambda_max:.6} lb = {lb:.6}");
        Pricing { columns, lb }
    }

    /// Barrier solve over the previous master products plus the LP support
    /// products; `master` is replaced by the columns that keep weight.
    /// The start is the LP point, which is feasible; `gap_tol` is the
    /// duality gap the barrier is driven to.
    fn solve_master(
        &self,
        master: &mut Vec<(Vertex, f64)>,
        cols: &[Vertex],
        sol: &LpSolution,
        gap_tol: f64,
    ) -> Option<MasterSolution> {
        let mut cand: Vec<(Vertex, f64)> = sol
            .support
            .iter()
            .filter(|&&j| cols[j].is_product())
            .map(|&j| (cols[j].clone(), sol.x[j]))
            .collect();
        for (v, _) in std::mem::take(master) {
            if !cand.iter().any(|(u, _)| inner(u.amplitudes(), v.amplitudes()).norm_sqr() > 1.0 - 1e-14) {
                cand.push((v, 0.0));
            }
        }
        let columns: Vec<Vec<C64>> = cand.iter().map(|(v, _)| normalized(&self.frame.reduce(v.amplitudes()))).collect();
        let w0: Vec<f64> = cand.iter().map(|(_, w)| *w).collect();
        let ms = solve_master(&self.reduced, &columns, &w0, gap_tol)?;
        let drop = MASTER_DROP.max(MASTER_SLACK * ms.inv_t);
        let mut kept: Vec<(Vertex, f64)> =
            cand.into_iter().zip(&ms.w).filter(|(_, &w)| w > drop).map(|((v, _), &w)| (v, w)).collect();
        kept.sort_by(|a, b| b.1.total_cmp(&a.1));
        kept.truncate(2 * self.frame.rank * self.frame.rank);
        *master = kept;
        Some(ms)
    }

    /// Eigenvectors of a reduced-space remainder as entangled columns.
    fn spectrum_columns(&self, remainder: &ComplexMatrix) -> Vec<Vertex> {
        let e = eig_hermitian_part(remainder);
        let top = e.eigenvalues[0];
        (0..e.dim())
            .filter(|&k| top > 0.0 && e.eigenvalues[k] > 1e-12 * top)
            .map(|k| Vertex::Entangled(PureState::normalize(self.frame.lift(&e.vector(k))).expect("unit eigenvector")))
            .collect()
    }

    /// Entangled part `sum_j x_j |v_j><v_j|` of an LP solution, in reduced coordinates.
    fn remainder(&self, cols: &[Vertex], sol: &LpSolution) -> ComplexMatrix {
        let r = self.frame.rank;
        let mut out = ComplexMatrix::zeros(r, r);
        for &j in &sol.support {
            if !cols[j].is_product() {
                let red = normalized(&self.frame.reduce(cols[j].amplitudes()));
                out.add_scaled(C64::new(sol.x[j], 0.0), &ComplexMatrix::outer(&red));
            }
        }
        out
    }

    /// Entangled columns that let the LP move weight from the remainder `R`
    /// onto new product columns: the eigenvectors of `R - t |p><p|` with the
    /// largest `t` keeping it positive, for each `p` and for their average.
    fn compensating(&self, remainder: &ComplexMatrix, products: &[&Vertex]) -> Vec<Vertex> {
        let eig = eig_hermitian_part(remainder);
        let floor = 1e-12 * eig.eigenvalues[0].max(0.0);
        if eig.eigenvalues[0] <= 0.0 || products.is_empty() {
            return Vec::new();
        }
        let mut out = Vec::new();
        let mut avg = remainder.clone();
        let share = 1.0 / products.len() as f64;
        let push_spectrum = |m: &ComplexMatrix, out: &mut Vec<Vertex>| {
            let e = eig_hermitian_part(m);
            let top = e.eigenvalues[0];
            for k in 0..e.dim() {
                if e.eigenvalues[k] > 1e-9 * top {
                    let v = PureState::normalize(self.frame.lift(&e.vector(k))).expect("unit eigenvector");
                    out.push(Vertex::Entangled(v));
                }
            }
        };
        for p in products {
            let q = normalized(&self.frame.reduce(p.amplitudes()));
            let mut outside = 0.0;
            let mut inv = 0.0;
            for k in 0..eig.dim() {
                let c = inner(&eig.vector(k), &q).norm_sqr();
                if eig.eigenvalues[k] > floor {
                    inv += c / eig.eigenvalues[k];
                } else {
                    outside += c;
                }
            }
            if outside > 1e-10 || inv <= 0.0 {
                continue;
            }
            let t = 1.0 / inv;
            let pp = ComplexMatrix::outer(&q);
            let mut m = remainder.clone();
            m.add_scaled(C64::new(-t, 0.0), &pp);
            push_spectrum(&m, &mut out);
            avg.add_scaled(C64::new(-t * share, 0.0), &pp);
        }
        if products.len() > 1 {
            push_spectrum(&avg, &mut out);
        }
        out
    }

    /// Projected ascent of `<p|Y|p>` over product states in the range: a
    /// penalized alternating sweep proposes a step, a retraction pulls it
    /// back into the range, and only improving steps are kept.
    fn ascend_in_range(
        &self,
        y: &ComplexMatrix,
        penalized: &[ComplexMatrix],
        grouping: usize,
        start: &ProductState,
    ) -> Option<(f64, Vertex)> {
        let value = |v: &Vertex| y.sandwich(v.amplitudes(), v.amplitudes()).re;
        let mut cur = self.into_range(grouping, start)?;
        let mut val = value(&cur);
        let one = SearchOptions { max_sweeps: 1, tol: 0.0 };
        for _ in 0..60 {
            let Vertex::Product { state, .. } = &cur else { unreachable!() };
            let step = penalized.iter().find_map(|m| {
                let (_, trial) = ascend(m, state, &one);
                let t = self.into_range(grouping, &trial)?;
                let tv = value(&t);
                (tv > val + 1e-15).then_some((tv, t))
            });
            match step {
                Some((tv, t)) => {
                    let done = tv - val < 1e-14;
                    cur = t;
                    val = tv;
                    if done {
                        break;
                    }
                }
                None => break,
            }
        }
        Some((val, cur))
    }

    /// Best in-range product with every factor but the largest fixed: the
    /// range condition is linear in that factor, so its optimum is the top
    /// eigenvector of `Y` compressed to the admissible subspace.
    fn best_inner(&self, y: &ComplexMatrix, grouping: usize, factors: &[PureState]) -> Option<(f64, Vertex)> {
        let proj = self.frame.proj.as_ref().expect("range mode");
        let layout = &self.layouts[grouping];
        let dims = layout.group_dims();
        let g = (0..dims.len()).max_by_key(|&k| dims[k])?;
        let amps: Vec<&[C64]> = factors.iter().map(PureState::amplitudes).collect();
        let q = &ComplexMatrix::identity(proj.n_rows()) - proj;
        let qe = eig_hermitian_part(&layout.contract_except(&q, &amps, g));
        let free: Vec<usize> = (0..dims[g]).filter(|&k| qe.eigenvalues[k] < OUTER_NULL_TOL).collect();
        if free.is_empty() {
            return None;
        }
        let s = ComplexMatrix::from_fn(dims[g], free.len(), |i, k| qe.eigenvectors[(i, free[k])]);
        let yg = layout.contract_except(y, &amps, g);
        let e = eig_hermitian_part(&s.adjoint().matmul(&yg).matmul(&s));
        let f = PureState::normalize(s.matvec(&e.vector(0))).ok()?;
        let mut fs = factors.to_vec();
        fs[g] = f;
        let p = ProductState::new(layout.clone(), fs).ok()?;
        if proj.sandwich(p.assembled().amplitudes(), p.assembled().amplitudes()).re < 1.0 - IN_RANGE_TOL {
            return None;
        }
        let column = PureState::normalize(proj.matvec(p.assembled().amplitudes())).ok()?;
        Some((e.eigenvalues[0], Vertex::Product { grouping, state: p, column: Some(column) }))
    }

    /// Hill climb of `max <p|Y|p>` over the remaining factors, with the
    /// largest factor solved exactly by [`Self::best_inner`] at every step.
    /// Unlike [`Self::ascend_in_range`] this never leaves the range, so it
    /// can slide along a positive-dimensional set of in-range products.
    fn ascend_outer(&self, y: &ComplexMatrix, grouping: usize, start: &ProductState, rng: &mut RngStream) -> Option<(f64, Vertex)> {
        let (mut val, mut cur) = self.best_inner(y, grouping, start.factors())?;
        let mut width = 0.3;
        let mut misses = 0;
        for _ in 0..OUTER_EVALS {
            if width < 1e-7 {
                break;
            }
            let Vertex::Product { state, .. } = &cur else { unreachable!() };
            let trial = perturb_local(state, width, rng);
            match self.best_inner(y, grouping, trial.factors()) {
                Some((tv, t)) if tv > val => {
                    val = tv;
                    cur = t;
                    misses = 0;
                }
                _ => {
                    misses += 1;
                    if misses == 4 {
                        width *= 0.5;
                        misses = 0;
                    }
                }
            }
        }
        Some((val, cur))
    }

    /// A pure input is either product across some grouping (`B = 0`) or not (`B = 1`).
    fn pure_input(&self, rng: &RngStream) -> BsaDecomposition {
        let psi = PureState::normalize(self.rho.eigen().vector(0)).expect("unit eigenvector");
        let proj = psi.projector();
        let mut r = rng.derive(0x9u64);
        let mut term = None;
        for (gi, layout) in self.layouts.iter().enumerate() {
            if let Some((val, p)) = multi_start(&proj, layout, &[], 16, &mut r, &SearchOptions::default()).into_iter().next() {
                if val > 1.0 - IN_RANGE_TOL {
                    term = Some(Vertex::Product { grouping: gi, state: p, column: Some(psi.clone()) });
                    break;
                }
            }
        }
        let separable = term.is_some();
        let vertex = term.unwrap_or_else(|| Vertex::Entangled(psi.clone()));
        let b = if separable { 0.0 } else { 1.0 };
        let rho = DensityMatrix::from_pure(self.rho.partition().clone(), &psi).expect("pure state");
        let t = WeightedVertex { weight: 1.0, vertex: vertex.clone() };
        let (product_terms, entangled_terms) = if separable { (vec![t], vec![]) } else { (vec![], vec![t]) };
        BsaDecomposition {
            b,
            product_terms,
            entangled_terms,
            rho_sep: separable.then(|| rho.clone()),
            rho_ent: (!separable).then_some(rho),
            iterations_used: 1,
            converged: true,
            history: vec![b],
            dual_gap: Some(0.0),
            input_perturbation: None,
            basis_vertices: vec![vertex],
        }
    }

    fn run(&self, rng: &RngStream, seed: Option<&BsaSeed>) -> Result<BsaDecomposition, BsaError> {
        if self.frame.rank == 1 {
            return Ok(self.pure_input(rng));
        }
        let cfg = self.config;
        let m = self.frame.rank * self.frame.rank;
        let mut retained: Vec<Vertex> = seed.map(|s| s.vertices.clone()).unwrap_or_default();
        if self.in_range() {
            // seed vertices outside the range cannot carry weight
            retained.retain(|v| {
                let a = v.amplitudes();
                let proj = self.frame.proj.as_ref().expect("range mode");
                proj.sandwich(a, a).re > 1.0 - IN_RANGE_TOL
            });
        }
        let mut support: Vec<Vertex> = retained.clone();
        let mut width = cfg.width_0;
        let mut history: Vec<f64> = Vec::new();
        let mut pricing: Option<Pricing> = None;
        let mut converged = false;
        let mut last: Option<(Vec<Vertex>, LpSolution)> = None;
        let mut gap = None;
        let mut master: Vec<(Vertex, f64)> = Vec::new();

        for t in 0..cfg.max_iterations {
            let started = Instant::now();
            let mut it_rng = rng.derive(t as u64);
            let mut cols = retained.clone();
            let warm = (cols.len() == m).then(|| (0..m).collect::<Vec<_>>());
            cols.extend(self.eigvecs.iter().cloned());
            if t > 0 {
                self.clones(&support, width, &mut it_rng, &mut cols);
            }
            if let Some(p) = pricing.take() {
                cols.extend(p.columns);
            }
            self.fresh_vertices(&mut it_rng, &mut cols);

            let sampled = started.elapsed();
            let attempt = self.solve(&cols, warm.as_deref()).or_else(|e| match warm {
                Some(_) => {
                    log::debug!("iteration {t}: warm LP failed ({e}); retrying cold");
                    self.solve(&cols, None)
                }
                None => Err(e),
            });
            let sol = match attempt {
                Ok(s) => s,
                // every earlier iterate is a valid decomposition
                Err(e) if last.is_some() => {
                    log::warn!("iteration {t}: LP failed ({e}); keeping the previous iterate");
                    break;
                }
                Err(e) => return Err(e),
            };
            let solved = started.elapsed();
            let b_t = sol.objective_value.clamp(0.0, 1.0);
            // the previous basis is among the columns, so a higher value is
            // rounding; keep the better decomposition
            let improved = history.last().is_none_or(|&prev| b_t <= prev);
            history.push(if improved { b_t } else { history[t - 1] });

            retained = sol.basis.iter().map(|&j| cols[j].clone()).collect();
            support = sol.support.iter().map(|&j| cols[j].clone()).collect();
            if cfg.dual_guided {
                let tm = Instant::now();
                let inner_gap = (1e-2 * gap.unwrap_or(1.0f64)).clamp(MASTER_GAP, 1e-3);
                let ms = if cfg.barrier_master { self.solve_master(&mut master, &cols, &sol, inner_gap) } else { None };
                log::debug!("master: {} columns in {:.1?}", master.len(), tm.elapsed());
                let p = match ms {
                    Some(ms) => {
                        let y = &ComplexMatrix::identity(self.frame.rank) - &ms.dual;
                        let mut p = self.price(&y, &support, &ms.remainder, &mut it_rng);
                        // the LP can reproduce the barrier point exactly
                        p.columns.extend(self.spectrum_columns(&ms.remainder));
                        p.columns.extend(master.iter().map(|(v, _)| v.clone()));
                        p
                    }
                    None => {
                        let y = self.basis.devectorize(&sol.duals).expect("dual length r^2");
                        let rem = self.remainder(&cols, &sol);
                        self.price(&y, &support, &rem, &mut it_rng)
                    }
                };
                gap = Some((b_t - p.lb).max(0.0));
                pricing = Some(p);
            }
            log::debug!(
                "iteration {t}: B = {b_t:.10} gap = {gap:?} columns = {} pivots = {} warm = {} \
                 sample {:.1?} lp {:.1?} price {:.1?}",
                cols.len(),
                sol.pivots,
                sol.warm_started,
                sampled,
                solved - sampled,
                started.elapsed() - solved
            );
            if improved {
                last = Some((cols, sol));
            }
            width *= cfg.width_decay;

            let certified = gap.is_some_and(|g| g < cfg.gap_tol);
            let window = (t >= cfg.patience).then(|| (history[t] - history[t - cfg.patience]).abs());
            let stalled = window.is_some_and(|d| d < cfg.convergence_tol);
            let flat = window.is_some_and(|d| d <= 1e-12);
            let gap_ok = match (gap, cfg.stall_gap_tol) {
                (Some(g), Some(tol)) => g < tol,
                _ => true,
            };
            if certified || flat || (stalled && gap_ok) {
                converged = true;
                break;
            }
        }
        let (cols, sol) = last.expect("at least one iteration");
        self.assemble(cols, sol, history, converged, gap)
    }

    fn assemble(
        &self,
        cols: Vec<Vertex>,
        sol: LpSolution,
        history: Vec<f64>,
        converged: bool,
        dual_gap: Option<f64>,
    ) -> Result<BsaDecomposition, BsaError> {
        let n = self.rho.dim();
        let basis_vertices = sol.basis.iter().map(|&j| cols[j].clone()).collect();
        let mut product_terms = Vec::new();
        let mut entangled_terms = Vec::new();
        for &j in &sol.support {
            let t = WeightedVertex { weight: sol.x[j], vertex: cols[j].clone() };
            if t.vertex.is_product() {
                product_terms.push(t);
            } else {
                entangled_terms.push(t);
            }
        }
        let b: f64 = entangled_terms.iter().map(|t| t.weight).sum();
        let a: f64 = product_terms.iter().map(|t| t.weight).sum();
        let mix = |terms: &[WeightedVertex], total: f64| -> Result<DensityMatrix, BsaError> {
            let mut mat = ComplexMatrix::zeros(n, n);
            for t in terms {
                mat.add_scaled(C64::new(t.weight / total, 0.0), &t.vertex.state().projector());
            }
            Ok(DensityMatrix::with_tolerance(self.rho.partition().clone(), mat, 1e-8)?)
        };
        let rho_ent = if b > self.config.support_tol { Some(mix(&entangled_terms, b)?) } else { None };
        let rho_sep = if a > 0.0 { Some(mix(&product_terms, a)?) } else { None };
        Ok(BsaDecomposition {
            b,
            product_terms,
            entangled_terms,
            rho_sep,
            rho_ent,
            iterations_used: history.len(),
            converged,
            history,
            dual_gap,
            input_perturbation: None,
            basis_vertices,
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct VerificationReport {
    pub reconstruction_residual: f64,
    pub weight_sum_residual: f64,
    /// Most negative eigenvalue of each component (0 when none).
    pub sep_psd_residual: f64,
    pub ent_psd_residual: f64,
    pub support_size: usize,
    pub support_cap: usize,
    pub entangled_rank: usize,
    pub rank_bound: usize,
    /// `None` when `B` is below the rank-check floor.
    pub rank_ok: Option<bool>,
    /// Largest `<p|Pi_E|p>` found over product states; `None` when skipped.
    pub extremality_overlap: Option<f64>,
    pub extremality_ok: Option<bool>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.reconstruction_residual < 1e-7
            && self.weight_sum_residual < 1e-8
            && self.support_size <= self.support_cap
            && self.rank_ok != Some(false)
    }
}

pub const EXTREMALITY_MARGIN: f64 = 1e-4;

pub fn verify_decomposition(
    rho: &DensityMatrix,
    result: &BsaDecomposition,
    mode: &SeparabilityMode,
    config: &BsaConfig,
    rng: &RngStream,
) -> Result<VerificationReport, BsaError> {
    let n = rho.dim();
    let reconstruction_residual = (&result.reconstruct() - rho.matrix()).frobenius_norm();
    let min_ev = |d: &Option<DensityMatrix>| {
        d.as_ref().map_or(0.0, |d| eigenvalues_hermitian(d.matrix()).last().copied().unwrap_or(0.0).min(0.0))
    };
    let bound = rank_bound(mode, rho.partition())?;
    let entangled_rank = result.entangled_rank(config.rank_rel_tol);
    let checked = result.b > config.rank_check_floor;
    let mut extremality_overlap = None;
    if let (true, Some(ent)) = (checked, &result.rho_ent) {
        let eig = ent.eigen();
        let top = eig.eigenvalues[0];
        let mut proj = ComplexMatrix::zeros(n, n);
        for k in 0..eig.dim() {
            if eig.eigenvalues[k] > config.rank_rel_tol * top {
                proj.add_scaled(C64::new(1.0, 0.0), &ComplexMatrix::outer(&eig.vector(k)));
            }
        }
        let mut r = rng.derive(0xe47);
        let mut best = 0.0f64;
        for layout in mode.groupings(rho.partition())?.into_iter() {
            let layout = Arc::new(ProductLayout::new(rho.partition().clone(), layout)?);
            if let Some((v, _)) = multi_start(&proj, &layout, &[], 16, &mut r, &SearchOptions::default()).first() {
                best = best.max(*v);
            }
        }
        extremality_overlap = Some(best);
    }
    Ok(VerificationReport {
        reconstruction_residual,
        weight_sum_residual: (result.weight_sum() - 1.0).abs(),
        sep_psd_residual: min_ev(&result.rho_sep),
        ent_psd_residual: min_ev(&result.rho_ent),
        support_size: result.support_size(),
        support_cap: n * n,
        entangled_rank,
        rank_bound: bound,
        rank_ok: checked.then_some(entangled_rank <= bound),
        extremality_ok: extremality_overlap.map(|v| v < 1.0 - EXTREMALITY_MARGIN),
        extremality_overlap,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PptReport {
    pub is_ppt: bool,
    pub min_pt_eigenvalue: f64,
}

/// Partial transpose over the second group of a two-group `bipartition`.
pub fn ppt_check(rho: &DensityMatrix, bipartition: &Grouping) -> Result<PptReport, BsaError> {
    bipartition.validate(rho.partition())?;
    if bipartition.n_groups() != 2 {
        return Err(BsaError::InvalidMode(format!("PPT check needs 2 groups, got {}", bipartition.n_groups())));
    }
    let pt = partial_transpose(rho.matrix(), rho.partition().dims(), &bipartition.groups[1]);
    let min = eigenvalues_hermitian(&pt).last().copied().unwrap_or(0.0);
    Ok(PptReport { is_ppt: min >= -1e-10, min_pt_eigenvalue: min })
}
