//! Open-system dynamics of the qutrit ⊗ qubit ⊗ qubit assembly in the
//! Liouville picture, and the per-step separability analysis of a trajectory.
//!
//! The state obeys `dr/dt = (M - R) r` with `M_km = -i Tr g_k [H, g_m]`
//! (antisymmetric, purity preserving) and
//! `R_km = sum_ij C_ij Tr g_k [l_i, [l_j, g_m]]`, where `l_1..l_3` are the
//! qutrit Gell-Mann matrices carrying the field noise. For PSD `C` the
//! relaxation is dissipative (`r.R r >= 0`).

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{canonicalize_322, dominant_eigenvector, nilpotent_log, CanonicalOptions, Tanglemeter};
use crate::bsa::{bsa_decompose_seeded, BsaConfig, BsaSeed, SeparabilityMode};
use crate::density::{DensityError, DensityMatrix};
use crate::liouville::{gell_mann, pauli, GeneratorBasis, LiouvilleError, PartitionSpec};
use crate::numerics::{eigenvalues_hermitian, kron, ComplexMatrix, C64};
use crate::states::{PureState, RngStream};

pub const DIM: usize = 12;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("non-finite state at step {0}")]
    NonFinite(usize),
    #[error("invalid integration settings: {0}")]
    InvalidSettings(String),
    #[error(transparent)]
    Liouville(#[from] LiouvilleError),
    #[error(transparent)]
    Density(#[from] DensityError),
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct LindbladModel {
    /// Static-field couplings of `lambda_1..lambda_3`.
    pub f: [f64; 3],
    /// Coupling of `lambda_4 ⊗ sigma_x ⊗ I`.
    pub f4: f64,
    /// Coupling of `lambda_6 ⊗ I ⊗ sigma_x`.
    pub f6: f64,
    pub eps1: f64,
    pub eps2: f64,
    /// Time-averaged field fluctuation covariance.
    pub noise_cov: [[f64; 3]; 3],
}

impl Default for LindbladModel {
    fn default() -> Self {
        Self { f: [0.0; 3], f4: 0.0, f6: 0.0, eps1: 0.0, eps2: 0.0, noise_cov: [[0.0; 3]; 3] }
    }
}

impl LindbladModel {
    /// Stand-in parameter set. The `lambda_4 x sigma_x` coupling alone turns
    /// the GHZ-like start into a state that is product across qubit 1 at
    /// `t = pi/2 + k pi`; dephasing of the excited qutrit levels widens these
    /// instants into finite intervals of vanishing genuine three-party
    /// entanglement, which revives in between.
    pub fn fig3_like() -> Self {
        Self {
            f: [0.0; 3],
            f4: 1.0,
            f6: 0.0,
            eps1: 0.0,
            eps2: 0.0,
            noise_cov: [[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.2]],
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "fig3-like" => Some(Self::fig3_like()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let finite = self.f.iter().chain([&self.f4, &self.f6, &self.eps1, &self.eps2]).all(|x| x.is_finite())
            && self.noise_cov.iter().flatten().all(|x| x.is_finite());
        if !finite {
            return Err(DynamicsError::InvalidModel("non-finite parameter".into()));
        }
        let c = &self.noise_cov;
        for i in 0..3 {
            for j in 0..3 {
                if (c[i][j] - c[j][i]).abs() > 1e-12 {
                    return Err(DynamicsError::InvalidModel(format!("noise covariance not symmetric at ({i}, {j})")));
                }
            }
        }
        let m = ComplexMatrix::from_fn(3, 3, |i, j| C64::new(c[i][j], 0.0));
        let min = eigenvalues_hermitian(&m)[2];
        if min < -1e-10 {
            return Err(DynamicsError::InvalidModel(format!("noise covariance not PSD (eigenvalue {min:.3e})")));
        }
        Ok(())
    }
}

fn embed(q: &ComplexMatrix, a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    kron(&kron(q, a), b)
}

/// Qutrit Gell-Mann matrix acting on the first factor.
fn qutrit_op(i: usize) -> ComplexMatrix {
    let id = ComplexMatrix::identity(2);
    embed(&gell_mann(i), &id, &id)
}

/// `H = sum f_i l_i + f4 l_4 s1x + f6 l_6 s2x + eps1 s1z + eps2 s2z` on
/// qutrit ⊗ qubit₁ ⊗ qubit₂.
pub fn build_hamiltonian(model: &LindbladModel) -> ComplexMatrix {
    let id2 = ComplexMatrix::identity(2);
    let id3 = ComplexMatrix::identity(3);
    let mut h = ComplexMatrix::zeros(DIM, DIM);
    let mut add = |s: f64, m: ComplexMatrix| {
        if s != 0.0 {
            h.add_scaled(C64::new(s, 0.0), &m);
        }
    };
    for i in 0..3 {
        add(model.f[i], qutrit_op(i + 1));
    }
    add(model.f4, embed(&gell_mann(4), &pauli(1), &id2));
    add(model.f6, embed(&gell_mann(6), &id2, &pauli(1)));
    add(model.eps1, embed(&id3, &pauli(3), &id2));
    add(model.eps2, embed(&id3, &id2, &pauli(3)));
    h
}

/// Real matrix whose column `m` holds the Liouville components of `op(g_m)`.
fn superoperator(basis: &GeneratorBasis, op: impl Fn(&ComplexMatrix) -> ComplexMatrix) -> DMatrix<f64> {
    let n2 = basis.len();
    let mut out = DMatrix::zeros(n2, n2);
    for m in 0..n2 {
        let col = basis.vectorize_matrix(&op(&basis.generator(m))).expect("dimension matches").components;
        for (k, v) in col.into_iter().enumerate() {
            out[(k, m)] = v;
        }
    }
    out
}

/// `M_km = -i Tr g_k [H, g_m]`.
pub fn build_drift(h: &ComplexMatrix, basis: &GeneratorBasis) -> DMatrix<f64> {
    superoperator(basis, |g| h.commutator(g).scale_complex(C64::new(0.0, -1.0)))
}

/// `R_km = sum_ij C_ij Tr g_k [l_i, [l_j, g_m]]`.
pub fn build_relaxation(model: &LindbladModel, basis: &GeneratorBasis) -> DMatrix<f64> {
    let ls: Vec<ComplexMatrix> = (1..=3).map(qutrit_op).collect();
    let c = model.noise_cov;
    if c.iter().flatten().all(|&x| x == 0.0) {
        return DMatrix::zeros(basis.len(), basis.len());
    }
    superoperator(basis, |g| {
        let mut acc = ComplexMatrix::zeros(DIM, DIM);
        for j in 0..3 {
            let inner = ls[j].commutator(g);
            for i in 0..3 {
                if c[i][j] != 0.0 {
                    acc.add_scaled(C64::new(c[i][j], 0.0), &ls[i].commutator(&inner));
                }
            }
        }
        acc
    })
}

#[derive(Clone, Debug)]
pub struct GeneratorMatrices {
    pub drift: DMatrix<f64>,
    pub relaxation: DMatrix<f64>,
}

impl GeneratorMatrices {
    pub fn new(model: &LindbladModel) -> Result<Self, DynamicsError> {
        model.validate()?;
        let basis = GeneratorBasis::shared(DIM)?;
        Ok(Self { drift: build_drift(&build_hamiltonian(model), &basis), relaxation: build_relaxation(model, &basis) })
    }

    /// `M - R`
    pub fn generator(&self) -> DMatrix<f64> {
        &self.drift - &self.relaxation
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolveOptions {
    /// Keep every `record_every`-th step (the first and last are always kept).
    pub record_every: usize,
    /// Check the minimum eigenvalue of every recorded state.
    pub monitor_positivity: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { record_every: 1, monitor_positivity: false }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    /// Integrator step index of each record.
    pub steps: Vec<usize>,
    pub times: Vec<f64>,
    pub liouville_vectors: Vec<Vec<f64>>,
    /// Records whose state dipped below `-1e-8` (positivity monitor only).
    pub positivity_flags: Vec<usize>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn purity(&self, k: usize) -> f64 {
        self.liouville_vectors[k].iter().map(|x| x * x).sum()
    }

    pub fn density_matrix(&self, k: usize, partition: &PartitionSpec, tol: f64) -> Result<DensityMatrix, DynamicsError> {
        Ok(DensityMatrix::from_liouville(partition.clone(), &self.liouville_vectors[k], tol)?)
    }
}

/// Fixed-step classic Runge-Kutta integration of `dr/dt = (M - R) r`.
pub fn evolve(
    r0: &[f64],
    mats: &GeneratorMatrices,
    dt: f64,
    t_end: f64,
    opts: &EvolveOptions,
) -> Result<Trajectory, DynamicsError> {
    let a = mats.generator();
    let n = a.nrows();
    if r0.len() != n {
        return Err(DynamicsError::InvalidSettings(format!("state has {} components, expected {n}", r0.len())));
    }
    if !(dt > 0.0) || !(t_end >= 0.0) || opts.record_every == 0 {
        return Err(DynamicsError::InvalidSettings(format!("dt = {dt}, t_end = {t_end}, record_every = {}", opts.record_every)));
    }
    let n_steps = (t_end / dt - 1e-9).ceil().max(0.0) as usize;
    let basis = GeneratorBasis::shared((n as f64).sqrt().round() as usize)?;
    let mut traj = Trajectory { dt, steps: Vec::new(), times: Vec::new(), liouville_vectors: Vec::new(), positivity_flags: Vec::new() };
    let record = |traj: &mut Trajectory, step: usize, r: &[f64]| {
        if opts.monitor_positivity {
            let m = basis.devectorize(r).expect("length checked");
            if eigenvalues_hermitian(&m).last().is_some_and(|&e| e < -1e-8) {
                traj.positivity_flags.push(traj.times.len());
            }
        }
        traj.steps.push(step);
        traj.times.push(step as f64 * dt);
        traj.liouville_vectors.push(r.to_vec());
    };
    let mut r = nalgebra::DVector::from_column_slice(r0);
    record(&mut traj, 0, r.as_slice());
    for step in 1..=n_steps {
        let k1 = &a * &r;
        let k2 = &a * (&r + &k1 * (0.5 * dt));
        let k3 = &a * (&r + &k2 * (0.5 * dt));
        let k4 = &a * (&r + &k3 * dt);
        r += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        if r.iter().any(|x| !x.is_finite()) {
            return Err(DynamicsError::NonFinite(step));
        }
        if step % opts.record_every == 0 || step == n_steps {
            record(&mut traj, step, r.as_slice());
        }
    }
    Ok(traj)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalysisOptions {
    /// Analyze every `every`-th trajectory record.
    pub every: usize,
    pub death_tol: f64,
    /// Tanglemeter recorded when the dominant eigenvalue exceeds this.
    pub dominance: f64,
    /// Feed each decomposition the previous step's basis vertices.
    pub warm_seed: bool,
    pub canonical: CanonicalOptions,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self { every: 1, death_tol: 1e-3, dominance: 0.9, warm_seed: true, canonical: CanonicalOptions::default() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AnalysisRecord {
    pub t: f64,
    pub purity: f64,
    pub b: Option<f64>,
    pub rank: Option<usize>,
    pub lambda_dom: Option<f64>,
    pub tanglemeter: Option<Tanglemeter>,
    pub iterations: usize,
    pub converged: bool,
    pub error: Option<String>,
}

/// Maximal run of analyzed steps with `B < death_tol` after a step with
/// `B > death_tol`; `revival` is the first later time it exceeds the
/// tolerance again (absent for a terminal death).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DeathInterval {
    pub onset: f64,
    pub last_dead: f64,
    pub revival: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TrajectoryAnalysis {
    pub records: Vec<AnalysisRecord>,
    pub death_intervals: Vec<DeathInterval>,
    pub failures: usize,
    /// Entangled component at the last analyzed time with `B > death_tol`.
    #[serde(skip)]
    pub last_entangled: Option<(f64, DensityMatrix)>,
}

pub fn analyze_trajectory(
    traj: &Trajectory,
    partition: &PartitionSpec,
    mode: &SeparabilityMode,
    config: &BsaConfig,
    rng: &RngStream,
    opts: &AnalysisOptions,
) -> Result<TrajectoryAnalysis, DynamicsError> {
    if opts.every == 0 {
        return Err(DynamicsError::InvalidSettings("analysis stride must be positive".into()));
    }
    let is_322 = partition.dims() == [3, 2, 2];
    let mut seed: Option<BsaSeed> = None;
    let mut records = Vec::new();
    let mut failures = 0;
    let mut last_entangled = None;
    for (idx, k) in (0..traj.len()).step_by(opts.every).enumerate() {
        let t = traj.times[k];
        let purity = traj.purity(k);
        let mut rec = AnalysisRecord {
            t,
            purity,
            b: None,
            rank: None,
            lambda_dom: None,
            tanglemeter: None,
            iterations: 0,
            converged: false,
            error: None,
        };
        let rho = match traj.density_matrix(k, partition, 1e-8) {
            Ok(r) => r,
            Err(e) => {
                failures += 1;
                rec.error = Some(e.to_string());
                records.push(rec);
                continue;
            }
        };
        let step_rng = rng.derive(idx as u64);
        let warm = if opts.warm_seed { seed.as_ref() } else { None };
        match bsa_decompose_seeded(&rho, mode, config, &step_rng, warm) {
            Ok(d) => {
                rec.b = Some(d.b);
                rec.iterations = d.iterations_used;
                rec.converged = d.converged;
                rec.rank = Some(d.entangled_rank(config.rank_rel_tol));
                if let Some(ent) = &d.rho_ent {
                    let (lambda, v) = dominant_eigenvector(ent);
                    rec.lambda_dom = Some(lambda);
                    if lambda > opts.dominance && is_322 {
                        let mut crng = step_rng.derive(0xca);
                        rec.tanglemeter = Some(nilpotent_log(&canonicalize_322(&v, &opts.canonical, &mut crng).state));
                    }
                } else {
                    rec.rank = Some(0);
                }
                if d.b > opts.death_tol {
                    last_entangled = d.rho_ent.clone().map(|e| (t, e));
                }
                log::info!("t = {t:.3}: B = {:.6} rank = {:?} iterations = {}", d.b, rec.rank, d.iterations_used);
                seed = Some(d.seed());
            }
            Err(e) => {
                failures += 1;
                rec.error = Some(e.to_string());
                log::warn!("t = {t:.3}: decomposition failed: {e}");
            }
        }
        records.push(rec);
    }
    let death_intervals = death_intervals(&records, opts.death_tol);
    Ok(TrajectoryAnalysis { records, death_intervals, failures, last_entangled })
}

/// Sudden-death intervals of a sequence of analyzed records (failed steps are skipped).
pub fn death_intervals(records: &[AnalysisRecord], tol: f64) -> Vec<DeathInterval> {
    let mut out = Vec::new();
    let mut alive_before = false;
    let mut open: Option<DeathInterval> = None;
    for r in records {
        let Some(b) = r.b else { continue };
        if b < tol {
            match &mut open {
                Some(iv) => iv.last_dead = r.t,
                None if alive_before => open = Some(DeathInterval { onset: r.t, last_dead: r.t, revival: None }),
                None => {}
            }
        } else {
            if let Some(mut iv) = open.take() {
                iv.revival = Some(r.t);
                out.push(iv);
            }
            alive_before = true;
        }
    }
    out.extend(open);
    out
}

/// Liouville vector of a pure state in the shared 12-dimensional basis.
pub fn initial_vector(psi: &PureState) -> Result<Vec<f64>, DynamicsError> {
    let basis: Arc<GeneratorBasis> = GeneratorBasis::shared(psi.dim())?;
    Ok(basis.vectorize_pure(psi.amplitudes())?)
}
