//! On-disk formats: density matrices and results as JSON, run
//! configuration as TOML, time series and sample tables as CSV.
//!
//! Floats are written in shortest round-trip form, so a save/load cycle
//! is exact and identical inputs give identical files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{BetaSample, CanonicalOptions, Tanglemeter};
use crate::bsa::{BsaConfig, BsaDecomposition, SeparabilityMode, VerificationReport, Vertex};
use crate::density::{DensityError, DensityMatrix};
use crate::dynamics::{AnalysisRecord, LindbladModel, Trajectory};
use crate::liouville::PartitionSpec;
use crate::numerics::ComplexMatrix;

/// Validation tolerance for matrices read from disk.
pub const LOAD_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {source}")]
    Toml { path: PathBuf, source: toml::de::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("malformed matrix: {0}")]
    Malformed(String),
    #[error("invalid density matrix: {0}")]
    Density(#[from] DensityError),
}

fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::File { path: path.to_owned(), source })
}

fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| IoError::File { path: dir.to_owned(), source })?;
    }
    fs::write(path, text).map_err(|source| IoError::File { path: path.to_owned(), source })
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    serde_json::from_str(&read_text(path)?).map_err(|source| IoError::Json { path: path.to_owned(), source })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| IoError::Json { path: path.to_owned(), source })?;
    text.push('\n');
    write_text(path, &text)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DensityMatrixFile {
    pub dims: Vec<usize>,
    pub matrix_re: Vec<Vec<f64>>,
    pub matrix_im: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl DensityMatrixFile {
    pub fn from_density(rho: &DensityMatrix, label: Option<String>) -> Self {
        let (matrix_re, matrix_im) = rho.matrix().re_im();
        Self { dims: rho.partition().dims().to_vec(), matrix_re, matrix_im, label }
    }

    /// Rebuilds and validates the matrix (Hermitian, unit trace, PSD within [`LOAD_TOL`]).
    pub fn to_density(&self) -> Result<DensityMatrix, IoError> {
        let partition = PartitionSpec::new(self.dims.clone()).map_err(DensityError::from)?;
        let m = ComplexMatrix::from_re_im(&self.matrix_re, &self.matrix_im).map_err(|e| IoError::Malformed(e.to_string()))?;
        Ok(DensityMatrix::with_tolerance(partition, m, LOAD_TOL)?)
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        read_json(path)
    }

    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        write_json(path, self)
    }
}

pub fn load_density(path: &Path) -> Result<DensityMatrix, IoError> {
    DensityMatrixFile::read(path)?.to_density()
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum VertexKind {
    Product,
    Entangled,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct VertexRecord {
    pub kind: VertexKind,
    /// Index into [`DecompositionRecord::groupings`] for product vertices.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grouping: Option<usize>,
    pub weight: f64,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl VertexRecord {
    fn new(weight: f64, v: &Vertex) -> Self {
        let (kind, grouping) = match v {
            Vertex::Product { grouping, .. } => (VertexKind::Product, Some(*grouping)),
            Vertex::Entangled(_) => (VertexKind::Entangled, None),
        };
        let a = v.amplitudes();
        Self { kind, grouping, weight, re: a.iter().map(|z| z.re).collect(), im: a.iter().map(|z| z.im).collect() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DecompositionRecord {
    pub seed: u64,
    pub mode: SeparabilityMode,
    pub groupings: Vec<Vec<Vec<usize>>>,
    pub b: f64,
    pub entangled_rank: usize,
    pub iterations: usize,
    pub converged: bool,
    pub dual_gap: Option<f64>,
    pub input_perturbation: Option<f64>,
    pub history: Vec<f64>,
    pub vertices: Vec<VertexRecord>,
    pub rho_sep: Option<DensityMatrixFile>,
    pub rho_ent: Option<DensityMatrixFile>,
    pub verification: VerificationReport,
    pub config: BsaConfig,
}

impl DecompositionRecord {
    pub fn new(
        d: &BsaDecomposition,
        partition: &PartitionSpec,
        mode: &SeparabilityMode,
        config: &BsaConfig,
        verification: VerificationReport,
        seed: u64,
    ) -> Result<Self, crate::bsa::BsaError> {
        let groupings = mode.groupings(partition)?.into_iter().map(|g| g.groups).collect();
        let vertices = d.product_terms.iter().chain(&d.entangled_terms).map(|t| VertexRecord::new(t.weight, &t.vertex)).collect();
        Ok(Self {
            seed,
            mode: mode.clone(),
            groupings,
            b: d.b,
            entangled_rank: d.entangled_rank(config.rank_rel_tol),
            iterations: d.iterations_used,
            converged: d.converged,
            dual_gap: d.dual_gap,
            input_perturbation: d.input_perturbation,
            history: d.history.clone(),
            vertices,
            rho_sep: d.rho_sep.as_ref().map(|r| DensityMatrixFile::from_density(r, Some("rho_sep".into()))),
            rho_ent: d.rho_ent.as_ref().map(|r| DensityMatrixFile::from_density(r, Some("rho_ent".into()))),
            verification,
            config: config.clone(),
        })
    }

    /// `B=<value> rank=<d_E> iters=<n> converged=<flag>`
    pub fn summary(&self) -> String {
        format!("B={:.4} rank={} iters={} converged={}", self.b, self.entangled_rank, self.iterations, self.converged)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveSettings {
    pub dt: f64,
    pub t_end: f64,
    /// Integrator steps between stored trajectory rows.
    pub record_every: usize,
    /// Integrator steps between analyzed states (a multiple of `record_every`).
    pub stride: usize,
    pub monitor_positivity: bool,
    /// Decomposition settings used along the trajectory.
    pub bsa: BsaConfig,
}

impl Default for EvolveSettings {
    fn default() -> Self {
        Self { dt: 1e-3, t_end: 25.0, record_every: 10, stride: 50, monitor_positivity: false, bsa: trajectory_bsa_config() }
    }
}

/// Lighter sampling than the one-shot default: neighbouring time steps are
/// seeded with the previous basis, so far fewer fresh vertices are needed.
pub fn trajectory_bsa_config() -> BsaConfig {
    BsaConfig {
        n_product_vertices: Some(60),
        n_entangled_vertices: Some(60),
        clones_per_support: Some(2),
        max_iterations: 20,
        ..BsaConfig::default()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSettings {
    pub death_tol: f64,
    pub dominance: f64,
    pub warm_seed: bool,
    /// Haar samples for the beta distribution; 0 skips it.
    pub samples: usize,
    /// Relative eigenvalue cutoff defining the range of `rho_ent`.
    pub range_rel_tol: f64,
    pub overlap_starts: usize,
    pub canonical: CanonicalOptions,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        Self {
            death_tol: 1e-3,
            dominance: 0.9,
            warm_seed: true,
            samples: 0,
            range_rel_tol: 1e-6,
            overlap_starts: 16,
            canonical: CanonicalOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// `None`: k-separable for `decompose`, bisep-augmented for `evolve`.
    pub mode: Option<SeparabilityMode>,
    /// Worker threads; `None` uses every available core.
    pub threads: Option<usize>,
    pub bsa: BsaConfig,
    /// Named model overriding `model` (see [`LindbladModel::preset`]).
    pub preset: Option<String>,
    pub model: LindbladModel,
    pub evolve: EvolveSettings,
    pub analysis: AnalysisSettings,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            mode: None,
            threads: None,
            bsa: BsaConfig::default(),
            preset: None,
            model: LindbladModel::default(),
            evolve: EvolveSettings::default(),
            analysis: AnalysisSettings::default(),
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        Self::from_toml(&read_text(path)?).map_err(|source| IoError::Toml { path: path.to_owned(), source })
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// `t, purity, r_0 .. r_{N^2-1}` per stored step.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<(), IoError> {
    let mut w = csv_writer(path)?;
    let n = traj.liouville_vectors.first().map_or(0, |r| r.len());
    let mut header = vec!["t".to_string(), "purity".to_string()];
    header.extend((0..n).map(|i| format!("r{i}")));
    w.write_record(&header)?;
    for k in 0..traj.len() {
        let mut row = vec![num(traj.times[k]), num(traj.purity(k))];
        row.extend(traj.liouville_vectors[k].iter().map(|&x| num(x)));
        w.write_record(&row)?;
    }
    finish(w, path)
}

pub const BETA_COLUMNS: [&str; 8] =
    ["beta_110", "beta_210", "beta_201", "beta_111", "re_beta_101", "im_beta_101", "re_beta_011", "im_beta_011"];

fn beta_fields(t: Option<&Tanglemeter>) -> Vec<String> {
    match t {
        Some(t) => t.real_vector().iter().map(|&x| num(x)).collect(),
        None => vec![String::new(); 8],
    }
}

/// `t, purity, B, rank, lambda_dom` and the tanglemeter columns, left empty
/// when no dominant entangled vector was analyzed.
pub fn write_analysis_csv(path: &Path, records: &[AnalysisRecord]) -> Result<(), IoError> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["t", "purity", "B", "rank", "lambda_dom"];
    header.extend(BETA_COLUMNS);
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![num(r.t), num(r.purity), opt(r.b), r.rank.map(|k| k.to_string()).unwrap_or_default(), opt(r.lambda_dom)];
        row.extend(beta_fields(r.tanglemeter.as_ref()));
        w.write_record(&row)?;
    }
    finish(w, path)
}

/// `weight` plus the tanglemeter columns, one row per sample.
pub fn write_beta_csv(path: &Path, samples: &[BetaSample]) -> Result<(), IoError> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["weight"];
    header.extend(BETA_COLUMNS);
    w.write_record(&header)?;
    for s in samples {
        let mut row = vec![num(s.weight)];
        row.extend(beta_fields(Some(&s.tanglemeter)));
        w.write_record(&row)?;
    }
    finish(w, path)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| IoError::File { path: dir.to_owned(), source })?;
    }
    Ok(csv::Writer::from_path(path)?)
}

fn finish(mut w: csv::Writer<fs::File>, path: &Path) -> Result<(), IoError> {
    w.flush().map_err(|source| IoError::File { path: path.to_owned(), source })
}
