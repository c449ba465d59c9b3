//! Python bindings: decomposition, Werner oracle and the qutrit-qubit-qubit
//! tanglemeter. Matrices cross the boundary as `(re, im)` pairs of nested lists.

use entsep::analysis::{canonicalize_322, ghz_like, nilpotent_log, CanonicalOptions};
use entsep::benchmark::{werner_oracle as oracle, werner_ppt_threshold};
use entsep::bsa::{bsa_decompose, BsaConfig, SeparabilityMode};
use entsep::density::DensityMatrix;
use entsep::io::DensityMatrixFile;
use entsep::numerics::C64;
use entsep::states::{PureState, RngStream};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

type Planes = (Vec<Vec<f64>>, Vec<Vec<f64>>);

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_mode(mode: &str) -> PyResult<SeparabilityMode> {
    match mode {
        "k-sep" => Ok(SeparabilityMode::KSep),
        "bisep-augmented" => Ok(SeparabilityMode::BisepAugmented),
        other => Err(value_err(format!("unknown mode {other:?} (expected k-sep or bisep-augmented)"))),
    }
}

fn planes(rho: &DensityMatrix) -> Planes {
    rho.matrix().re_im()
}

/// Best separable approximation of `rho = re + i im` over subsystems `dims`.
#[pyfunction]
#[pyo3(signature = (dims, re, im, mode = "k-sep", seed = 1))]
fn decompose<'py>(
    py: Python<'py>,
    dims: Vec<usize>,
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
    mode: &str,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let rho = DensityMatrixFile { dims, matrix_re: re, matrix_im: im, label: None }.to_density().map_err(value_err)?;
    let mode = parse_mode(mode)?;
    let cfg = BsaConfig::default();
    let d = py
        .allow_threads(|| bsa_decompose(&rho, &mode, &cfg, &RngStream::new(seed)))
        .map_err(value_err)?;
    let out = PyDict::new(py);
    out.set_item("b", d.b)?;
    out.set_item("entangled_rank", d.entangled_rank(cfg.rank_rel_tol))?;
    out.set_item("iterations", d.iterations_used)?;
    out.set_item("converged", d.converged)?;
    out.set_item("history", d.history.clone())?;
    out.set_item("dual_gap", d.dual_gap)?;
    out.set_item("rho_sep", d.rho_sep.as_ref().map(planes))?;
    out.set_item("rho_ent", d.rho_ent.as_ref().map(planes))?;
    Ok(out)
}

/// Two-qubit Werner state `p |psi-><psi-| + (1 - p) I/4`.
#[pyfunction]
fn werner(p: f64) -> PyResult<Planes> {
    DensityMatrix::werner(p).map(|r| planes(&r)).map_err(value_err)
}

/// Exact entangled weight of the Werner state.
#[pyfunction]
fn werner_oracle(p: f64) -> f64 {
    oracle(p, werner_ppt_threshold())
}

/// `(re, im)` amplitudes of `(|000> + |111>)/sqrt(2)` in the 3x2x2 basis.
#[pyfunction]
fn ghz() -> (Vec<f64>, Vec<f64>) {
    let psi = ghz_like();
    psi.amplitudes().iter().map(|z| (z.re, z.im)).unzip()
}

/// Canonical form and nilpotent-log coefficients of a 12-component pure state.
#[pyfunction]
#[pyo3(signature = (re, im, seed = 1))]
fn tanglemeter<'py>(py: Python<'py>, re: Vec<f64>, im: Vec<f64>, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    if re.len() != 12 || im.len() != 12 {
        return Err(value_err("a 3x2x2 state has 12 amplitudes"));
    }
    let amps: Vec<C64> = re.iter().zip(&im).map(|(&a, &b)| C64::new(a, b)).collect();
    let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(value_err("zero vector"));
    }
    let psi = PureState::new(amps.iter().map(|z| z / norm).collect()).map_err(value_err)?;
    let out = canonicalize_322(&psi, &CanonicalOptions::default(), &mut RngStream::new(seed));
    let t = nilpotent_log(&out.state);
    let d = PyDict::new(py);
    d.set_item("converged", out.converged)?;
    d.set_item("canonical_re", out.vector.iter().map(|z| z.re).collect::<Vec<_>>())?;
    d.set_item("canonical_im", out.vector.iter().map(|z| z.im).collect::<Vec<_>>())?;
    d.set_item("beta", t.real_vector().to_vec())?;
    d.set_item("invariants", t.invariants().to_vec())?;
    Ok(d)
}

#[pymodule]
#[pyo3(name = "entsep")]
fn entsep_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(decompose, m)?)?;
    m.add_function(wrap_pyfunction!(werner, m)?)?;
    m.add_function(wrap_pyfunction!(werner_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(ghz, m)?)?;
    m.add_function(wrap_pyfunction!(tanglemeter, m)?)?;
    Ok(())
}
