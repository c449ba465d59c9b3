//! The `entsep` command line: argument parsing and the four commands.
//!
//! Exit codes: 0 success, 1 a benchmark suite failed, 2 invalid input or
//! configuration, 3 a computation did not converge (results are still
//! written and flagged).

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::analysis::{
    beta_distribution, canonicalize_322, corner_states, dominant_eigenvector, ghz_like, max_product_overlap, nilpotent_log,
    partition_322, AnalysisError, CanonicalOutcome, EntangledSubspace, OverlapOptions, Tanglemeter,
};
use crate::benchmark::{run_suite, Suite, SuiteReport};
use crate::bsa::{bsa_decompose, verify_decomposition, BsaError, SeparabilityMode};
use crate::dynamics::{
    analyze_trajectory, evolve, initial_vector, AnalysisOptions, DeathInterval, DynamicsError, EvolveOptions,
    GeneratorMatrices, LindbladModel,
};
use crate::io::{
    load_density, write_analysis_csv, write_beta_csv, write_json, write_trajectory_csv, DecompositionRecord,
    DensityMatrixFile, IoError, RunConfig,
};
use crate::states::{PureState, RngStream};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SUITE_FAILED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeFlag {
    KSep,
    BisepAugmented,
    /// Groupings taken from `mode` in the config file.
    Custom,
}

#[derive(Debug, Parser)]
#[command(name = "entsep", version, about = "Best separable approximation of multipartite density matrices")]
pub struct Cli {
    /// TOML run configuration; every key is optional.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub mode: Option<ModeFlag>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Integrator steps between analyzed states.
    #[arg(long, global = true)]
    pub stride: Option<usize>,
    /// Haar samples for the beta distribution.
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Named Lindblad model, e.g. `fig3-like`.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decompose a density matrix file into separable and entangled parts.
    Decompose { input: PathBuf },
    /// Integrate the Lindblad model and decompose along the trajectory.
    Evolve,
    /// Corner states, tanglemeter and beta distribution of an entangled component.
    Analyze {
        input: PathBuf,
        /// Skip the tanglemeter (allows partitions other than 3x2x2).
        #[arg(long)]
        corners_only: bool,
    },
    /// Run the property suites.
    Benchmark {
        /// werner, ppt or rank-bound (default: all).
        #[arg(long)]
        suite: Vec<String>,
    },
}

/// Result of a command: the exit code and the lines meant for stdout.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub code: i32,
    pub lines: Vec<String>,
}

impl Outcome {
    fn input_error(msg: impl std::fmt::Display) -> Self {
        Self { code: EXIT_INPUT, lines: vec![format!("error: {msg}")] }
    }

    fn failure(msg: impl std::fmt::Display) -> Self {
        Self { code: EXIT_NOT_CONVERGED, lines: vec![format!("error: {msg}")] }
    }
}

fn from_io(e: IoError) -> Outcome {
    Outcome::input_error(e)
}

fn from_bsa(e: BsaError) -> Outcome {
    match e {
        BsaError::InvalidConfig(_) | BsaError::InvalidMode(_) | BsaError::Density(_) | BsaError::Liouville(_) => {
            Outcome::input_error(e)
        }
        e => Outcome::failure(e),
    }
}

/// Config file with command-line overrides applied.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, Outcome> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::read(p).map_err(from_io)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    match cli.mode {
        Some(ModeFlag::KSep) => cfg.mode = Some(SeparabilityMode::KSep),
        Some(ModeFlag::BisepAugmented) => cfg.mode = Some(SeparabilityMode::BisepAugmented),
        Some(ModeFlag::Custom) => {
            if !matches!(cfg.mode, Some(SeparabilityMode::Custom(_))) {
                return Err(Outcome::input_error("--mode custom needs `mode = { custom = [...] }` in the config file"));
            }
        }
        None => {}
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(s) = cli.stride {
        cfg.evolve.stride = s;
    }
    if let Some(n) = cli.samples {
        cfg.analysis.samples = n;
    }
    if cli.preset.is_some() {
        cfg.preset = cli.preset.clone();
    }
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Outcome {
    let cfg = match resolve_config(cli) {
        Ok(c) => c,
        Err(o) => return o,
    };
    if let Some(n) = cfg.threads {
        // only the first pool request in a process takes effect
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let res = match &cli.command {
        Command::Decompose { input } => cmd_decompose(input, &cfg),
        Command::Evolve => cmd_evolve(&cfg),
        Command::Analyze { input, corners_only } => cmd_analyze(input, &cfg, !corners_only),
        Command::Benchmark { suite } => cmd_benchmark(&cfg, suite),
    };
    res.unwrap_or_else(|o| o)
}

pub fn cmd_decompose(input: &Path, cfg: &RunConfig) -> Result<Outcome, Outcome> {
    let rho = load_density(input).map_err(from_io)?;
    let mode = cfg.mode.clone().unwrap_or_default();
    let rng = RngStream::new(cfg.seed);
    let d = bsa_decompose(&rho, &mode, &cfg.bsa, &rng).map_err(from_bsa)?;
    let report = verify_decomposition(&rho, &d, &mode, &cfg.bsa, &rng.derive(0x7e5)).map_err(from_bsa)?;
    let record = DecompositionRecord::new(&d, rho.partition(), &mode, &cfg.bsa, report, cfg.seed).map_err(from_bsa)?;
    let path = cfg.out.join("decomposition.json");
    write_json(&path, &record).map_err(from_io)?;
    let mut lines = vec![record.summary()];
    if !d.converged {
        lines.push(format!("warning: decomposition did not converge; result written to {}", path.display()));
    }
    Ok(Outcome { code: if d.converged { EXIT_OK } else { EXIT_NOT_CONVERGED }, lines })
}

#[derive(Serialize)]
struct EvolveSummary<'a> {
    seed: u64,
    preset: Option<&'a str>,
    model: &'a LindbladModel,
    mode: &'a SeparabilityMode,
    dt: f64,
    t_end: f64,
    stride: usize,
    analyzed: usize,
    failures: usize,
    positivity_flags: &'a [usize],
    death_intervals: &'a [DeathInterval],
    last_entangled_t: Option<f64>,
}

pub fn resolve_model(cfg: &RunConfig) -> Result<LindbladModel, Outcome> {
    let model = match &cfg.preset {
        Some(name) => LindbladModel::preset(name).ok_or_else(|| Outcome::input_error(format!("unknown preset `{name}`")))?,
        None => cfg.model.clone(),
    };
    model.validate().map_err(Outcome::input_error)?;
    Ok(model)
}

/// Initial state of the trajectory: the GHZ-like qutrit-qubit-qubit state.
pub fn initial_state() -> PureState {
    ghz_like()
}

pub fn cmd_evolve(cfg: &RunConfig) -> Result<Outcome, Outcome> {
    let model = resolve_model(cfg)?;
    let ev = &cfg.evolve;
    if ev.record_every == 0 || ev.stride == 0 || ev.stride % ev.record_every != 0 {
        return Err(Outcome::input_error(format!(
            "stride ({}) must be a positive multiple of record_every ({})",
            ev.stride, ev.record_every
        )));
    }
    let mode = cfg.mode.clone().unwrap_or(SeparabilityMode::BisepAugmented);
    let dyn_err = |e: DynamicsError| match e {
        DynamicsError::InvalidModel(_) | DynamicsError::InvalidSettings(_) => Outcome::input_error(e),
        e => Outcome::failure(e),
    };
    let mats = GeneratorMatrices::new(&model).map_err(dyn_err)?;
    let r0 = initial_vector(&initial_state()).map_err(dyn_err)?;
    let opts = EvolveOptions { record_every: ev.record_every, monitor_positivity: ev.monitor_positivity };
    let traj = evolve(&r0, &mats, ev.dt, ev.t_end, &opts).map_err(dyn_err)?;
    let a = &cfg.analysis;
    let aopts = AnalysisOptions {
        every: ev.stride / ev.record_every,
        death_tol: a.death_tol,
        dominance: a.dominance,
        warm_seed: a.warm_seed,
        canonical: a.canonical.clone(),
    };
    let analysis = analyze_trajectory(&traj, &partition_322(), &mode, &ev.bsa, &RngStream::new(cfg.seed), &aopts)
        .map_err(dyn_err)?;
    write_trajectory_csv(&cfg.out.join("trajectory.csv"), &traj).map_err(from_io)?;
    write_analysis_csv(&cfg.out.join("analysis.csv"), &analysis.records).map_err(from_io)?;
    if let Some((t, ent)) = &analysis.last_entangled {
        let f = DensityMatrixFile::from_density(ent, Some(format!("rho_ent t={t}")));
        f.write(&cfg.out.join("rho_ent_last.json")).map_err(from_io)?;
    }
    let summary = EvolveSummary {
        seed: cfg.seed,
        preset: cfg.preset.as_deref(),
        model: &model,
        mode: &mode,
        dt: ev.dt,
        t_end: ev.t_end,
        stride: ev.stride,
        analyzed: analysis.records.len(),
        failures: analysis.failures,
        positivity_flags: &traj.positivity_flags,
        death_intervals: &analysis.death_intervals,
        last_entangled_t: analysis.last_entangled.as_ref().map(|(t, _)| *t),
    };
    write_json(&cfg.out.join("evolve.json"), &summary).map_err(from_io)?;
    let mut lines: Vec<String> = analysis
        .death_intervals
        .iter()
        .map(|iv| match iv.revival {
            Some(r) => format!("sudden death: B < {} from t={:.3} to t={:.3}, revival at t={r:.3}", a.death_tol, iv.onset, iv.last_dead),
            None => format!("sudden death: B < {} from t={:.3} to the end (t={:.3})", a.death_tol, iv.onset, iv.last_dead),
        })
        .collect();
    if lines.is_empty() {
        lines.push("no sudden-death interval detected".into());
    }
    let unconverged = analysis.records.iter().filter(|r| r.b.is_some() && !r.converged).count();
    lines.push(format!(
        "analyzed {} states ({} failed, {} not converged)",
        analysis.records.len(),
        analysis.failures,
        unconverged
    ));
    Ok(Outcome { code: if analysis.failures > 0 { EXIT_NOT_CONVERGED } else { EXIT_OK }, lines })
}

#[derive(Serialize)]
struct TanglemeterReport {
    lambda_dom: f64,
    dominant_re: Vec<f64>,
    dominant_im: Vec<f64>,
    canonical: CanonicalOutcome,
    tanglemeter: Tanglemeter,
    invariants: [f64; 6],
}

#[derive(Serialize)]
struct Corner {
    re: Vec<f64>,
    im: Vec<f64>,
    max_product_overlap: f64,
    grouping: Vec<Vec<usize>>,
}

#[derive(Serialize)]
struct CornerReport {
    rank: usize,
    mode: SeparabilityMode,
    corners: Vec<Corner>,
}

#[derive(Serialize)]
struct BetaSummary {
    samples: usize,
    failures: usize,
    failure_fraction: f64,
    mean: Vec<f64>,
    covariance: Vec<f64>,
}

fn split(v: &[crate::numerics::C64]) -> (Vec<f64>, Vec<f64>) {
    (v.iter().map(|z| z.re).collect(), v.iter().map(|z| z.im).collect())
}

pub fn cmd_analyze(input: &Path, cfg: &RunConfig, tanglemeter: bool) -> Result<Outcome, Outcome> {
    let rho = load_density(input).map_err(from_io)?;
    let is_322 = rho.partition().dims() == [3, 2, 2];
    if (tanglemeter || cfg.analysis.samples > 0) && !is_322 {
        return Err(Outcome::input_error(format!(
            "the tanglemeter is defined for a qutrit-qubit-qubit (3x2x2) partition, input has dims {:?}; use --corners-only",
            rho.partition().dims()
        )));
    }
    let an_err = |e: AnalysisError| Outcome::failure(e);
    let mode = cfg.mode.clone().unwrap_or(if is_322 { SeparabilityMode::BisepAugmented } else { SeparabilityMode::KSep });
    let rng = RngStream::new(cfg.seed);
    let mut lines = Vec::new();
    let mut code = EXIT_OK;
    if tanglemeter {
        let (lambda, v) = dominant_eigenvector(&rho);
        let out = canonicalize_322(&v, &cfg.analysis.canonical, &mut rng.derive(1));
        let t = nilpotent_log(&out.state);
        if !out.converged {
            code = EXIT_NOT_CONVERGED;
            lines.push("warning: canonicalization did not converge".into());
        }
        lines.push(format!(
            "lambda_dom={lambda:.4} beta_110={:.4} beta_210={:.4} beta_201={:.4} beta_111={:.4} |beta_101|={:.4} |beta_011|={:.4}",
            t.beta_110,
            t.beta_210,
            t.beta_201,
            t.beta_111,
            t.beta_101.norm(),
            t.beta_011.norm()
        ));
        let (dominant_re, dominant_im) = split(v.amplitudes());
        let report = TanglemeterReport { lambda_dom: lambda, dominant_re, dominant_im, canonical: out, invariants: t.invariants(), tanglemeter: t };
        write_json(&cfg.out.join("tanglemeter.json"), &report).map_err(from_io)?;
    }
    let subspace = EntangledSubspace::from_density(&rho, cfg.analysis.range_rel_tol);
    let oo = OverlapOptions { n_starts: cfg.analysis.overlap_starts, ..OverlapOptions::default() };
    let mut crng = rng.derive(2);
    let corners = corner_states(&subspace, &mode, &oo, &mut crng).map_err(an_err)?;
    let mut list = Vec::new();
    for c in &corners {
        let one = EntangledSubspace::new(rho.partition().clone(), vec![c.clone()]).map_err(an_err)?;
        let best = max_product_overlap(&one, &mode, &oo, &mut crng).map_err(an_err)?;
        let (re, im) = split(c.amplitudes());
        list.push(Corner { re, im, max_product_overlap: best.overlap, grouping: best.grouping.groups });
    }
    lines.push(format!("rank={} corners={}", subspace.dim(), list.len()));
    write_json(&cfg.out.join("corners.json"), &CornerReport { rank: subspace.dim(), mode, corners: list }).map_err(from_io)?;
    if cfg.analysis.samples > 0 {
        let dist =
            beta_distribution(&rho, cfg.analysis.samples, &cfg.analysis.canonical, &mut rng.derive(3)).map_err(an_err)?;
        write_beta_csv(&cfg.out.join("beta.csv"), &dist.samples).map_err(from_io)?;
        let summary = BetaSummary {
            samples: dist.samples.len(),
            failures: dist.failures,
            failure_fraction: dist.failure_fraction,
            mean: dist.mean,
            covariance: dist.covariance,
        };
        write_json(&cfg.out.join("beta_summary.json"), &summary).map_err(from_io)?;
        lines.push(format!("beta samples={} failures={}", summary.samples, summary.failures));
    }
    Ok(Outcome { code, lines })
}

pub fn cmd_benchmark(cfg: &RunConfig, names: &[String]) -> Result<Outcome, Outcome> {
    let suites = if names.is_empty() {
        Suite::ALL.to_vec()
    } else {
        names
            .iter()
            .map(|n| Suite::parse(n).ok_or_else(|| Outcome::input_error(format!("unknown suite `{n}` (werner, ppt, rank-bound)"))))
            .collect::<Result<Vec<_>, _>>()?
    };
    let rng = RngStream::new(cfg.seed);
    let mut reports: Vec<SuiteReport> = Vec::new();
    for s in suites {
        reports.push(run_suite(s, &cfg.bsa, &rng).map_err(from_bsa)?);
    }
    write_json(&cfg.out.join("benchmark.json"), &reports).map_err(from_io)?;
    let mut lines = vec![format!("{:<12} {:<32} {:>12} {:>12}  result", "suite", "case", "measured", "expected")];
    for r in &reports {
        for row in &r.rows {
            lines.push(format!(
                "{:<12} {:<32} {:>12.6} {:>12.6}  {}",
                r.suite.name(),
                row.case,
                row.measured,
                row.expected,
                if row.passed { "pass" } else { "FAIL" }
            ));
        }
    }
    for r in &reports {
        lines.push(format!("{}: {}/{} passed", r.suite.name(), r.passed, r.passed + r.failed));
    }
    let ok = reports.iter().all(|r| r.ok());
    Ok(Outcome { code: if ok { EXIT_OK } else { EXIT_SUITE_FAILED }, lines })
}
