//! End-to-end acceptance checks, one test per criterion. Each prints a
//! single `criterion N: PASS|FAIL ...` line before asserting.

use std::sync::Arc;
use std::time::Instant;

use entsep::analysis::{
    canonicalize_322, ghz_like, nilpotent_log, partition_322, random_local_unitary, CanonicalOptions,
};
use entsep::benchmark::{ppt_case, rank_case, werner_oracle, werner_ppt_threshold, SEPARABLE_B, WERNER_POINTS};
use entsep::bsa::{
    bsa_decompose, ppt_check, rank_bound, verify_decomposition, BsaConfig, BsaDecomposition, SeparabilityMode,
};
use entsep::cli::{cmd_analyze, cmd_evolve, EXIT_OK};
use entsep::density::{random_mixture, DensityMatrix};
use entsep::dynamics::{
    analyze_trajectory, evolve, initial_vector, AnalysisOptions, EvolveOptions, GeneratorMatrices, LindbladModel,
};
use entsep::io::{trajectory_bsa_config, RunConfig};
use entsep::liouville::{Grouping, PartitionSpec};
use entsep::lp::{lp_solve, LpOptions, LpProblem};
use entsep::states::{haar_random_pure, random_product_state, ProductLayout, RngStream};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: usize, ok: bool, detail: impl std::fmt::Display) {
    println!("criterion {n}: {} {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {n} failed: {detail}");
}

/// Per-run invariants; `None` when they hold, otherwise what broke.
fn invariant_violation(rho: &DensityMatrix, d: &BsaDecomposition, mode: &SeparabilityMode, cfg: &BsaConfig) -> Option<String> {
    let r = verify_decomposition(rho, d, mode, cfg, &RngStream::new(99)).ok()?;
    let n = rho.dim();
    if r.reconstruction_residual >= 1e-7 {
        return Some(format!("residual {:e}", r.reconstruction_residual));
    }
    if r.weight_sum_residual >= 1e-8 {
        return Some(format!("weight sum off by {:e}", r.weight_sum_residual));
    }
    if d.support_size() > n * n {
        return Some(format!("support {} > {}", d.support_size(), n * n));
    }
    if d.history.windows(2).any(|w| w[1] > w[0] + 1e-12) {
        return Some(format!("B_t increased: {:?}", d.history));
    }
    None
}

#[test]
fn criterion_1_werner_sweep() {
    let threshold = werner_ppt_threshold();
    let cfg = BsaConfig::default();
    let mut worst: f64 = 0.0;
    let mut slowest: f64 = 0.0;
    let mut broken = Vec::new();
    for (k, &p) in WERNER_POINTS.iter().enumerate() {
        let rho = DensityMatrix::werner(p).unwrap();
        let t0 = Instant::now();
        let d = bsa_decompose(&rho, &SeparabilityMode::KSep, &cfg, &RngStream::new(k as u64)).unwrap();
        slowest = slowest.max(t0.elapsed().as_secs_f64());
        worst = worst.max((d.b - werner_oracle(p, threshold)).abs());
        broken.extend(invariant_violation(&rho, &d, &SeparabilityMode::KSep, &cfg));
    }
    report(
        1,
        worst <= 5e-3 && slowest <= 60.0 && broken.is_empty(),
        format!("max |B - oracle| = {worst:.2e}, slowest point {slowest:.2}s, invariant violations {broken:?}"),
    );
}

#[test]
fn criterion_2_two_qubit_entangled_part_is_pure() {
    let cfg = BsaConfig::default();
    let rng = RngStream::new(2);
    let mut violations = 0;
    let mut entangled = 0;
    for k in 0..200 {
        let rho = rank_case(k, &rng);
        let d = bsa_decompose(&rho, &SeparabilityMode::KSep, &cfg, &rng.derive2(k as u64, 1)).unwrap();
        if d.b > SEPARABLE_B {
            entangled += 1;
            let ev = d.rho_ent.as_ref().unwrap().eigen().eigenvalues;
            if ev[1] >= 1e-6 * ev[0] {
                violations += 1;
            }
        }
    }
    report(2, violations == 0, format!("{violations} violations among {entangled} entangled of 200"));
}

#[test]
fn criterion_3_rank_bound_arithmetic() {
    let p2 = PartitionSpec::new(vec![2, 2]).unwrap();
    let p322 = partition_322();
    let got = [
        rank_bound(&SeparabilityMode::KSep, &p2).unwrap(),
        rank_bound(&SeparabilityMode::KSep, &p322).unwrap(),
        rank_bound(&SeparabilityMode::BisepAugmented, &p322).unwrap(),
    ];
    report(3, got == [1, 7, 5], format!("{got:?}"));
}

#[test]
fn criterion_4_ppt_consistency() {
    let cfg = BsaConfig::default();
    let rng = RngStream::new(4);
    let mut disagreements = Vec::new();
    let mut ppt = 0;
    for k in 0..100 {
        let rho = ppt_case(k, &rng);
        let cut = Grouping::new(vec![vec![0], vec![1]], rho.partition()).unwrap();
        let rep = ppt_check(&rho, &cut).unwrap();
        ppt += rep.is_ppt as usize;
        let d = bsa_decompose(&rho, &SeparabilityMode::KSep, &cfg, &rng.derive2(k as u64, 1)).unwrap();
        if (d.b < SEPARABLE_B) != rep.is_ppt {
            disagreements.push(format!("case {k}: B={:.2e} min_pt={:.2e}", d.b, rep.min_pt_eigenvalue));
        }
    }
    report(4, disagreements.is_empty(), format!("{} disagreements of 100 ({ppt} PPT) {disagreements:?}", disagreements.len()));
}

/// Fixed regression set: rank-2 and rank-3 mixtures on 2x2 and 2x3.
fn regression_set() -> Vec<DensityMatrix> {
    (0..10)
        .map(|k| {
            let dims = if k < 5 { vec![2, 2] } else { vec![2, 3] };
            let p = PartitionSpec::new(dims).unwrap();
            random_mixture(&p, 2 + k % 2, &mut RngStream::new(500 + k as u64))
        })
        .collect()
}

#[test]
fn criterion_5_invariants_and_seed_agreement() {
    let cfg = BsaConfig::default();
    let mode = SeparabilityMode::KSep;
    let mut worst_b: f64 = 0.0;
    let mut worst_ent: f64 = 0.0;
    let mut problems = Vec::new();
    for (k, rho) in regression_set().iter().enumerate() {
        let a = bsa_decompose(rho, &mode, &cfg, &RngStream::new(1)).unwrap();
        let b = bsa_decompose(rho, &mode, &cfg, &RngStream::new(2)).unwrap();
        for d in [&a, &b] {
            if let Some(v) = invariant_violation(rho, d, &mode, &cfg) {
                problems.push(format!("case {k}: {v}"));
            }
        }
        worst_b = worst_b.max((a.b - b.b).abs());
        match (&a.rho_ent, &b.rho_ent) {
            (Some(x), Some(y)) if a.b.min(b.b) > SEPARABLE_B => {
                worst_ent = worst_ent.max((x.matrix() - y.matrix()).frobenius_norm());
            }
            (None, None) => {}
            _ if a.b.max(b.b) <= SEPARABLE_B => {}
            _ => problems.push(format!("case {k}: entangled part present for one seed only")),
        }
    }
    report(
        5,
        worst_b < 2e-6 && worst_ent < 1e-2 && problems.is_empty(),
        format!("max |dB| = {worst_b:.2e}, max |d rho_ent|_F = {worst_ent:.2e}, problems {problems:?}"),
    );
}

fn random_bounded(rng: &mut ChaCha8Rng, m: usize, n: usize) -> LpProblem {
    let mut a = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            a[i * n + j] = if i == m - 1 { 1.0 } else { rng.random_range(-1.0..1.0) };
        }
    }
    let x0: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let b = (0..m).map(|i| (0..n).map(|j| a[i * n + j] * x0[j]).sum()).collect();
    let c = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    LpProblem::new(m, n, a, b, c).unwrap()
}

/// Minimum objective over all basic feasible solutions (LU solves of every column subset).
fn enumerate(p: &LpProblem) -> Option<f64> {
    let (m, n) = (p.n_rows(), p.n_cols());
    let rhs = DVector::from_column_slice(p.rhs());
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != m {
            continue;
        }
        let cols: Vec<usize> = (0..n).filter(|j| mask & (1 << j) != 0).collect();
        let bm = DMatrix::from_fn(m, m, |i, k| p.entry(i, cols[k]));
        let lu = bm.lu();
        if lu.determinant().abs() < 1e-12 {
            continue;
        }
        let x = lu.solve(&rhs)?;
        if x.iter().all(|&v| v >= -1e-12) {
            let obj: f64 = cols.iter().zip(x.iter()).map(|(&j, v)| p.objective()[j] * v).sum();
            best = Some(best.map_or(obj, |b: f64| b.min(obj)));
        }
    }
    best
}

#[test]
fn criterion_6_lp_solver() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let opts = LpOptions::default();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let m = rng.random_range(1..=4);
        let n = rng.random_range(m..=8);
        let p = random_bounded(&mut rng, m, n);
        let s = lp_solve(&p, &opts).unwrap();
        let oracle = enumerate(&p).unwrap();
        worst = worst.max(if s.is_optimal() { (s.objective_value - oracle).abs() } else { f64::INFINITY });
    }
    let big = random_bounded(&mut rng, 145, 2000);
    let t0 = Instant::now();
    let s = lp_solve(&big, &opts).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    report(
        6,
        worst <= 1e-9 && s.is_optimal() && secs < 10.0,
        format!("max |lp - enumeration| = {worst:.2e}, 145x2000 in {secs:.2}s"),
    );
}

#[test]
fn criterion_7_tanglemeter() {
    let opts = CanonicalOptions::default();
    let layout = Arc::new(ProductLayout::full_split(partition_322()));
    let mut rng = RngStream::new(7);
    let mut product_max: f64 = 0.0;
    for i in 0..50 {
        let p = random_product_state(&layout, &mut rng);
        let out = canonicalize_322(p.assembled(), &opts, &mut RngStream::new(100 + i));
        product_max = product_max.max(nilpotent_log(&out.state).max_abs());
    }
    let ghz = nilpotent_log(&canonicalize_322(&ghz_like(), &opts, &mut RngStream::new(1)).state);
    let mut compared = 0;
    let mut lu_worst: f64 = 0.0;
    for i in 0..50 {
        let psi = haar_random_pure(12, &mut rng);
        let u = random_local_unitary(&mut rng);
        let a = canonicalize_322(&psi, &opts, &mut RngStream::new(1000 + i));
        let b = canonicalize_322(&psi.apply(&u), &opts, &mut RngStream::new(2000 + i));
        if !(a.converged && b.converged) || a.degenerate_reference || b.degenerate_reference {
            continue;
        }
        compared += 1;
        let (x, y) = (nilpotent_log(&a.state).invariants(), nilpotent_log(&b.state).invariants());
        for k in 0..6 {
            lu_worst = lu_worst.max((x[k] - y[k]).abs());
        }
    }
    report(
        7,
        product_max < 1e-6 && (ghz.beta_111 - 1.0).abs() < 1e-4 && lu_worst < 1e-5 && compared > 0,
        format!(
            "products max |beta| = {product_max:.1e}, GHZ-like beta_111 = {:.6}, LU invariants max dev {lu_worst:.1e} over {compared} non-degenerate states",
            ghz.beta_111
        ),
    );
}

#[test]
fn criterion_8_dynamics() {
    let mut rng = RngStream::new(8);
    let mut u = |lo: f64, hi: f64| lo + (hi - lo) * rng.uniform();
    let psd = {
        let a: Vec<f64> = (0..9).map(|_| u(-0.2, 0.2)).collect();
        let mut c = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                c[i][j] = (0..3).map(|k| a[i * 3 + k] * a[j * 3 + k]).sum();
            }
        }
        c
    };
    let noisy = LindbladModel { f: [0.3, -0.5, 0.2], f4: 0.8, f6: 0.6, eps1: 0.4, eps2: -0.7, noise_cov: psd };
    let r0 = initial_vector(&ghz_like()).unwrap();
    let sparse = EvolveOptions { record_every: 10, monitor_positivity: false };

    let g = GeneratorMatrices::new(&noisy).unwrap();
    let traj = evolve(&r0, &g, 1e-2, 10.0, &sparse).unwrap();
    let trace_dev = traj.liouville_vectors.iter().map(|r| (r[0] - 1.0 / 12f64.sqrt()).abs()).fold(0.0, f64::max);

    let unitary = GeneratorMatrices::new(&LindbladModel { noise_cov: [[0.0; 3]; 3], ..noisy.clone() }).unwrap();
    let traj = evolve(&r0, &unitary, 1e-3, 10.0, &EvolveOptions { record_every: 100, ..sparse.clone() }).unwrap();
    let purity_dev = (0..traj.len()).map(|k| (traj.purity(k) - 1.0).abs()).fold(0.0, f64::max);

    let dephasing = GeneratorMatrices::new(&LindbladModel { noise_cov: psd, ..LindbladModel::default() }).unwrap();
    let traj = evolve(&r0, &dephasing, 1e-2, 20.0, &EvolveOptions { record_every: 5, ..sparse.clone() }).unwrap();
    let monotone = (1..traj.len()).all(|k| traj.purity(k) <= traj.purity(k - 1) + 1e-12);

    let exact = {
        let a = g.generator() * 2.0;
        let mut term = DVector::from_column_slice(&r0);
        let mut sum = term.clone();
        for k in 1..80 {
            term = &a * term / k as f64;
            sum += &term;
        }
        sum
    };
    let end = |dt: f64| {
        let t = evolve(&r0, &g, dt, 2.0, &EvolveOptions { record_every: 1_000_000, ..sparse.clone() }).unwrap();
        DVector::from_column_slice(t.liouville_vectors.last().unwrap())
    };
    let ratio = (end(0.1) - &exact).norm() / (end(0.05) - &exact).norm();

    let preset = GeneratorMatrices::new(&LindbladModel::preset("fig3-like").unwrap()).unwrap();
    let traj = evolve(&r0, &preset, 1e-3, 25.0, &EvolveOptions { record_every: 50, ..sparse }).unwrap();
    let analysis = analyze_trajectory(
        &traj,
        &partition_322(),
        &SeparabilityMode::BisepAugmented,
        &trajectory_bsa_config(),
        &RngStream::new(1),
        &AnalysisOptions::default(),
    )
    .unwrap();
    let revivals: Vec<_> = analysis.death_intervals.iter().filter(|iv| iv.revival.is_some()).collect();
    report(
        8,
        trace_dev < 1e-9 && purity_dev < 1e-8 && monotone && (8.0..=32.0).contains(&ratio) && !revivals.is_empty(),
        format!(
            "trace dev {trace_dev:.1e}, unitary purity dev {purity_dev:.1e}, dephasing monotone {monotone}, RK4 ratio {ratio:.2}, \
             preset death intervals with revival: {} (first {:?})",
            revivals.len(),
            revivals.first()
        ),
    );
}

#[test]
fn criterion_9_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig { preset: Some("fig3-like".into()), out: dir.path().to_owned(), ..RunConfig::default() };
    cfg.evolve.dt = 1e-3;
    cfg.evolve.t_end = 25.0;
    cfg.evolve.stride = 50;
    cfg.analysis.samples = 64;
    let t0 = Instant::now();
    let evolved = cmd_evolve(&cfg);
    let analyzed = cmd_analyze(&dir.path().join("rho_ent_last.json"), &cfg, true);
    let minutes = t0.elapsed().as_secs_f64() / 60.0;
    let codes_ok = matches!(&evolved, Ok(o) if o.code == EXIT_OK) && matches!(&analyzed, Ok(o) if o.code == EXIT_OK);
    let status = |o: &Result<entsep::cli::Outcome, entsep::cli::Outcome>| match o {
        Ok(o) | Err(o) if o.code != EXIT_OK => format!(" [code {}: {}]", o.code, o.lines.join("; ")),
        _ => String::new(),
    };
    let codes_note = status(&evolved) + &status(&analyzed);

    let mut rows = 0;
    let mut bad = Vec::new();
    let mut r = csv::Reader::from_path(dir.path().join("analysis.csv")).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    for rec in r.records() {
        let rec = rec.unwrap();
        rows += 1;
        let b: Option<f64> = rec[2].parse().ok();
        let rank: Option<usize> = rec[3].parse().ok();
        let ok = rec.len() == header.len()
            && b.is_some_and(|b| (0.0..=1.0).contains(&b))
            && rank.is_some_and(|k| k <= 5);
        if !ok {
            bad.push(rec.iter().take(5).collect::<Vec<_>>().join(","));
        }
    }
    let traj_rows = csv::Reader::from_path(dir.path().join("trajectory.csv")).unwrap().records().count();
    let produced = ["tanglemeter.json", "corners.json", "beta.csv"].iter().all(|f| dir.path().join(f).exists());
    report(
        9,
        codes_ok && minutes < 30.0 && rows == 501 && traj_rows == 2501 && bad.is_empty() && produced,
        format!(
            "{minutes:.2} min, {rows} analyzed rows, {traj_rows} trajectory rows, exit codes ok {codes_ok}{codes_note}, analyze outputs {produced}, bad rows {bad:?}"
        ),
    );
}
