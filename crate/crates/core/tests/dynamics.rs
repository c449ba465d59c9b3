use entsep::analysis::{ghz_like, partition_322};
use entsep::bsa::{BsaConfig, SeparabilityMode};
use entsep::dynamics::*;
use entsep::liouville::{GeneratorBasis, PartitionSpec};
use entsep::numerics::{ComplexMatrix, C64};
use entsep::states::{haar_random_pure, RngStream};
use nalgebra::DMatrix;

fn random_model(rng: &mut RngStream, with_noise: bool) -> LindbladModel {
    let mut u = |lo: f64, hi: f64| lo + (hi - lo) * rng.uniform();
    let f = [u(-1.0, 1.0), u(-1.0, 1.0), u(-1.0, 1.0)];
    let (f4, f6, eps1, eps2) = (u(0.0, 1.5), u(0.0, 1.5), u(-1.0, 1.0), u(-1.0, 1.0));
    let mut noise_cov = [[0.0; 3]; 3];
    if with_noise {
        // C = A A^T is symmetric positive semidefinite
        let a: Vec<f64> = (0..9).map(|_| u(-0.2, 0.2)).collect();
        for i in 0..3 {
            for j in 0..3 {
                noise_cov[i][j] = (0..3).map(|k| a[i * 3 + k] * a[j * 3 + k]).sum();
            }
        }
    }
    LindbladModel { f, f4, f6, eps1, eps2, noise_cov }
}

#[test]
fn hamiltonian_examples() {
    let h = build_hamiltonian(&LindbladModel { eps1: 1.0, ..Default::default() });
    // I (x) sigma_z (x) I: +1 when the first qubit index is 0, -1 otherwise
    for i in 0..12 {
        let expect = if (i / 2) % 2 == 0 { 1.0 } else { -1.0 };
        assert_eq!(h[(i, i)], C64::new(expect, 0.0));
    }
    assert!((h.frobenius_norm().powi(2) - 12.0).abs() < 1e-12);

    let h = build_hamiltonian(&LindbladModel { f4: 1.0, ..Default::default() });
    // lambda_4 couples qutrit levels 0 and 2, sigma_x flips the first qubit
    assert_eq!(h[(0, 2 * 4 + 2)], C64::new(1.0, 0.0));
    assert_eq!(h[(0, 2 * 4)], C64::new(0.0, 0.0));
    assert!(h.hermitian_deviation().0 < 1e-15);
    assert!(h.trace().norm() < 1e-15);
}

#[test]
fn drift_is_antisymmetric_and_relaxation_is_psd() {
    let mut rng = RngStream::new(1);
    for _ in 0..3 {
        let m = random_model(&mut rng, true);
        let g = GeneratorMatrices::new(&m).unwrap();
        let skew = &g.drift + g.drift.transpose();
        assert!(skew.amax() < 1e-12);
        assert!((&g.relaxation - g.relaxation.transpose()).amax() < 1e-12);
        let eig = g.relaxation.clone().symmetric_eigen();
        assert!(eig.eigenvalues.min() > -1e-12);
        for k in 0..144 {
            for mat in [&g.drift, &g.relaxation] {
                assert!(mat[(0, k)].abs() < 1e-12 && mat[(k, 0)].abs() < 1e-12);
            }
        }
    }
}

#[test]
fn relaxation_annihilates_the_identity_and_matches_direct_double_commutators() {
    let m = LindbladModel { noise_cov: [[1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]], ..Default::default() };
    let g = GeneratorMatrices::new(&m).unwrap();
    let basis = GeneratorBasis::shared(12).unwrap();
    let id = basis.vectorize_matrix(&ComplexMatrix::identity(12).scale(1.0 / 12.0)).unwrap().components;
    let out = &g.relaxation * nalgebra::DVector::from_column_slice(&id);
    assert!(out.amax() < 1e-14);

    // R r against sum C_ij [l_i, [l_j, rho]] computed on the matrix directly
    let mut rng = RngStream::new(2);
    let model = random_model(&mut rng, true);
    let g = GeneratorMatrices::new(&model).unwrap();
    let psi = haar_random_pure(12, &mut rng);
    let rho = psi.projector();
    let l: Vec<ComplexMatrix> = (1..=3)
        .map(|i| {
            let lam = entsep::liouville::gell_mann(i);
            let id2 = ComplexMatrix::identity(2);
            entsep::numerics::kron(&entsep::numerics::kron(&lam, &id2), &id2)
        })
        .collect();
    let mut direct = ComplexMatrix::zeros(12, 12);
    for i in 0..3 {
        for j in 0..3 {
            direct.add_scaled(C64::new(model.noise_cov[i][j], 0.0), &l[i].commutator(&l[j].commutator(&rho)));
        }
    }
    let r = basis.vectorize_matrix(&rho).unwrap().components;
    let via = &g.relaxation * nalgebra::DVector::from_column_slice(&r);
    let want = basis.vectorize_matrix(&direct).unwrap().components;
    for (a, b) in via.iter().zip(&want) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn trace_component_is_constant() {
    let mut rng = RngStream::new(3);
    let g = GeneratorMatrices::new(&random_model(&mut rng, true)).unwrap();
    let r0 = initial_vector(&ghz_like()).unwrap();
    let traj = evolve(&r0, &g, 1e-2, 5.0, &EvolveOptions { record_every: 10, monitor_positivity: true }).unwrap();
    for r in &traj.liouville_vectors {
        assert!((r[0] - 1.0 / 12f64.sqrt()).abs() < 1e-9);
    }
    assert!(traj.positivity_flags.is_empty());
    assert_eq!(*traj.steps.last().unwrap(), 500);
}

#[test]
fn unitary_evolution_conserves_purity() {
    let mut rng = RngStream::new(4);
    let g = GeneratorMatrices::new(&random_model(&mut rng, false)).unwrap();
    let r0 = initial_vector(&haar_random_pure(12, &mut rng)).unwrap();
    let traj = evolve(&r0, &g, 1e-3, 10.0, &EvolveOptions { record_every: 100, ..Default::default() }).unwrap();
    for k in 0..traj.len() {
        assert!((traj.purity(k) - 1.0).abs() < 1e-8, "t = {}: {}", traj.times[k], traj.purity(k));
    }
}

#[test]
fn pure_dephasing_never_increases_purity() {
    let mut rng = RngStream::new(5);
    let mut m = random_model(&mut rng, true);
    m.f = [0.0; 3];
    m.f4 = 0.0;
    m.f6 = 0.0;
    m.eps1 = 0.0;
    m.eps2 = 0.0;
    let g = GeneratorMatrices::new(&m).unwrap();
    let r0 = initial_vector(&haar_random_pure(12, &mut rng)).unwrap();
    let traj = evolve(&r0, &g, 1e-2, 20.0, &EvolveOptions { record_every: 5, ..Default::default() }).unwrap();
    for k in 1..traj.len() {
        assert!(traj.purity(k) <= traj.purity(k - 1) + 1e-12);
    }
    assert!(traj.purity(traj.len() - 1) < 1.0 - 1e-3);
}

#[test]
fn rk4_error_shrinks_sixteenfold_when_halving_the_step() {
    let mut rng = RngStream::new(6);
    let g = GeneratorMatrices::new(&random_model(&mut rng, true)).unwrap();
    let r0 = initial_vector(&ghz_like()).unwrap();
    // exact solution through the matrix exponential of the generator
    let a: DMatrix<f64> = g.generator() * 2.0;
    let exact = {
        let mut term = nalgebra::DVector::from_column_slice(&r0);
        let mut sum = term.clone();
        for k in 1..80 {
            term = &a * term / k as f64;
            sum += &term;
        }
        sum
    };
    let end = |dt: f64| {
        let t = evolve(&r0, &g, dt, 2.0, &EvolveOptions { record_every: 1_000_000, ..Default::default() }).unwrap();
        nalgebra::DVector::from_column_slice(t.liouville_vectors.last().unwrap())
    };
    let e1 = (end(0.1) - &exact).norm();
    let e2 = (end(0.05) - &exact).norm();
    let ratio = e1 / e2;
    assert!((8.0..=32.0).contains(&ratio), "ratio {ratio} ({e1:e} / {e2:e})");
}

#[test]
fn model_validation() {
    let mut m = LindbladModel::default();
    m.noise_cov[0][1] = 0.1;
    assert!(matches!(m.validate(), Err(DynamicsError::InvalidModel(_))));
    let mut m = LindbladModel::default();
    m.noise_cov[0][0] = -0.1;
    assert!(matches!(m.validate(), Err(DynamicsError::InvalidModel(_))));
    assert!(LindbladModel::preset("fig3-like").unwrap().validate().is_ok());
    assert!(LindbladModel::preset("nope").is_none());
    let g = GeneratorMatrices::new(&LindbladModel::default()).unwrap();
    assert!(matches!(evolve(&[0.0; 3], &g, 0.1, 1.0, &EvolveOptions::default()), Err(DynamicsError::InvalidSettings(_))));
    let r0 = initial_vector(&ghz_like()).unwrap();
    assert!(matches!(evolve(&r0, &g, 0.0, 1.0, &EvolveOptions::default()), Err(DynamicsError::InvalidSettings(_))));
}

#[test]
fn runaway_integration_is_reported() {
    let m = LindbladModel { noise_cov: [[50.0, 0.0, 0.0], [0.0, 50.0, 0.0], [0.0, 0.0, 50.0]], ..Default::default() };
    let g = GeneratorMatrices::new(&m).unwrap();
    let r0 = initial_vector(&ghz_like()).unwrap();
    assert!(matches!(evolve(&r0, &g, 1.0, 2000.0, &EvolveOptions::default()), Err(DynamicsError::NonFinite(_))));
}

fn record(t: f64, b: Option<f64>) -> AnalysisRecord {
    AnalysisRecord {
        t,
        purity: 1.0,
        b,
        rank: None,
        lambda_dom: None,
        tanglemeter: None,
        iterations: 0,
        converged: true,
        error: None,
    }
}

#[test]
fn death_interval_detection() {
    let bs = [0.3, 0.1, 0.0, 0.0005, 0.0, 0.2, 0.0, 0.4];
    let recs: Vec<AnalysisRecord> = bs.iter().enumerate().map(|(i, &b)| record(i as f64, Some(b))).collect();
    let iv = death_intervals(&recs, 1e-3);
    assert_eq!(iv, vec![
        DeathInterval { onset: 2.0, last_dead: 4.0, revival: Some(5.0) },
        DeathInterval { onset: 6.0, last_dead: 6.0, revival: Some(7.0) },
    ]);
    // dead from the start is not a death; an unrevived tail stays open; failures are skipped
    let recs = vec![record(0.0, Some(0.0)), record(1.0, Some(0.5)), record(2.0, None), record(3.0, Some(0.0))];
    assert_eq!(death_intervals(&recs, 1e-3), vec![DeathInterval { onset: 3.0, last_dead: 3.0, revival: None }]);
}

#[test]
fn warm_and_cold_seeds_agree_along_a_trajectory() {
    // a two-qubit path through Werner states crossing the separability threshold
    let part = PartitionSpec::new(vec![2, 2]).unwrap();
    let basis = GeneratorBasis::shared(4).unwrap();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let z = C64::new(0.0, 0.0);
    let singlet = entsep::states::PureState::new(vec![z, C64::new(s, 0.0), C64::new(-s, 0.0), z]).unwrap();
    let ps = [0.9, 0.7, 0.5, 0.3, 0.2, 0.45];
    let vecs: Vec<Vec<f64>> = ps
        .iter()
        .map(|&p| {
            let mut m = singlet.projector().scale(p);
            m.add_scaled(C64::new((1.0 - p) / 4.0, 0.0), &ComplexMatrix::identity(4));
            basis.vectorize_matrix(&m).unwrap().components
        })
        .collect();
    let traj = Trajectory {
        dt: 1.0,
        steps: (0..ps.len()).collect(),
        times: (0..ps.len()).map(|k| k as f64).collect(),
        liouville_vectors: vecs,
        positivity_flags: vec![],
    };
    let cfg = BsaConfig::default();
    let run = |warm: bool| {
        let opts = AnalysisOptions { warm_seed: warm, ..Default::default() };
        analyze_trajectory(&traj, &part, &SeparabilityMode::KSep, &cfg, &RngStream::new(7), &opts).unwrap()
    };
    let (w, c) = (run(true), run(false));
    for ((a, b), p) in w.records.iter().zip(&c.records).zip(ps) {
        let (a, b) = (a.b.unwrap(), b.b.unwrap());
        assert!((a - b).abs() <= 2.0 * cfg.convergence_tol, "p = {p}: {a} vs {b}");
        assert!((a - ((3.0 * p - 1.0) / 2.0f64).max(0.0)).abs() < 5e-3);
    }
    assert_eq!(w.death_intervals, vec![DeathInterval { onset: 3.0, last_dead: 4.0, revival: Some(5.0) }]);
    assert!(w.records.iter().all(|r| r.rank.unwrap() <= 1 && r.tanglemeter.is_none()));
}

#[test]
fn analysis_records_follow_the_stride() {
    let g = GeneratorMatrices::new(&LindbladModel::fig3_like()).unwrap();
    let r0 = initial_vector(&ghz_like()).unwrap();
    let traj = evolve(&r0, &g, 1e-2, 0.2, &EvolveOptions { record_every: 5, ..Default::default() }).unwrap();
    assert_eq!(traj.len(), 5);
    let cfg = BsaConfig { max_iterations: 3, ..Default::default() };
    let opts = AnalysisOptions { every: 2, ..Default::default() };
    let a = analyze_trajectory(&traj, &partition_322(), &SeparabilityMode::BisepAugmented, &cfg, &RngStream::new(8), &opts).unwrap();
    let ts: Vec<f64> = a.records.iter().map(|r| r.t).collect();
    assert_eq!(ts, vec![traj.times[0], traj.times[2], traj.times[4]]);
    // the pure GHZ-like start is fully entangled and its own dominant component
    let first = &a.records[0];
    assert_eq!(first.b, Some(1.0));
    assert!((first.tanglemeter.as_ref().unwrap().beta_111 - 1.0).abs() < 1e-6);
    for r in &a.records {
        let b = r.b.unwrap();
        assert!((0.0..=1.0).contains(&b));
    }
}
