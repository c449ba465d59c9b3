//! Property suites with independent oracles: the two-qubit Werner sweep,
//! PPT agreement on small bipartite systems and the rank bound.
//!
//! Every case draws from its own derived stream, so results do not depend
//! on the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bsa::{bsa_decompose, ppt_check, rank_bound, BsaConfig, BsaError, SeparabilityMode};
use crate::density::{partial_transpose, random_mixture, random_separable, DensityMatrix};
use crate::liouville::{Grouping, PartitionSpec};
use crate::numerics::eigenvalues_hermitian;
use crate::states::RngStream;

/// Entangled weight below which a state counts as separable.
pub const SEPARABLE_B: f64 = 1e-3;
pub const WERNER_TOL: f64 = 5e-3;
pub const WERNER_POINTS: [f64; 6] = [0.0, 0.2, 1.0 / 3.0, 0.5, 0.8, 1.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Werner,
    Ppt,
    RankBound,
}

impl Suite {
    pub const ALL: [Suite; 3] = [Suite::Werner, Suite::Ppt, Suite::RankBound];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Werner => "werner",
            Suite::Ppt => "ppt",
            Suite::RankBound => "rank-bound",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|x| x.name() == s)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SuiteRow {
    pub case: String,
    pub measured: f64,
    pub expected: f64,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SuiteReport {
    pub suite: Suite,
    pub rows: Vec<SuiteRow>,
    pub passed: usize,
    pub failed: usize,
}

impl SuiteReport {
    fn new(suite: Suite, rows: Vec<SuiteRow>) -> Self {
        let passed = rows.iter().filter(|r| r.passed).count();
        Self { suite, failed: rows.len() - passed, passed, rows }
    }

    pub fn ok(&self) -> bool {
        self.failed == 0
    }
}

pub fn run_suite(suite: Suite, config: &BsaConfig, rng: &RngStream) -> Result<SuiteReport, BsaError> {
    match suite {
        Suite::Werner => werner_suite(config, &rng.derive(1)),
        Suite::Ppt => ppt_suite(config, 100, &rng.derive(2)),
        Suite::RankBound => rank_bound_suite(config, 200, &rng.derive(3)),
    }
}

fn two_qubits() -> PartitionSpec {
    PartitionSpec::new(vec![2, 2]).expect("valid dims")
}

fn min_pt_eigenvalue(rho: &DensityMatrix) -> f64 {
    let pt = partial_transpose(rho.matrix(), rho.partition().dims(), &[1]);
    eigenvalues_hermitian(&pt).last().copied().unwrap_or(0.0)
}

/// Largest Werner parameter with a positive partial transpose, by bisection.
pub fn werner_ppt_threshold() -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let w = DensityMatrix::werner(mid).expect("werner parameter in [0,1]");
        if min_pt_eigenvalue(&w) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Entangled weight of the Werner state `W(p)`.
///
/// Twirling maps any decomposition onto one into Werner states, so the
/// separable part is at best `W(p*)` at the PPT threshold and the rest is
/// the singlet: `p = (1 - B) p* + B`.
pub fn werner_oracle(p: f64, threshold: f64) -> f64 {
    ((p - threshold) / (1.0 - threshold)).max(0.0)
}

pub fn werner_suite(config: &BsaConfig, rng: &RngStream) -> Result<SuiteReport, BsaError> {
    let threshold = werner_ppt_threshold();
    let rows = WERNER_POINTS
        .par_iter()
        .enumerate()
        .map(|(k, &p)| {
            let rho = DensityMatrix::werner(p)?;
            let d = bsa_decompose(&rho, &SeparabilityMode::KSep, config, &rng.derive(k as u64))?;
            let expected = werner_oracle(p, threshold);
            Ok(SuiteRow {
                case: format!("p={p:.4}"),
                measured: d.b,
                expected,
                passed: (d.b - expected).abs() <= WERNER_TOL,
                detail: format!("iters={} converged={}", d.iterations_used, d.converged),
            })
        })
        .collect::<Result<Vec<_>, BsaError>>()?;
    Ok(SuiteReport::new(Suite::Werner, rows))
}

/// Case `k` of the PPT suite: even cases are separable by construction,
/// odd ones random mixtures of random rank; sizes alternate 2x2 / 2x3.
pub fn ppt_case(k: usize, rng: &RngStream) -> DensityMatrix {
    let dims = if (k / 2) % 2 == 0 { vec![2, 2] } else { vec![2, 3] };
    let partition = PartitionSpec::new(dims).expect("valid dims");
    let n = partition.total_dim();
    let mut r = rng.derive(k as u64);
    if k % 2 == 0 {
        let terms = 1 + r.below(2 * n);
        random_separable(&partition, terms, &mut r)
    } else {
        let rank = 1 + r.below(n);
        random_mixture(&partition, rank, &mut r)
    }
}

pub fn ppt_suite(config: &BsaConfig, n: usize, rng: &RngStream) -> Result<SuiteReport, BsaError> {
    let rows = (0..n)
        .into_par_iter()
        .map(|k| {
            let rho = ppt_case(k, rng);
            let cut = Grouping::new(vec![vec![0], vec![1]], rho.partition())?;
            let ppt = ppt_check(&rho, &cut)?;
            let d = bsa_decompose(&rho, &SeparabilityMode::KSep, config, &rng.derive2(k as u64, 1))?;
            let separable = d.b < SEPARABLE_B;
            Ok(SuiteRow {
                case: format!("{}:{:?}", if k % 2 == 0 { "separable" } else { "generic" }, rho.partition().dims()),
                measured: d.b,
                expected: ppt.is_ppt as u8 as f64,
                passed: separable == ppt.is_ppt,
                detail: format!("min_pt={:.3e} iters={}", ppt.min_pt_eigenvalue, d.iterations_used),
            })
        })
        .collect::<Result<Vec<_>, BsaError>>()?;
    Ok(SuiteReport::new(Suite::Ppt, rows))
}

/// Random two-qubit mixture of random rank.
pub fn rank_case(k: usize, rng: &RngStream) -> DensityMatrix {
    let mut r = rng.derive(k as u64);
    let rank = 1 + r.below(4);
    random_mixture(&two_qubits(), rank, &mut r)
}

/// The bound itself for the three reference settings, then `n` random
/// two-qubit states whose entangled part must be pure whenever `B` is
/// appreciable. `measured` is the entangled rank, `expected` its bound.
pub fn rank_bound_suite(config: &BsaConfig, n: usize, rng: &RngStream) -> Result<SuiteReport, BsaError> {
    let p322 = PartitionSpec::new(vec![3, 2, 2]).expect("valid dims");
    let mut rows = Vec::new();
    for (case, mode, partition, expected) in [
        ("bound 2x2 k-sep", SeparabilityMode::KSep, two_qubits(), 1),
        ("bound 3x2x2 k-sep", SeparabilityMode::KSep, p322.clone(), 7),
        ("bound 3x2x2 bisep-augmented", SeparabilityMode::BisepAugmented, p322, 5),
    ] {
        let got = rank_bound(&mode, &partition)?;
        rows.push(SuiteRow { case: case.into(), measured: got as f64, expected: expected as f64, passed: got == expected, detail: String::new() });
    }
    let cases = (0..n)
        .into_par_iter()
        .map(|k| {
            let rho = rank_case(k, rng);
            let d = bsa_decompose(&rho, &SeparabilityMode::KSep, config, &rng.derive2(k as u64, 1))?;
            let rank = d.entangled_rank(1e-6);
            let checked = d.b > SEPARABLE_B;
            Ok(SuiteRow {
                case: format!("state {k}"),
                measured: rank as f64,
                expected: 1.0,
                passed: !checked || rank <= 1,
                detail: format!("B={:.6} iters={}", d.b, d.iterations_used),
            })
        })
        .collect::<Result<Vec<_>, BsaError>>()?;
    rows.extend(cases);
    Ok(SuiteReport::new(Suite::RankBound, rows))
}
