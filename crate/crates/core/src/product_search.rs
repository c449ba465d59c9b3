//! Local maximization of `<p|M|p>` over product states of a layout.
//!
//! With all factors but one fixed, the expectation is a Hermitian form in
//! the free factor, maximized by its top eigenvector. Sweeping over the
//! factors is monotone, so each start converges to a local maximum.

use std::sync::Arc;

use crate::numerics::{eig_hermitian_part, ComplexMatrix, C64};
use crate::states::{random_product_state, ProductLayout, ProductState, PureState, RngStream};

#[derive(Clone, Debug, PartialEq)]
pub struct SearchOptions {
    pub max_sweeps: usize,
    /// Stop once a sweep improves the value by less than this.
    pub tol: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self { max_sweeps: 200, tol: 1e-14 }
    }
}

/// Alternating ascent from `start`; returns the final value and state.
pub fn ascend(m: &ComplexMatrix, start: &ProductState, opts: &SearchOptions) -> (f64, ProductState) {
    let layout = start.layout().clone();
    let mut factors: Vec<Vec<C64>> = start.factors().iter().map(|f| f.amplitudes().to_vec()).collect();
    let mut value = f64::NEG_INFINITY;
    for _ in 0..opts.max_sweeps {
        let mut last = value;
        for g in 0..layout.n_groups() {
            let refs: Vec<&[C64]> = factors.iter().map(|f| f.as_slice()).collect();
            let mg = layout.contract_except(m, &refs, g);
            let eig = eig_hermitian_part(&mg);
            factors[g] = eig.vector(0);
            last = eig.eigenvalues[0];
        }
        let improved = last - value;
        value = last;
        if improved < opts.tol {
            break;
        }
    }
    let factors = factors
        .into_iter()
        .map(|f| PureState::normalize(f).expect("eigenvectors are unit vectors"))
        .collect();
    (value, ProductState::new(layout, factors).expect("same layout"))
}

/// Runs [`ascend`] from every state in `starts` plus `n_random` random
/// starts; results sorted by decreasing value.
pub fn multi_start(
    m: &ComplexMatrix,
    layout: &Arc<ProductLayout>,
    starts: &[ProductState],
    n_random: usize,
    rng: &mut RngStream,
    opts: &SearchOptions,
) -> Vec<(f64, ProductState)> {
    let mut out: Vec<(f64, ProductState)> = starts.iter().map(|s| ascend(m, s, opts)).collect();
    for _ in 0..n_random {
        let s = random_product_state(layout, rng);
        out.push(ascend(m, &s, opts));
    }
    out.sort_by(|a, b| b.0.total_cmp(&a.0));
    out
}

/// Largest `|<p|psi>|^2` over product states of `layout` found from `n_starts` starts.
pub fn max_overlap(psi: &PureState, layout: &Arc<ProductLayout>, n_starts: usize, rng: &mut RngStream) -> (f64, ProductState) {
    let m = psi.projector();
    multi_start(&m, layout, &[], n_starts.max(1), rng, &SearchOptions::default())
        .into_iter()
        .next()
        .expect("at least one start")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liouville::PartitionSpec;
    use crate::states::haar_random_pure;

    fn two_qubits() -> Arc<ProductLayout> {
        Arc::new(ProductLayout::full_split(PartitionSpec::new(vec![2, 2]).unwrap()))
    }

    #[test]
    fn singlet_overlap_is_one_half() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let z = C64::new(0.0, 0.0);
        let singlet = PureState::new(vec![z, C64::new(s, 0.0), C64::new(-s, 0.0), z]).unwrap();
        let mut rng = RngStream::new(1);
        let (v, _) = max_overlap(&singlet, &two_qubits(), 8, &mut rng);
        assert!((v - 0.5).abs() < 1e-12);
    }

    #[test]
    fn product_state_overlap_is_one() {
        let layout = Arc::new(ProductLayout::full_split(PartitionSpec::new(vec![3, 2, 2]).unwrap()));
        let mut rng = RngStream::new(2);
        let p = random_product_state(&layout, &mut rng);
        let (v, q) = max_overlap(p.assembled(), &layout, 4, &mut rng);
        assert!((v - 1.0).abs() < 1e-12);
        assert!((q.assembled().fidelity(p.assembled()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_qubit_overlap_matches_top_schmidt_coefficient() {
        let layout = two_qubits();
        let mut rng = RngStream::new(3);
        for _ in 0..50 {
            let psi = haar_random_pure(4, &mut rng);
            let sv = crate::states::schmidt_coefficients(psi.amplitudes(), 2, 2);
            let (v, _) = max_overlap(&psi, &layout, 4, &mut rng);
            assert!((v - sv[0] * sv[0]).abs() < 1e-10);
        }
    }
}
