//! Log-barrier solve of the restricted master problem
//!
//! ```text
//! max 1'w   s.t.   X(w) = rho - sum_p w_p |q_p><q_p|  >= 0,   w >= 0
//! ```
//!
//! over a fixed set of unit columns `q_p`, for positive definite `rho`.
//! Along the central path `Y = X^{-1} / t` is a dual estimate with
//! `<q_p|Y|q_p> = 1 + 1/(t w_p)`, which prices new columns far better than
//! the vertex duals of the ray-approximated LP.

use nalgebra::{DMatrix, DVector};

use crate::numerics::{ComplexMatrix, C64};

#[derive(Clone, Debug)]
pub(crate) struct MasterSolution {
    pub w: Vec<f64>,
    /// `X(w)`
    pub remainder: ComplexMatrix,
    /// `X^{-1} / t`
    pub dual: ComplexMatrix,
    /// `1 / t`; a column with `w_p ~ 1/t` has dual slack of order one.
    pub inv_t: f64,
}

struct Point {
    w: DVector<f64>,
    /// Lower Cholesky factor of `X(w)`.
    l: DMatrix<C64>,
}

/// Lower Cholesky factor, `None` unless every pivot is positive.
fn cholesky(a: &DMatrix<C64>) -> Option<DMatrix<C64>> {
    let n = a.nrows();
    let mut l = DMatrix::<C64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = C64::new(d, 0.0);
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

fn to_na(m: &ComplexMatrix) -> DMatrix<C64> {
    DMatrix::from_fn(m.n_rows(), m.n_cols(), |i, j| m[(i, j)])
}

fn from_na(m: &DMatrix<C64>) -> ComplexMatrix {
    ComplexMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

struct Master {
    rho: DMatrix<C64>,
    q: DMatrix<C64>,
}

impl Master {
    fn x(&self, w: &DVector<f64>) -> DMatrix<C64> {
        let mut x = self.rho.clone();
        for (p, &wp) in w.iter().enumerate() {
            if wp != 0.0 {
                let c = self.q.column(p);
                x.ger(C64::new(-wp, 0.0), &c, &c.conjugate(), C64::new(1.0, 0.0));
            }
        }
        x
    }

    fn point(&self, w: DVector<f64>) -> Option<Point> {
        if w.iter().any(|&x| !(x > 0.0)) {
            return None;
        }
        let l = cholesky(&self.x(&w))?;
        Some(Point { w, l })
    }

    fn value(&self, t: f64, p: &Point) -> f64 {
        let logdet: f64 = p.l.diagonal().iter().map(|d| d.re.ln()).sum::<f64>() * 2.0;
        -t * p.w.sum() - logdet - p.w.iter().map(|x| x.ln()).sum::<f64>()
    }

    /// `Q^H X^{-1} Q`
    fn gram(&self, p: &Point) -> DMatrix<C64> {
        let mut z = self.q.clone();
        p.l.solve_lower_triangular_mut(&mut z);
        z.adjoint() * z
    }

    /// Damped Newton centering for barrier parameter `t`, until the squared
    /// Newton decrement drops below `tol`.
    fn center(&self, t: f64, mut p: Point, tol: f64) -> Point {
        let n = p.w.len();
        for _ in 0..60 {
            let k = self.gram(&p);
            let g = DVector::from_fn(n, |i, _| -t + k[(i, i)].re - 1.0 / p.w[i]);
            let h = DMatrix::from_fn(n, n, |i, j| k[(i, j)].norm_sqr() + if i == j { 1.0 / (p.w[i] * p.w[i]) } else { 0.0 });
            let Some(hc) = h.cholesky() else { break };
            let d = -hc.solve(&g);
            let dec = -g.dot(&d);
            if dec < tol {
                break;
            }
            let mut s: f64 = 1.0;
            for i in 0..n {
                if d[i] < 0.0 {
                    s = s.min(-0.99 * p.w[i] / d[i]);
                }
            }
            let f0 = self.value(t, &p);
            let mut next = None;
            for _ in 0..40 {
                if let Some(trial) = self.point(&p.w + &d * s) {
                    if self.value(t, &trial) <= f0 - 0.25 * s * dec {
                        next = Some(trial);
                        break;
                    }
                }
                s *= 0.5;
            }
            match next {
                Some(q) => p = q,
                None => break,
            }
        }
        p
    }
}

/// Path-following solve from the feasible (possibly boundary) weights `w0`
/// down to duality gap `gap_tol`; `None` if `rho` is not positive definite
/// or there are no columns.
pub(crate) fn solve_master(rho: &ComplexMatrix, columns: &[Vec<C64>], w0: &[f64], gap_tol: f64) -> Option<MasterSolution> {
    let r = rho.n_rows();
    let n = columns.len();
    if n == 0 {
        return None;
    }
    let q = DMatrix::from_fn(r, n, |i, j| columns[j][i]);
    let m = Master { rho: to_na(rho), q };
    // pull the start slightly inside the cone, further until it is interior
    let (mut keep, mut lift) = (1.0 - 1e-3, 1e-4 / n as f64);
    let mut p = None;
    for _ in 0..60 {
        let w = DVector::from_fn(n, |i, _| keep * w0.get(i).copied().unwrap_or(0.0).max(0.0) + lift);
        if let Some(pt) = m.point(w) {
            p = Some(pt);
            break;
        }
        keep *= 0.5;
        lift *= 0.5;
    }
    let mut p = p?;
    let dim = (r + n) as f64;
    let t_final = dim / gap_tol;
    // barrier parameter for which the start is closest to central
    let k = m.gram(&p);
    let t_fit = (0..n).map(|i| k[(i, i)].re - 1.0 / p.w[i]).sum::<f64>() / n as f64;
    let mut t = t_fit.clamp(dim / 1e-2, t_final);
    loop {
        let last = t >= t_final;
        p = m.center(t, p, if last { 1e-10 } else { 1e-2 });
        if last {
            break;
        }
        t = (t * 10.0).min(t_final);
    }
    let x = m.x(&p.w);
    let mut linv = DMatrix::identity(r, r);
    p.l.solve_lower_triangular_mut(&mut linv);
    let inv = linv.adjoint() * &linv / C64::new(t, 0.0);
    // symmetrize against rounding
    let dual = (&inv + inv.adjoint()) * C64::new(0.5, 0.0);
    Some(MasterSolution { w: p.w.iter().copied().collect(), remainder: from_na(&x), dual: from_na(&dual), inv_t: 1.0 / t })
}
