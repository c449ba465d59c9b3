//! Equality-form linear programming: minimize `c.x` subject to `A x = b`, `x >= 0`.
//!
//! Two-phase revised simplex over a dense explicit basis inverse. The inverse
//! is rebuilt from an LU factorization with partial pivoting every
//! `refactor_interval` pivots and updated by elementary row operations in
//! between. Pricing is Dantzig (most negative reduced cost) with a Harris
//! ratio test; after `bland_after` consecutive degenerate pivots the solver
//! switches to Bland's rule until the objective moves again.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
    #[error("pivot limit of {0} reached")]
    PivotLimit(usize),
}

/// Dense problem data; `a` is row-major `n_rows x n_cols`.
#[derive(Clone, Debug, PartialEq)]
pub struct LpProblem {
    n_rows: usize,
    n_cols: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
}

impl LpProblem {
    pub fn new(n_rows: usize, n_cols: usize, a: Vec<f64>, b: Vec<f64>, c: Vec<f64>) -> Result<Self, LpError> {
        if a.len() != n_rows * n_cols {
            return Err(LpError::InvalidProblem(format!(
                "constraint matrix has {} entries, expected {n_rows}x{n_cols}",
                a.len()
            )));
        }
        if b.len() != n_rows {
            return Err(LpError::InvalidProblem(format!("rhs has {} entries, expected {n_rows}", b.len())));
        }
        if c.len() != n_cols {
            return Err(LpError::InvalidProblem(format!("objective has {} entries, expected {n_cols}", c.len())));
        }
        if n_rows == 0 {
            return Err(LpError::InvalidProblem("no constraints".into()));
        }
        if a.iter().chain(&b).chain(&c).any(|v| !v.is_finite()) {
            return Err(LpError::InvalidProblem("non-finite entry".into()));
        }
        if n_rows > n_cols {
            log::warn!("LP has more rows ({n_rows}) than columns ({n_cols})");
        }
        Ok(Self { n_rows, n_cols, a, b, c })
    }

    /// Builds a problem from columns given as slices of length `n_rows`.
    pub fn from_columns(columns: &[Vec<f64>], b: Vec<f64>, c: Vec<f64>) -> Result<Self, LpError> {
        let n_rows = b.len();
        let n_cols = columns.len();
        let mut a = vec![0.0; n_rows * n_cols];
        for (j, col) in columns.iter().enumerate() {
            if col.len() != n_rows {
                return Err(LpError::InvalidProblem(format!("column {j} has {} entries, expected {n_rows}", col.len())));
            }
            for (i, &v) in col.iter().enumerate() {
                a[i * n_cols + j] = v;
            }
        }
        Self::new(n_rows, n_cols, a, b, c)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n_cols + j]
    }

    pub fn rhs(&self) -> &[f64] {
        &self.b
    }

    pub fn objective(&self) -> &[f64] {
        &self.c
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.entry(i, j)).collect()
    }

    /// `max_i |(A x - b)_i|`
    pub fn residual_inf(&self, x: &[f64]) -> f64 {
        (0..self.n_rows)
            .map(|i| {
                let row = &self.a[i * self.n_cols..(i + 1) * self.n_cols];
                (row.iter().zip(x).map(|(a, x)| a * x).sum::<f64>() - self.b[i]).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.c.iter().zip(x).map(|(c, x)| c * x).sum()
    }

    /// Plain-text dump for external cross-checks: a header line, the rhs,
    /// then one line per column `j c_j a_0j a_1j ...`. Floats use the
    /// shortest round-trip representation.
    pub fn write_dump(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "# lp rows={} cols={}", self.n_rows, self.n_cols)?;
        write!(w, "rhs")?;
        for v in &self.b {
            write!(w, " {v:?}")?;
        }
        writeln!(w)?;
        for j in 0..self.n_cols {
            write!(w, "{j} {:?}", self.c[j])?;
            for i in 0..self.n_rows {
                write!(w, " {:?}", self.entry(i, j))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    /// Phase 1 could not drive the artificial sum below tolerance.
    Infeasible { residual: f64 },
    /// Column `column` is an improving ray.
    Unbounded { column: usize },
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective_value: f64,
    /// Structural columns of the final basis, ordered by basis row.
    pub basis: Vec<usize>,
    /// Columns with `x_j > support_tol`.
    pub support: Vec<usize>,
    /// Simplex multipliers `y` with `c_B = B^T y`.
    pub duals: Vec<f64>,
    pub pivots: usize,
    /// True when a supplied starting basis was accepted as feasible.
    pub warm_started: bool,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// `c_j - y . a_j` for every column.
    pub fn reduced_costs(&self, p: &LpProblem) -> Vec<f64> {
        reduced_costs(p, &self.duals)
    }
}

pub fn reduced_costs(p: &LpProblem, y: &[f64]) -> Vec<f64> {
    let mut d = p.c.clone();
    for i in 0..p.n_rows {
        let yi = y[i];
        if yi == 0.0 {
            continue;
        }
        let row = &p.a[i * p.n_cols..(i + 1) * p.n_cols];
        for (dj, aij) in d.iter_mut().zip(row) {
            *dj -= yi * aij;
        }
    }
    d
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpOptions {
    /// Per-row feasibility tolerance, scaled by `1 + |b|_inf`.
    pub feasibility_tol: f64,
    /// Smallest pivot element accepted in the ratio test.
    pub pivot_tol: f64,
    /// Reduced costs above `-optimality_tol` count as non-negative.
    pub optimality_tol: f64,
    pub support_tol: f64,
    /// Slack allowed by the Harris ratio test below zero.
    pub harris_tol: f64,
    pub refactor_interval: usize,
    /// After this many consecutive degenerate pivots phase 2 perturbs the
    /// rhs; a second streak of the same length switches to Bland's rule.
    pub bland_after: usize,
    /// Size of the rhs perturbation, relative to `1 + |b|_inf`.
    pub perturbation: f64,
    pub max_pivots: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-8,
            pivot_tol: 1e-9,
            optimality_tol: 1e-10,
            support_tol: 1e-9,
            harris_tol: 1e-11,
            refactor_interval: 50,
            bland_after: 200,
            perturbation: 1e-9,
            max_pivots: 1_000_000,
        }
    }
}

pub fn lp_solve(p: &LpProblem, opts: &LpOptions) -> Result<LpSolution, LpError> {
    let mut s = Simplex::new(p, opts);
    s.cold_start()?;
    s.finish()
}

/// As [`lp_solve`], starting phase 2 from `starting_basis` when it is a
/// feasible basis; otherwise falls back to a cold two-phase solve.
pub fn lp_warm_solve(p: &LpProblem, starting_basis: &[usize], opts: &LpOptions) -> Result<LpSolution, LpError> {
    let mut s = Simplex::new(p, opts);
    if s.try_warm_start(starting_basis)? {
        s.warm = true;
        s.phase2()?;
    } else {
        log::debug!("warm start rejected, solving cold");
        s.cold_start()?;
    }
    s.finish()
}

const DEGENERATE_STEP: f64 = 1e-11;
const BLAND_TIE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    One,
    Two,
}

struct Simplex<'a> {
    p: &'a LpProblem,
    opts: &'a LpOptions,
    m: usize,
    n: usize,
    /// Row signs making the working rhs non-negative.
    sign: Vec<f64>,
    rhs: Vec<f64>,
    /// Unperturbed working rhs, kept while `rhs` is perturbed.
    original_rhs: Option<Vec<f64>>,
    bmax: f64,
    /// Basis variables (index >= n is the artificial of row index - n).
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    pivots: usize,
    since_refactor: usize,
    stall: usize,
    status: Option<LpStatus>,
    warm: bool,
    // scratch
    y: Vec<f64>,
    d: Vec<f64>,
    w: Vec<f64>,
    col: Vec<f64>,
}

impl<'a> Simplex<'a> {
    fn new(p: &'a LpProblem, opts: &'a LpOptions) -> Self {
        let m = p.n_rows;
        let n = p.n_cols;
        let sign: Vec<f64> = p.b.iter().map(|&b| if b < 0.0 { -1.0 } else { 1.0 }).collect();
        let rhs: Vec<f64> = p.b.iter().zip(&sign).map(|(b, s)| b * s).collect();
        let bmax = rhs.iter().fold(0.0f64, |a, &b| a.max(b));
        Self {
            p,
            opts,
            m,
            n,
            sign,
            rhs,
            original_rhs: None,
            bmax,
            basis: Vec::new(),
            is_basic: vec![false; n + m],
            binv: vec![0.0; m * m],
            xb: vec![0.0; m],
            pivots: 0,
            since_refactor: 0,
            stall: 0,
            status: None,
            warm: false,
            y: vec![0.0; m],
            d: vec![0.0; n],
            w: vec![0.0; m],
            col: vec![0.0; m],
        }
    }

    fn feas_tol(&self) -> f64 {
        self.opts.feasibility_tol * (1.0 + self.bmax)
    }

    /// Working column `j` (sign-adjusted), written into `out`.
    fn load_column(&self, j: usize, out: &mut [f64]) {
        if j < self.n {
            for i in 0..self.m {
                out[i] = self.sign[i] * self.p.a[i * self.n + j];
            }
        } else {
            out.iter_mut().for_each(|v| *v = 0.0);
            out[j - self.n] = 1.0;
        }
    }

    fn set_basis(&mut self, basis: Vec<usize>) {
        self.is_basic.iter_mut().for_each(|b| *b = false);
        for &j in &basis {
            self.is_basic[j] = true;
        }
        self.basis = basis;
    }

    /// Rebuilds `binv` from scratch and recomputes `xb`.
    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        let mut bmat = vec![0.0; m * m];
        let mut col = vec![0.0; m];
        for (k, &j) in self.basis.iter().enumerate() {
            self.load_column(j, &mut col);
            for i in 0..m {
                bmat[i * m + k] = col[i];
            }
        }
        self.binv = invert_dense(m, &bmat)
            .ok_or_else(|| LpError::NumericalBreakdown(format!("singular basis after {} pivots", self.pivots)))?;
        self.recompute_xb();
        self.since_refactor = 0;
        Ok(())
    }

    /// `xb = B^{-1} b` followed by two rounds of iterative refinement
    /// against the explicit basis columns.
    fn recompute_xb(&mut self) {
        let m = self.m;
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            self.xb[i] = row.iter().zip(&self.rhs).map(|(a, b)| a * b).sum();
        }
        let mut col = vec![0.0; m];
        for _ in 0..2 {
            let mut res = self.rhs.clone();
            for (k, &j) in self.basis.iter().enumerate() {
                self.load_column(j, &mut col);
                let xk = self.xb[k];
                res.iter_mut().zip(&col).for_each(|(r, c)| *r -= c * xk);
            }
            for i in 0..m {
                let row = &self.binv[i * m..(i + 1) * m];
                self.xb[i] += row.iter().zip(&res).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    }

    /// Shifts every basic value up by a small distinct amount (moving the
    /// rhs by the matching combination of basis columns), which breaks the
    /// ties behind degenerate cycling.
    fn perturb(&mut self) {
        let m = self.m;
        let scale = self.opts.perturbation * (1.0 + self.bmax);
        let mut state = 0x9e37_79b9_7f4a_7c15u64;
        let mut col = vec![0.0; m];
        self.original_rhs = Some(self.rhs.clone());
        for k in 0..m {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            let delta = scale * (1.0 + (state >> 11) as f64 / (1u64 << 53) as f64);
            self.load_column(self.basis[k], &mut col);
            self.rhs.iter_mut().zip(&col).for_each(|(r, c)| *r += delta * c);
            self.xb[k] += delta;
        }
    }

    /// Sum of the positive basic artificial values.
    fn infeasibility(&self) -> f64 {
        self.basis.iter().zip(&self.xb).filter(|(&j, _)| j >= self.n).map(|(_, &x)| x.max(0.0)).sum()
    }

    fn cold_start(&mut self) -> Result<(), LpError> {
        let basis: Vec<usize> = (self.n..self.n + self.m).collect();
        self.set_basis(basis);
        self.binv.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.m {
            self.binv[i * self.m + i] = 1.0;
        }
        self.xb.copy_from_slice(&self.rhs);
        self.since_refactor = 0;
        self.run(Phase::One)?;
        let infeas = self.infeasibility();
        if infeas > self.feas_tol() {
            self.status = Some(LpStatus::Infeasible { residual: infeas });
            return Ok(());
        }
        self.drive_out_artificials()?;
        self.phase2()
    }

    fn try_warm_start(&mut self, start: &[usize]) -> Result<bool, LpError> {
        if start.len() != self.m {
            return Ok(false);
        }
        let mut seen = vec![false; self.n];
        for &j in start {
            if j >= self.n {
                return Err(LpError::InvalidProblem(format!("starting basis column {j} out of range")));
            }
            if seen[j] {
                return Err(LpError::InvalidProblem(format!("starting basis repeats column {j}")));
            }
            seen[j] = true;
        }
        self.set_basis(start.to_vec());
        if self.refactor().is_err() {
            return Ok(false);
        }
        let tol = self.feas_tol();
        Ok(self.xb.iter().all(|&x| x >= -tol))
    }

    fn phase2(&mut self) -> Result<(), LpError> {
        self.stall = 0;
        self.run(Phase::Two)
    }

    /// Pivots basic artificials out wherever a structural column has a
    /// usable entry in their row. Rows without one are redundant.
    fn drive_out_artificials(&mut self) -> Result<(), LpError> {
        let m = self.m;
        for r in 0..m {
            if self.basis[r] < self.n {
                continue;
            }
            // row r of B^{-1} A
            let brow: Vec<f64> = (0..m).map(|k| self.binv[r * m + k] * self.sign[k]).collect();
            let mut best = (0.0, usize::MAX);
            for j in 0..self.n {
                if self.is_basic[j] {
                    continue;
                }
                let v: f64 = (0..m).map(|i| brow[i] * self.p.a[i * self.n + j]).sum();
                if v.abs() > best.0 {
                    best = (v.abs(), j);
                }
            }
            if best.0 > 1e-7 {
                let q = best.1;
                let mut col = std::mem::take(&mut self.col);
                self.load_column(q, &mut col);
                self.ftran(&col);
                self.col = col;
                self.pivot(r, q, self.xb[r] / self.w[r])?;
            }
        }
        Ok(())
    }

    /// `w = B^{-1} col`
    fn ftran(&mut self, col: &[f64]) {
        let m = self.m;
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            self.w[i] = row.iter().zip(col).map(|(a, b)| a * b).sum();
        }
    }

    fn cost(&self, j: usize, phase: Phase) -> f64 {
        match phase {
            Phase::One => {
                if j >= self.n {
                    1.0
                } else {
                    0.0
                }
            }
            Phase::Two => {
                if j >= self.n {
                    0.0
                } else {
                    self.p.c[j]
                }
            }
        }
    }

    /// Simplex multipliers in the original row signs.
    fn compute_duals(&mut self, phase: Phase) {
        let m = self.m;
        let cb: Vec<f64> = self.basis.iter().map(|&j| self.cost(j, phase)).collect();
        for k in 0..m {
            let mut acc = 0.0;
            for i in 0..m {
                acc += cb[i] * self.binv[i * m + k];
            }
            // y_working = cb^T B^{-1}; original y_k = sign_k * y_working_k
            self.y[k] = acc * self.sign[k];
        }
    }

    fn price(&mut self, phase: Phase, bland: bool) -> Option<usize> {
        let n = self.n;
        match phase {
            Phase::One => self.d.iter_mut().for_each(|v| *v = 0.0),
            Phase::Two => self.d.copy_from_slice(&self.p.c),
        }
        for i in 0..self.m {
            let yi = self.y[i];
            if yi == 0.0 {
                continue;
            }
            let row = &self.p.a[i * n..(i + 1) * n];
            for (dj, aij) in self.d.iter_mut().zip(row) {
                *dj -= yi * aij;
            }
        }
        let tol = self.opts.optimality_tol;
        if bland {
            (0..n).find(|&j| !self.is_basic[j] && self.d[j] < -tol)
        } else {
            let mut best = (-tol, None);
            for j in 0..n {
                if !self.is_basic[j] && self.d[j] < best.0 {
                    best = (self.d[j], Some(j));
                }
            }
            best.1
        }
    }

    /// Leaving row for the entering direction in `self.w`, or `None` if unbounded.
    fn ratio_test(&self, phase: Phase, bland: bool) -> Option<(usize, f64)> {
        let ptol = self.opts.pivot_tol;
        let ftol = self.feas_tol();
        // Basic artificials left over in phase 2 must stay at zero.
        if phase == Phase::Two {
            for (i, &j) in self.basis.iter().enumerate() {
                if j >= self.n && self.w[i].abs() > ptol {
                    return Some((i, 0.0));
                }
            }
        }
        if bland {
            let mut best: Option<(usize, f64)> = None;
            for i in 0..self.m {
                if self.w[i] > ptol {
                    let t = self.xb[i].max(0.0) / self.w[i];
                    best = match best {
                        None => Some((i, t)),
                        Some((bi, bt)) => {
                            if t < bt - BLAND_TIE || (t <= bt + BLAND_TIE && self.basis[i] < self.basis[bi]) {
                                Some((i, t))
                            } else {
                                Some((bi, bt))
                            }
                        }
                    }
                }
            }
            return best;
        }
        // Harris two-pass test; basic values may dip to -harris_tol but no further.
        let htol = self.opts.harris_tol.min(ftol);
        let mut bound = f64::INFINITY;
        for i in 0..self.m {
            if self.w[i] > ptol {
                bound = bound.min((self.xb[i] + htol).max(0.0) / self.w[i]);
            }
        }
        if !bound.is_finite() {
            return None;
        }
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.m {
            if self.w[i] > ptol {
                let t = self.xb[i].max(0.0) / self.w[i];
                if t <= bound && best.is_none_or(|(bi, _)| self.w[i] > self.w[bi]) {
                    best = Some((i, t));
                }
            }
        }
        best
    }

    fn pivot(&mut self, r: usize, q: usize, theta: f64) -> Result<(), LpError> {
        let m = self.m;
        let theta = theta.max(0.0);
        for i in 0..m {
            if i != r {
                self.xb[i] -= theta * self.w[i];
            }
        }
        self.xb[r] = theta;
        let wr = self.w[r];
        {
            let (before, rest) = self.binv.split_at_mut(r * m);
            let (prow, after) = rest.split_at_mut(m);
            for v in prow.iter_mut() {
                *v /= wr;
            }
            for (i, row) in before.chunks_exact_mut(m).enumerate() {
                let wi = self.w[i];
                if wi != 0.0 {
                    row.iter_mut().zip(prow.iter()).for_each(|(a, b)| *a -= wi * b);
                }
            }
            for (k, row) in after.chunks_exact_mut(m).enumerate() {
                let wi = self.w[r + 1 + k];
                if wi != 0.0 {
                    row.iter_mut().zip(prow.iter()).for_each(|(a, b)| *a -= wi * b);
                }
            }
        }
        let leaving = self.basis[r];
        self.is_basic[leaving] = false;
        self.is_basic[q] = true;
        self.basis[r] = q;
        self.pivots += 1;
        self.since_refactor += 1;
        if self.since_refactor >= self.opts.refactor_interval {
            self.refactor()?;
        }
        Ok(())
    }

    fn run(&mut self, phase: Phase) -> Result<(), LpError> {
        loop {
            if self.pivots >= self.opts.max_pivots {
                return Err(LpError::PivotLimit(self.opts.max_pivots));
            }
            if phase == Phase::Two
                && self.stall >= self.opts.bland_after
                && self.original_rhs.is_none()
                && self.opts.perturbation > 0.0
            {
                self.perturb();
                self.stall = 0;
            }
            let bland = self.stall >= self.opts.bland_after;
            if phase == Phase::One && self.infeasibility() <= 1e-2 * self.feas_tol() {
                return Ok(());
            }
            self.compute_duals(phase);
            let Some(q) = self.price(phase, bland) else {
                return Ok(());
            };
            let mut col = std::mem::take(&mut self.col);
            self.load_column(q, &mut col);
            self.ftran(&col);
            self.col = col;
            let Some((r, theta)) = self.ratio_test(phase, bland) else {
                if phase == Phase::Two {
                    self.status = Some(LpStatus::Unbounded { column: q });
                    return Ok(());
                }
                return Err(LpError::NumericalBreakdown("phase 1 ray".into()));
            };
            if self.w[r].abs() < self.opts.pivot_tol {
                return Err(LpError::NumericalBreakdown(format!("pivot {:.3e} below tolerance", self.w[r])));
            }
            // steps at rounding level count as degenerate
            if theta * self.d[q].abs() <= DEGENERATE_STEP {
                self.stall += 1;
            } else {
                self.stall = 0;
            }
            self.pivot(r, q, theta)?;
        }
    }

    fn finish(mut self) -> Result<LpSolution, LpError> {
        let status = self.status.clone().unwrap_or(LpStatus::Optimal);
        // optimality of the basis does not depend on the rhs
        if let Some(rhs) = self.original_rhs.take() {
            self.rhs = rhs;
            self.since_refactor = 1;
        }
        if status == LpStatus::Optimal && self.since_refactor > 0 {
            self.refactor()?;
        }
        let mut x = vec![0.0; self.n];
        for (i, &j) in self.basis.iter().enumerate() {
            if j < self.n {
                x[j] = self.xb[i].max(0.0);
            }
        }
        if status == LpStatus::Optimal {
            let res = self.p.residual_inf(&x);
            if res > self.feas_tol() {
                let most_negative = self.xb.iter().fold(0.0f64, |a, &b| a.min(b));
                return Err(LpError::NumericalBreakdown(format!(
                    "final residual {res:.3e} exceeds tolerance (most negative basic value {most_negative:.3e})"
                )));
            }
            self.compute_duals(Phase::Two);
        }
        let support = (0..self.n).filter(|&j| x[j] > self.opts.support_tol).collect();
        let basis = self.basis.iter().copied().filter(|&j| j < self.n).collect();
        Ok(LpSolution {
            objective_value: self.p.objective_value(&x),
            status,
            x,
            basis,
            support,
            duals: self.y.clone(),
            pivots: self.pivots,
            warm_started: self.warm,
        })
    }
}

/// Inverse of a dense row-major `m x m` matrix by LU with partial pivoting.
fn invert_dense(m: usize, a: &[f64]) -> Option<Vec<f64>> {
    let mut lu = a.to_vec();
    let mut perm: Vec<usize> = (0..m).collect();
    let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1e-300);
    for k in 0..m {
        let (p, pv) = (k..m).map(|i| (i, lu[i * m + k].abs())).fold((k, -1.0), |b, c| if c.1 > b.1 { c } else { b });
        if pv <= 1e-13 * scale {
            return None;
        }
        if p != k {
            for j in 0..m {
                lu.swap(k * m + j, p * m + j);
            }
            perm.swap(k, p);
        }
        let pivot = lu[k * m + k];
        for i in (k + 1)..m {
            let f = lu[i * m + k] / pivot;
            lu[i * m + k] = f;
            if f != 0.0 {
                for j in (k + 1)..m {
                    lu[i * m + j] -= f * lu[k * m + j];
                }
            }
        }
    }
    // Solve L U X = P for X column by column.
    let mut inv = vec![0.0; m * m];
    let mut col = vec![0.0; m];
    for c in 0..m {
        for i in 0..m {
            col[i] = if perm[i] == c { 1.0 } else { 0.0 };
        }
        for i in 0..m {
            let mut s = col[i];
            for j in 0..i {
                s -= lu[i * m + j] * col[j];
            }
            col[i] = s;
        }
        for i in (0..m).rev() {
            let mut s = col[i];
            for j in (i + 1)..m {
                s -= lu[i * m + j] * col[j];
            }
            col[i] = s / lu[i * m + i];
        }
        for i in 0..m {
            inv[i * m + c] = col[i];
        }
    }
    Some(inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> LpOptions {
        LpOptions::default()
    }

    #[test]
    fn single_constraint_min_first() {
        let p = LpProblem::new(1, 2, vec![1.0, 1.0], vec![1.0], vec![1.0, 0.0]).unwrap();
        let s = lp_solve(&p, &opts()).unwrap();
        assert!(s.is_optimal());
        assert!(s.x[0].abs() < 1e-12 && (s.x[1] - 1.0).abs() < 1e-12);
        assert!(s.objective_value.abs() < 1e-12);
        assert_eq!(s.support, vec![1]);
    }

    #[test]
    fn forced_objective() {
        let p = LpProblem::new(1, 2, vec![1.0, 1.0], vec![1.0], vec![1.0, 1.0]).unwrap();
        let s = lp_solve(&p, &opts()).unwrap();
        assert!((s.objective_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn slack_form_example() {
        // min -x1 - 2x2  s.t. x1 + x2 + s = 3. Basic feasible points:
        // (3,0,0) -> -3, (0,3,0) -> -6, (0,0,3) -> 0.
        let p = LpProblem::new(1, 3, vec![1.0, 1.0, 1.0], vec![3.0], vec![-1.0, -2.0, 0.0]).unwrap();
        let s = lp_solve(&p, &opts()).unwrap();
        assert!((s.objective_value + 6.0).abs() < 1e-12);
        assert!((s.x[1] - 3.0).abs() < 1e-12 && s.x[0].abs() < 1e-12 && s.x[2].abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        // x1 + x2 = -1 with x >= 0
        let p = LpProblem::new(1, 2, vec![1.0, 1.0], vec![-1.0], vec![0.0, 0.0]).unwrap();
        let s = lp_solve(&p, &opts()).unwrap();
        assert!(matches!(s.status, LpStatus::Infeasible { residual } if (residual - 1.0).abs() < 1e-12));
        // x1 - x2 = 1, min -x1
        let p = LpProblem::new(1, 2, vec![1.0, -1.0], vec![1.0], vec![-1.0, 0.0]).unwrap();
        let s = lp_solve(&p, &opts()).unwrap();
        assert!(matches!(s.status, LpStatus::Unbounded { column: 1 } | LpStatus::Unbounded { column: 0 }));
    }

    #[test]
    fn rejects_malformed() {
        assert!(LpProblem::new(1, 2, vec![1.0], vec![1.0], vec![0.0, 0.0]).is_err());
        assert!(LpProblem::new(1, 2, vec![1.0, f64::NAN], vec![1.0], vec![0.0, 0.0]).is_err());
        assert!(LpProblem::new(1, 2, vec![1.0, 1.0], vec![1.0, 2.0], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn redundant_rows_are_tolerated() {
        // second row duplicates the first
        let p = LpProblem::new(2, 3, vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0], vec![2.0, 2.0], vec![3.0, 1.0, 2.0]).unwrap();
        let s = lp_solve(&p, &opts()).unwrap();
        assert!(s.is_optimal());
        assert!((s.objective_value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn warm_start_from_optimal_basis_needs_no_pivots() {
        let p = LpProblem::new(
            2,
            4,
            vec![1.0, 2.0, 1.0, 0.0, 3.0, 1.0, 0.0, 1.0],
            vec![4.0, 6.0],
            vec![-1.0, -1.0, 0.0, 0.0],
        )
        .unwrap();
        let cold = lp_solve(&p, &opts()).unwrap();
        let warm = lp_warm_solve(&p, &cold.basis, &opts()).unwrap();
        assert!(warm.warm_started);
        assert_eq!(warm.pivots, 0);
        assert!((warm.objective_value - cold.objective_value).abs() < 1e-12);
    }

    #[test]
    fn dump_format() {
        let p = LpProblem::new(1, 2, vec![1.0, 0.5], vec![1.0], vec![0.0, 1.0]).unwrap();
        let mut buf = Vec::new();
        p.write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "# lp rows=1 cols=2\nrhs 1.0\n0 0.0 1.0\n1 1.0 0.5\n");
    }

    #[test]
    fn invert_dense_matches_identity() {
        let a = vec![4.0, 7.0, 2.0, 6.0];
        let inv = invert_dense(2, &a).unwrap();
        assert!((inv[0] - 0.6).abs() < 1e-14 && (inv[1] + 0.7).abs() < 1e-14);
        assert!((inv[2] + 0.2).abs() < 1e-14 && (inv[3] - 0.4).abs() < 1e-14);
        assert!(invert_dense(2, &[1.0, 2.0, 2.0, 4.0]).is_none());
    }
}
