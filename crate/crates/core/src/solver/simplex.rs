//! Two-phase primal simplex for the LP relaxations, with bounded variables
//! and a dense explicit basis inverse.
//!
//! Variable layout: structural columns, then one slack per row, then one
//! artificial per row. The initial basis is slacks where the slack bound can
//! absorb the residual and artificials elsewhere, so the starting inverse is
//! diagonal. Pricing is Dantzig with a Bland fallback that engages after a
//! run of degenerate pivots and disengages on progress, which is what keeps
//! the method from cycling.

use crate::error::{Error, Result};
use crate::ilp::Sense;

const INF: f64 = f64::INFINITY;

/// Constraint matrix and row data shared by every node of a search tree.
#[derive(Debug, Clone)]
pub(crate) struct LpMatrix {
    pub ncols: usize,
    pub nrows: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<u32>,
    pub val: Vec<f64>,
    pub sense: Vec<Sense>,
    pub rhs: Vec<f64>,
}

impl LpMatrix {
    pub fn from_rows(ncols: usize, rows: &[(Vec<(usize, f64)>, Sense, f64)]) -> Self {
        let nrows = rows.len();
        let mut counts = vec![0usize; ncols];
        for (terms, _, _) in rows {
            for &(c, _) in terms {
                counts[c] += 1;
            }
        }
        let mut col_ptr = vec![0usize; ncols + 1];
        for c in 0..ncols {
            col_ptr[c + 1] = col_ptr[c] + counts[c];
        }
        let nnz = col_ptr[ncols];
        let mut row_idx = vec![0u32; nnz];
        let mut val = vec![0f64; nnz];
        let mut cursor = col_ptr.clone();
        let mut sense = Vec::with_capacity(nrows);
        let mut rhs = Vec::with_capacity(nrows);
        for (r, (terms, s, b)) in rows.iter().enumerate() {
            sense.push(*s);
            rhs.push(*b);
            for &(c, v) in terms {
                let at = cursor[c];
                row_idx[at] = r as u32;
                val[at] = v;
                cursor[c] += 1;
            }
        }
        LpMatrix {
            ncols,
            nrows,
            col_ptr,
            row_idx,
            val,
            sense,
            rhs,
        }
    }

    fn col(&self, j: usize) -> (&[u32], &[f64]) {
        let lo = self.col_ptr[j];
        let hi = self.col_ptr[j + 1];
        (&self.row_idx[lo..hi], &self.val[lo..hi])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone)]
pub(crate) struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    /// Structural variable values (empty when infeasible).
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct SimplexParams {
    pub feas_tol: f64,
    pub cost_tol: f64,
    pub iter_limit: usize,
}

impl Default for SimplexParams {
    fn default() -> Self {
        SimplexParams {
            feas_tol: 1e-7,
            cost_tol: 1e-9,
            iter_limit: 200_000,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum VState {
    Basic,
    AtLower,
    AtUpper,
}

struct Tableau<'a> {
    mat: &'a LpMatrix,
    m: usize,
    /// total vars = ncols + m slacks + m artificials
    nvars: usize,
    lb: Vec<f64>,
    ub: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    state: Vec<VState>,
    basis: Vec<usize>,
    /// dense row-major m*m inverse of the basis
    binv: Vec<f64>,
    /// artificial sign (column is sign * e_i)
    art_sign: Vec<f64>,
    params: SimplexParams,
    iters: usize,
}

impl<'a> Tableau<'a> {
    fn slack(&self, i: usize) -> usize {
        self.mat.ncols + i
    }
    fn artificial(&self, i: usize) -> usize {
        self.mat.ncols + self.m + i
    }

    fn column_dot(&self, j: usize, y: &[f64]) -> f64 {
        let n = self.mat.ncols;
        if j < n {
            let (rows, vals) = self.mat.col(j);
            rows.iter()
                .zip(vals)
                .map(|(&r, &v)| v * y[r as usize])
                .sum()
        } else if j < n + self.m {
            y[j - n]
        } else {
            self.art_sign[j - n - self.m] * y[j - n - self.m]
        }
    }

    /// w = B^-1 * A_j
    fn ftran(&self, j: usize, w: &mut [f64]) {
        w.fill(0.0);
        let n = self.mat.ncols;
        let m = self.m;
        if j < n {
            let (rows, vals) = self.mat.col(j);
            for (&r, &v) in rows.iter().zip(vals) {
                let k = r as usize;
                // strided column walk of the row-major inverse
                let mut idx = k;
                for wi in w.iter_mut().take(m) {
                    *wi += v * self.binv[idx];
                    idx += m;
                }
            }
        } else {
            let (k, v) = if j < n + m {
                (j - n, 1.0)
            } else {
                (j - n - m, self.art_sign[j - n - m])
            };
            let mut idx = k;
            for wi in w.iter_mut().take(m) {
                *wi += v * self.binv[idx];
                idx += m;
            }
        }
    }

    /// y = c_B * B^-1, exploiting that few basic variables carry cost.
    fn btran_duals(&self, y: &mut [f64]) {
        y.fill(0.0);
        for (slot, &bv) in self.basis.iter().enumerate() {
            let c = self.cost[bv];
            if c != 0.0 {
                let row = &self.binv[slot * self.m..(slot + 1) * self.m];
                for (yi, &bi) in y.iter_mut().zip(row) {
                    *yi += c * bi;
                }
            }
        }
    }

    /// Recompute basic values from nonbasic bounds: x_B = B^-1 (b - A_N x_N).
    fn refresh_basics(&mut self) {
        let m = self.m;
        let n = self.mat.ncols;
        let mut r = self.mat.rhs.clone();
        for j in 0..self.nvars {
            if self.state[j] == VState::Basic {
                continue;
            }
            let xj = self.x[j];
            if xj == 0.0 {
                continue;
            }
            if j < n {
                let (rows, vals) = self.mat.col(j);
                for (&ri, &v) in rows.iter().zip(vals) {
                    r[ri as usize] -= v * xj;
                }
            } else if j < n + m {
                r[j - n] -= xj;
            } else {
                r[j - n - m] -= self.art_sign[j - n - m] * xj;
            }
        }
        for slot in 0..m {
            let row = &self.binv[slot * m..(slot + 1) * m];
            let v: f64 = row.iter().zip(&r).map(|(&a, &b)| a * b).sum();
            self.x[self.basis[slot]] = v;
        }
    }

    /// Rebuild the dense inverse from the basis columns by Gauss-Jordan.
    fn reinvert(&mut self) -> Result<()> {
        let m = self.m;
        let n = self.mat.ncols;
        let mut b = vec![0.0; m * m];
        for (slot, &bv) in self.basis.iter().enumerate() {
            if bv < n {
                let (rows, vals) = self.mat.col(bv);
                for (&r, &v) in rows.iter().zip(vals) {
                    b[r as usize * m + slot] = v;
                }
            } else if bv < n + m {
                b[(bv - n) * m + slot] = 1.0;
            } else {
                b[(bv - n - m) * m + slot] = self.art_sign[bv - n - m];
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let mut piv_row = col;
            let mut piv_abs = b[col * m + col].abs();
            for r in (col + 1)..m {
                let a = b[r * m + col].abs();
                if a > piv_abs {
                    piv_abs = a;
                    piv_row = r;
                }
            }
            if piv_abs < 1e-12 {
                return Err(Error::Solver("singular basis during reinversion".into()));
            }
            if piv_row != col {
                for k in 0..m {
                    b.swap(col * m + k, piv_row * m + k);
                    inv.swap(col * m + k, piv_row * m + k);
                }
            }
            let piv = b[col * m + col];
            for k in 0..m {
                b[col * m + k] /= piv;
                inv[col * m + k] /= piv;
            }
            for r in 0..m {
                if r == col {
                    continue;
                }
                let f = b[r * m + col];
                if f != 0.0 {
                    for k in 0..m {
                        b[r * m + k] -= f * b[col * m + k];
                        inv[r * m + k] -= f * inv[col * m + k];
                    }
                }
            }
        }
        self.binv = inv;
        Ok(())
    }

    fn objective(&self) -> f64 {
        (0..self.nvars).map(|j| self.cost[j] * self.x[j]).sum()
    }

    /// One phase of the simplex loop over the current cost vector.
    fn optimize(&mut self) -> Result<()> {
        let m = self.m;
        let mut y = vec![0.0; m];
        let mut w = vec![0.0; m];
        let mut bland = false;
        let mut degen_run = 0usize;
        let mut last_obj = self.objective();

        loop {
            self.iters += 1;
            if self.iters > self.params.iter_limit {
                return Err(Error::Solver(format!(
                    "simplex iteration limit {} exceeded",
                    self.params.iter_limit
                )));
            }
            if self.iters % 512 == 0 {
                self.refresh_basics();
            }

            self.btran_duals(&mut y);

            // entering variable
            let mut enter: Option<(usize, f64, bool)> = None; // (var, viol, from_lower)
            for j in 0..self.nvars {
                let st = self.state[j];
                if st == VState::Basic || self.lb[j] == self.ub[j] {
                    continue;
                }
                let d = self.cost[j] - self.column_dot(j, &y);
                let (viol, from_lower) = match st {
                    VState::AtLower => (-d, true),
                    VState::AtUpper => (d, false),
                    VState::Basic => unreachable!(),
                };
                if viol > self.params.cost_tol {
                    if bland {
                        enter = Some((j, viol, from_lower));
                        break;
                    }
                    match enter {
                        Some((_, best, _)) if best >= viol => {}
                        _ => enter = Some((j, viol, from_lower)),
                    }
                }
            }
            let Some((j_in, _, from_lower)) = enter else {
                return Ok(()); // optimal for this phase
            };

            self.ftran(j_in, &mut w);
            let dir = if from_lower { 1.0 } else { -1.0 };

            // ratio test: entering moves by t >= 0, basics move by -dir*t*w
            let range = self.ub[j_in] - self.lb[j_in];
            let mut t_best = range; // bound flip
            let mut leave_slot: Option<usize> = None;
            let mut leave_to_upper = false;
            let piv_tol = 1e-9;
            for slot in 0..m {
                let wd = dir * w[slot];
                let bv = self.basis[slot];
                let (limit, to_upper) = if wd > piv_tol {
                    if self.lb[bv] == -INF {
                        continue;
                    }
                    ((self.x[bv] - self.lb[bv]) / wd, false)
                } else if wd < -piv_tol {
                    if self.ub[bv] == INF {
                        continue;
                    }
                    ((self.ub[bv] - self.x[bv]) / -wd, true)
                } else {
                    continue;
                };
                let limit = limit.max(0.0);
                let better = match leave_slot {
                    None => limit < t_best - 1e-12,
                    Some(cur) => {
                        limit < t_best - 1e-12
                            || (limit <= t_best + 1e-12 && {
                                if bland {
                                    bv < self.basis[cur]
                                } else {
                                    wd.abs() > (dir * w[cur]).abs()
                                }
                            })
                    }
                };
                if better {
                    t_best = limit;
                    leave_slot = Some(slot);
                    leave_to_upper = to_upper;
                }
            }

            if t_best == INF {
                return Err(Error::Solver("unbounded LP direction".into()));
            }
            let t = t_best.max(0.0);

            // apply the step
            if t != 0.0 {
                for slot in 0..m {
                    let wv = w[slot];
                    if wv != 0.0 {
                        let bv = self.basis[slot];
                        self.x[bv] -= dir * t * wv;
                    }
                }
            }

            match leave_slot {
                None => {
                    // bound flip: entering variable crosses its range
                    self.x[j_in] = if from_lower { self.ub[j_in] } else { self.lb[j_in] };
                    self.state[j_in] = if from_lower { VState::AtUpper } else { VState::AtLower };
                }
                Some(slot) => {
                    let j_out = self.basis[slot];
                    self.x[j_in] = if from_lower {
                        self.lb[j_in] + t
                    } else {
                        self.ub[j_in] - t
                    };
                    self.x[j_out] = if leave_to_upper { self.ub[j_out] } else { self.lb[j_out] };
                    self.state[j_out] = if leave_to_upper { VState::AtUpper } else { VState::AtLower };
                    self.state[j_in] = VState::Basic;
                    self.basis[slot] = j_in;

                    // eta update of the inverse
                    let piv = w[slot];
                    if piv.abs() < 1e-11 {
                        // refuse a hopeless pivot; rebuild and retry cleanly
                        self.basis[slot] = j_out;
                        self.state[j_out] = VState::Basic;
                        self.state[j_in] = if from_lower { VState::AtLower } else { VState::AtUpper };
                        self.x[j_in] = if from_lower { self.lb[j_in] } else { self.ub[j_in] };
                        self.reinvert()?;
                        self.refresh_basics();
                        continue;
                    }
                    let (head, tail) = self.binv.split_at_mut(slot * m);
                    let (prow, rest) = tail.split_at_mut(m);
                    let inv_piv = 1.0 / piv;
                    for p in prow.iter_mut() {
                        *p *= inv_piv;
                    }
                    for (i, chunk) in head.chunks_exact_mut(m).enumerate() {
                        let f = w[i];
                        if f != 0.0 {
                            for (c, &p) in chunk.iter_mut().zip(prow.iter()) {
                                *c -= f * p;
                            }
                        }
                    }
                    for (off, chunk) in rest.chunks_exact_mut(m).enumerate() {
                        let f = w[slot + 1 + off];
                        if f != 0.0 {
                            for (c, &p) in chunk.iter_mut().zip(prow.iter()) {
                                *c -= f * p;
                            }
                        }
                    }
                }
            }

            // Bland fallback bookkeeping
            let obj = self.objective();
            if obj < last_obj - 1e-10 * (1.0 + last_obj.abs()) {
                degen_run = 0;
                bland = false;
                last_obj = obj;
            } else {
                degen_run += 1;
                if degen_run > 2 * (m + 64) {
                    bland = true;
                }
            }
        }
    }
}

/// Solve min cost*x over the matrix rows with the given variable bounds.
/// `hint` seeds each structural variable at the bound nearest the hinted
/// value, which collapses phase 1 when the hint is close to feasible.
pub(crate) fn solve_lp(
    mat: &LpMatrix,
    cost: &[f64],
    lb: &[f64],
    ub: &[f64],
    hint: Option<&[f64]>,
    params: SimplexParams,
) -> Result<LpSolution> {
    let n = mat.ncols;
    let m = mat.nrows;
    debug_assert_eq!(cost.len(), n);

    let nvars = n + 2 * m;
    let mut t = Tableau {
        mat,
        m,
        nvars,
        lb: vec![0.0; nvars],
        ub: vec![0.0; nvars],
        cost: vec![0.0; nvars],
        x: vec![0.0; nvars],
        state: vec![VState::AtLower; nvars],
        basis: Vec::with_capacity(m),
        binv: vec![0.0; m * m],
        art_sign: vec![1.0; m],
        params,
        iters: 0,
    };
    t.lb[..n].copy_from_slice(lb);
    t.ub[..n].copy_from_slice(ub);
    for i in 0..m {
        let (slo, shi) = match mat.sense[i] {
            Sense::Le => (0.0, INF),
            Sense::Eq => (0.0, 0.0),
            Sense::Ge => (-INF, 0.0),
        };
        let s = t.slack(i);
        t.lb[s] = slo;
        t.ub[s] = shi;
        let a = t.artificial(i);
        t.lb[a] = 0.0;
        t.ub[a] = 0.0;
    }

    // structural variables start at their lower bound, or at the bound
    // nearest the hint when one is given
    for j in 0..n {
        let mut at_upper = false;
        if let Some(h) = hint {
            let hv = h[j].clamp(lb[j], ub[j]);
            at_upper = ub[j].is_finite() && (hv - lb[j]).abs() > (ub[j] - hv).abs();
        }
        if at_upper {
            t.x[j] = ub[j];
            t.state[j] = VState::AtUpper;
        } else {
            t.x[j] = lb[j];
            t.state[j] = VState::AtLower;
        }
    }

    // initial basis: absorbing slack where possible, else artificial
    let mut residual = mat.rhs.clone();
    for j in 0..n {
        if t.x[j] != 0.0 {
            let (rows, vals) = mat.col(j);
            for (&r, &v) in rows.iter().zip(vals) {
                residual[r as usize] -= v * t.x[j];
            }
        }
    }
    let mut need_phase1 = false;
    for i in 0..m {
        let s = t.slack(i);
        let r = residual[i];
        if r >= t.lb[s] - 1e-12 && r <= t.ub[s] + 1e-12 {
            t.basis.push(s);
            t.state[s] = VState::Basic;
            t.x[s] = r;
            t.binv[i * m + i] = 1.0;
        } else {
            let s0 = r.clamp(t.lb[s], t.ub[s]);
            t.x[s] = s0;
            t.state[s] = if s0 == t.lb[s] { VState::AtLower } else { VState::AtUpper };
            let a = t.artificial(i);
            let sign = if r - s0 >= 0.0 { 1.0 } else { -1.0 };
            t.art_sign[i] = sign;
            t.ub[a] = INF;
            t.x[a] = (r - s0).abs();
            t.basis.push(a);
            t.state[a] = VState::Basic;
            t.binv[i * m + i] = sign; // inverse of the diagonal +-1 column
            need_phase1 = true;
        }
    }

    if need_phase1 {
        for i in 0..m {
            let a = t.artificial(i);
            if t.ub[a] == INF {
                t.cost[a] = 1.0;
            }
        }
        t.optimize()?;
        let infeas: f64 = (0..m)
            .map(|i| {
                let a = t.artificial(i);
                t.x[a].abs()
            })
            .sum();
        if infeas > params.feas_tol.max(1e-7) {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                objective: f64::INFINITY,
                x: Vec::new(),
            });
        }
        // freeze artificials at zero
        for i in 0..m {
            let a = t.artificial(i);
            t.cost[a] = 0.0;
            t.ub[a] = 0.0;
            if t.state[a] != VState::Basic {
                t.x[a] = 0.0;
                t.state[a] = VState::AtLower;
            }
        }
    }

    for j in 0..n {
        t.cost[j] = cost[j];
    }
    for i in 0..m {
        let s = t.slack(i);
        t.cost[s] = 0.0;
    }
    t.optimize()?;
    t.refresh_basics();

    let objective = (0..n).map(|j| cost[j] * t.x[j]).sum();
    let mut x = vec![0.0; n];
    x.copy_from_slice(&t.x[..n]);
    // clamp structural values into their boxes to shed drift
    for j in 0..n {
        x[j] = x[j].clamp(lb[j], ub[j]);
    }
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective,
        x,
    })
}
