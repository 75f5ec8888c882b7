//! Bounded revised simplex over `A x - s = 0` with one logical `s_i` per row.
//!
//! Structural columns are scaled geometrically (powers of two). The primal
//! method (composite phase 1, then phase 2) solves cold starts; the dual
//! method re-optimizes after bound changes from a dual feasible basis, which
//! is how branch-and-bound children are warm-started.

use std::sync::Arc;

use super::lu::Lu;
use super::model::Model;

pub const PRIMAL_TOL: f64 = 1e-7;
pub const DUAL_TOL: f64 = 1e-9;
/// Reduced costs this small after refactoring are roundoff, not progress.
const VERIFY_DUAL_TOL: f64 = 1e-7;
const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 64;
const DEGENERATE_LIMIT: usize = 60;
const NIL: usize = usize::MAX;

const BASIC: u8 = 0;
const LOWER: u8 = 1;
const UPPER: u8 = 2;
const FREE: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

/// Scaled constraint data shared by all simplex instances of one model.
#[derive(Debug)]
pub struct LpData {
    pub n: usize,
    pub m: usize,
    cols: Vec<Vec<(usize, f64)>>,
    rows: Vec<Vec<(usize, f64)>>,
    cost: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    col_scale: Vec<f64>,
    row_scale: Vec<f64>,
    obj_offset: f64,
}

fn pow2(v: f64) -> f64 {
    if !v.is_finite() || v <= 0.0 {
        return 1.0;
    }
    2f64.powi(v.log2().round().clamp(-60.0, 60.0) as i32)
}

impl LpData {
    /// Builds scaled data from `model`, using `lo`/`hi` as structural bounds.
    pub fn new(model: &Model, lo: &[f64], hi: &[f64]) -> LpData {
        let n = model.num_vars();
        let m = model.num_cons();
        let mut row_scale = vec![1.0; m];
        let mut col_scale = vec![1.0; n];
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, c) in model.cons.iter().enumerate() {
            for &(j, a) in &c.coeffs {
                cols[j].push((i, a));
            }
        }
        for _ in 0..8 {
            for (i, c) in model.cons.iter().enumerate() {
                let (mut mn, mut mx) = (f64::INFINITY, 0.0f64);
                for &(j, a) in &c.coeffs {
                    let v = (a * col_scale[j]).abs();
                    mn = mn.min(v);
                    mx = mx.max(v);
                }
                if mx > 0.0 {
                    row_scale[i] = pow2(1.0 / (mn * mx).sqrt());
                }
            }
            for (j, col) in cols.iter().enumerate() {
                let (mut mn, mut mx) = (f64::INFINITY, 0.0f64);
                for &(i, a) in col {
                    let v = (a * row_scale[i]).abs();
                    mn = mn.min(v);
                    mx = mx.max(v);
                }
                if mx > 0.0 {
                    col_scale[j] = pow2(1.0 / (mn * mx).sqrt());
                }
            }
        }
        for (j, col) in cols.iter_mut().enumerate() {
            for e in col.iter_mut() {
                e.1 *= row_scale[e.0] * col_scale[j];
            }
        }
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
        for (j, col) in cols.iter().enumerate() {
            for &(i, a) in col {
                rows[i].push((j, a));
            }
        }
        let mut cost = vec![0.0; n + m];
        let mut slo = vec![0.0; n + m];
        let mut shi = vec![0.0; n + m];
        for j in 0..n {
            cost[j] = model.objective[j] * col_scale[j];
            slo[j] = lo[j] / col_scale[j];
            shi[j] = hi[j] / col_scale[j];
        }
        for (i, c) in model.cons.iter().enumerate() {
            let (l, h) = c.row_bounds();
            slo[n + i] = l * row_scale[i];
            shi[n + i] = h * row_scale[i];
        }
        LpData {
            n,
            m,
            cols,
            rows,
            cost,
            lo: slo,
            hi: shi,
            col_scale,
            row_scale,
            obj_offset: model.obj_offset,
        }
    }
}

/// Basis description that can be stored per branch-and-bound node.
#[derive(Debug, Clone)]
pub struct Basis {
    state: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct Simplex {
    data: Arc<LpData>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
    head: Vec<usize>,
    pos: Vec<usize>,
    state: Vec<u8>,
    lu: Lu,
    dj: Vec<f64>,
    dirty: bool,
    pub iterations: usize,
    degenerate_run: usize,
}

impl Simplex {
    pub fn new(data: Arc<LpData>) -> Simplex {
        let n = data.n;
        let m = data.m;
        let lo = data.lo.clone();
        let hi = data.hi.clone();
        let mut s = Simplex {
            x: vec![0.0; n + m],
            head: (n..n + m).collect(),
            pos: vec![NIL; n + m],
            state: vec![LOWER; n + m],
            lu: Lu::default(),
            dj: vec![0.0; n + m],
            dirty: true,
            iterations: 0,
            degenerate_run: 0,
            data,
            lo,
            hi,
        };
        for (p, &j) in s.head.iter().enumerate() {
            s.pos[j] = p;
            s.state[j] = BASIC;
        }
        for j in 0..n {
            s.place_nonbasic(j);
        }
        s
    }

    pub fn data(&self) -> &Arc<LpData> {
        &self.data
    }

    fn place_nonbasic(&mut self, j: usize) {
        let (l, h) = (self.lo[j], self.hi[j]);
        let (st, v) = if l.is_finite() && h.is_finite() {
            if self.state[j] == UPPER {
                (UPPER, h)
            } else {
                (LOWER, l)
            }
        } else if l.is_finite() {
            (LOWER, l)
        } else if h.is_finite() {
            (UPPER, h)
        } else {
            (FREE, 0.0)
        };
        self.state[j] = st;
        self.x[j] = v;
    }

    /// Sets bounds of structural variable `j` (unscaled units).
    pub fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        let s = self.data.col_scale[j];
        self.lo[j] = lo / s;
        self.hi[j] = hi / s;
        if self.state[j] != BASIC {
            self.place_nonbasic(j);
        }
        self.dirty = true;
    }

    pub fn bounds(&self, j: usize) -> (f64, f64) {
        let s = self.data.col_scale[j];
        (self.lo[j] * s, self.hi[j] * s)
    }

    pub fn reset_bounds(&mut self) {
        self.lo.copy_from_slice(&self.data.lo);
        self.hi.copy_from_slice(&self.data.hi);
        for j in 0..self.data.n + self.data.m {
            if self.state[j] != BASIC {
                self.place_nonbasic(j);
            }
        }
        self.dirty = true;
    }

    pub fn basis(&self) -> Basis {
        Basis {
            state: self.state.clone(),
        }
    }

    pub fn load_basis(&mut self, b: &Basis) {
        let nm = self.data.n + self.data.m;
        let basic: Vec<usize> = (0..nm).filter(|&j| b.state[j] == BASIC).collect();
        if basic.len() != self.data.m {
            return;
        }
        self.state.copy_from_slice(&b.state);
        self.head = basic;
        self.pos.iter_mut().for_each(|p| *p = NIL);
        for (p, &j) in self.head.iter().enumerate() {
            self.pos[j] = p;
        }
        for j in 0..nm {
            if self.state[j] != BASIC {
                self.place_nonbasic(j);
            }
        }
        self.dirty = true;
    }

    fn column(&self, j: usize, out: &mut [f64]) {
        let n = self.data.n;
        if j < n {
            for &(i, a) in &self.data.cols[j] {
                out[i] = a;
            }
        } else {
            out[j - n] = -1.0;
        }
    }

    fn refactor(&mut self) {
        let n = self.data.n;
        let m = self.data.m;
        loop {
            let cols: Vec<Vec<(usize, f64)>> = self
                .head
                .iter()
                .map(|&j| {
                    if j < n {
                        self.data.cols[j].clone()
                    } else {
                        vec![(j - n, -1.0)]
                    }
                })
                .collect();
            match Lu::factorize(m, &cols) {
                Ok(lu) => {
                    self.lu = lu;
                    return;
                }
                Err(sing) => {
                    for (&p, &r) in sing.positions.iter().zip(&sing.rows) {
                        let old = self.head[p];
                        let newv = n + r;
                        if self.state[newv] == BASIC {
                            continue;
                        }
                        self.state[old] = LOWER;
                        self.pos[old] = NIL;
                        self.place_nonbasic(old);
                        self.head[p] = newv;
                        self.pos[newv] = p;
                        self.state[newv] = BASIC;
                    }
                }
            }
        }
    }

    fn compute_x(&mut self) {
        let n = self.data.n;
        let m = self.data.m;
        let mut rhs = vec![0.0; m];
        for j in 0..n + m {
            if self.state[j] == BASIC || self.x[j] == 0.0 {
                continue;
            }
            let v = self.x[j];
            if j < n {
                for &(i, a) in &self.data.cols[j] {
                    rhs[i] -= a * v;
                }
            } else {
                rhs[j - n] += v;
            }
        }
        let xb = self.lu.ftran(&mut rhs);
        for (p, &j) in self.head.iter().enumerate() {
            self.x[j] = xb[p];
        }
    }

    fn compute_duals(&mut self, cost: &[f64]) -> Vec<f64> {
        let n = self.data.n;
        let m = self.data.m;
        let mut cb: Vec<f64> = self.head.iter().map(|&j| cost[j]).collect();
        let y = self.lu.btran(&mut cb);
        for j in 0..n + m {
            if self.state[j] == BASIC {
                self.dj[j] = 0.0;
            } else if j < n {
                let mut d = cost[j];
                for &(i, a) in &self.data.cols[j] {
                    d -= y[i] * a;
                }
                self.dj[j] = d;
            } else {
                self.dj[j] = cost[j] + y[j - n];
            }
        }
        y
    }

    fn fresh(&mut self) {
        self.refactor();
        self.compute_x();
        let cost = self.data.cost.clone();
        self.compute_duals(&cost);
        self.dirty = false;
    }

    fn ftran_col(&self, j: usize) -> Vec<f64> {
        let mut col = vec![0.0; self.data.m];
        self.column(j, &mut col);
        self.lu.ftran(&mut col)
    }

    fn pivot_row(&self, r: usize) -> Vec<f64> {
        let n = self.data.n;
        let m = self.data.m;
        let mut e = vec![0.0; m];
        e[r] = 1.0;
        let rho = self.lu.btran(&mut e);
        let mut alpha = vec![0.0; n + m];
        for (i, &ri) in rho.iter().enumerate() {
            if ri != 0.0 {
                for &(j, a) in &self.data.rows[i] {
                    alpha[j] += ri * a;
                }
                alpha[n + i] = -ri;
            }
        }
        alpha
    }

    fn replace(&mut self, r: usize, q: usize, alpha_q: &[f64], leave_state: u8) {
        let p = self.head[r];
        self.state[p] = leave_state;
        self.pos[p] = NIL;
        self.head[r] = q;
        self.pos[q] = r;
        self.state[q] = BASIC;
        self.lu.update(r, alpha_q);
    }

    fn infeasibility(&self, j: usize) -> f64 {
        let v = self.x[j];
        if v < self.lo[j] - PRIMAL_TOL {
            self.lo[j] - v
        } else if v > self.hi[j] + PRIMAL_TOL {
            v - self.hi[j]
        } else {
            0.0
        }
    }

    fn primal_infeasible(&self) -> bool {
        self.head.iter().any(|&j| self.infeasibility(j) > 0.0)
    }

    fn dual_infeasible_count(&mut self, repair: bool) -> usize {
        self.dual_infeasible_within(repair, DUAL_TOL)
    }

    fn dual_infeasible_within(&mut self, repair: bool, tol: f64) -> usize {
        let nm = self.data.n + self.data.m;
        let mut bad = 0;
        let mut flipped = false;
        for j in 0..nm {
            let st = self.state[j];
            if st == BASIC || self.lo[j] == self.hi[j] {
                continue;
            }
            let d = self.dj[j];
            let wrong = match st {
                LOWER => d < -tol,
                UPPER => d > tol,
                _ => d.abs() > tol,
            };
            if !wrong {
                continue;
            }
            let boxed = self.lo[j].is_finite() && self.hi[j].is_finite();
            if repair && boxed {
                if st == LOWER {
                    self.state[j] = UPPER;
                    self.x[j] = self.hi[j];
                } else {
                    self.state[j] = LOWER;
                    self.x[j] = self.lo[j];
                }
                flipped = true;
            } else {
                bad += 1;
            }
        }
        if flipped {
            self.compute_x();
        }
        bad
    }

    /// Re-optimizes from the current basis.
    pub fn solve(&mut self, max_iter: usize) -> LpStatus {
        let start = self.iterations;
        for _round in 0..4 {
            if self.dirty || self.lu.num_updates() > 0 {
                self.fresh();
            }
            let status = if self.primal_infeasible() && self.dual_infeasible_count(true) == 0 {
                self.dual(start + max_iter)
            } else {
                self.primal(start + max_iter)
            };
            match status {
                LpStatus::Optimal => {
                    self.fresh();
                    if !self.primal_infeasible() && self.dual_infeasible_within(false, VERIFY_DUAL_TOL) == 0 {
                        return LpStatus::Optimal;
                    }
                }
                LpStatus::Infeasible => {
                    // confirm from a fresh factorization with the primal method
                    self.fresh();
                    if self.primal(start + max_iter) == LpStatus::Infeasible {
                        return LpStatus::Infeasible;
                    }
                }
                other => return other,
            }
        }
        LpStatus::IterationLimit
    }

    fn primal(&mut self, limit: usize) -> LpStatus {
        let n = self.data.n;
        let m = self.data.m;
        let mut cost = vec![0.0; n + m];
        loop {
            if self.iterations >= limit {
                return LpStatus::IterationLimit;
            }
            if self.lu.num_updates() >= REFACTOR_EVERY {
                self.refactor();
                self.compute_x();
            }
            let phase1 = self.primal_infeasible();
            if phase1 {
                cost.iter_mut().for_each(|c| *c = 0.0);
                for &j in &self.head {
                    let v = self.x[j];
                    if v < self.lo[j] - PRIMAL_TOL {
                        cost[j] = -1.0;
                    } else if v > self.hi[j] + PRIMAL_TOL {
                        cost[j] = 1.0;
                    }
                }
            } else {
                cost.copy_from_slice(&self.data.cost);
            }
            self.compute_duals(&cost);

            let bland = self.degenerate_run > DEGENERATE_LIMIT;
            let mut q = NIL;
            let mut best = 0.0;
            for j in 0..n + m {
                let st = self.state[j];
                if st == BASIC || self.lo[j] == self.hi[j] {
                    continue;
                }
                let d = self.dj[j];
                let score = match st {
                    LOWER if d < -DUAL_TOL => -d,
                    UPPER if d > DUAL_TOL => d,
                    FREE if d.abs() > DUAL_TOL => d.abs(),
                    _ => continue,
                };
                if bland {
                    q = j;
                    break;
                }
                if score > best {
                    best = score;
                    q = j;
                }
            }
            if q == NIL {
                return if phase1 {
                    LpStatus::Infeasible
                } else {
                    LpStatus::Optimal
                };
            }
            let dir = if self.dj[q] < 0.0 { 1.0 } else { -1.0 };
            let alpha = self.ftran_col(q);

            // Harris two-pass ratio test; infeasible basics stop at the bound
            // they violate.
            let mut tmax = f64::INFINITY;
            for (p, &j) in self.head.iter().enumerate() {
                let a = alpha[p];
                if a.abs() < PIVOT_TOL {
                    continue;
                }
                let rate = -dir * a;
                let v = self.x[j];
                let (l, h) = (self.lo[j], self.hi[j]);
                let lim = if v < l - PRIMAL_TOL {
                    if rate > 0.0 {
                        (l - v) / rate
                    } else {
                        continue;
                    }
                } else if v > h + PRIMAL_TOL {
                    if rate < 0.0 {
                        (v - h) / -rate
                    } else {
                        continue;
                    }
                } else if rate < 0.0 {
                    if l.is_finite() {
                        (v - l + PRIMAL_TOL) / -rate
                    } else {
                        continue;
                    }
                } else if h.is_finite() {
                    (h - v + PRIMAL_TOL) / rate
                } else {
                    continue;
                };
                tmax = tmax.min(lim);
            }
            let span = self.hi[q] - self.lo[q];
            let mut r = NIL;
            let mut leave_state = LOWER;
            let mut t = f64::INFINITY;
            if tmax.is_finite() {
                let mut best_a = 0.0;
                for (p, &j) in self.head.iter().enumerate() {
                    let a = alpha[p];
                    if a.abs() < PIVOT_TOL {
                        continue;
                    }
                    let rate = -dir * a;
                    let v = self.x[j];
                    let (l, h) = (self.lo[j], self.hi[j]);
                    let (exact, st) = if v < l - PRIMAL_TOL {
                        if rate > 0.0 {
                            ((l - v) / rate, LOWER)
                        } else {
                            continue;
                        }
                    } else if v > h + PRIMAL_TOL {
                        if rate < 0.0 {
                            ((v - h) / -rate, UPPER)
                        } else {
                            continue;
                        }
                    } else if rate < 0.0 {
                        if l.is_finite() {
                            (((v - l) / -rate).max(0.0), LOWER)
                        } else {
                            continue;
                        }
                    } else if h.is_finite() {
                        (((h - v) / rate).max(0.0), UPPER)
                    } else {
                        continue;
                    };
                    if exact <= tmax {
                        let better = if bland {
                            r == NIL || j < self.head[r]
                        } else {
                            a.abs() > best_a
                        };
                        if better {
                            best_a = a.abs();
                            r = p;
                            t = exact;
                            leave_state = st;
                        }
                    }
                }
            }
            if span.is_finite() && span <= t {
                // bound flip of the entering variable
                let delta = dir * span;
                for (p, &j) in self.head.iter().enumerate() {
                    self.x[j] -= delta * alpha[p];
                }
                if self.state[q] == LOWER {
                    self.state[q] = UPPER;
                    self.x[q] = self.hi[q];
                } else {
                    self.state[q] = LOWER;
                    self.x[q] = self.lo[q];
                }
                self.iterations += 1;
                self.degenerate_run = 0;
                continue;
            }
            if r == NIL {
                if phase1 {
                    // cannot happen for a bounded phase-1 direction; refresh
                    self.fresh();
                    self.iterations += 1;
                    continue;
                }
                return LpStatus::Unbounded;
            }
            if t < 1e-12 {
                self.degenerate_run += 1;
            } else {
                self.degenerate_run = 0;
            }
            let delta = dir * t;
            for (p, &j) in self.head.iter().enumerate() {
                self.x[j] -= delta * alpha[p];
            }
            self.x[q] += delta;
            let leaving = self.head[r];
            self.x[leaving] = if leave_state == LOWER {
                self.lo[leaving]
            } else {
                self.hi[leaving]
            };
            self.replace(r, q, &alpha, leave_state);
            self.iterations += 1;
        }
    }

    fn dual(&mut self, limit: usize) -> LpStatus {
        let n = self.data.n;
        let m = self.data.m;
        loop {
            if self.iterations >= limit {
                return LpStatus::IterationLimit;
            }
            if self.lu.num_updates() >= REFACTOR_EVERY {
                self.refactor();
                self.compute_x();
                let cost = self.data.cost.clone();
                self.compute_duals(&cost);
                if self.dual_infeasible_count(true) > 0 {
                    return self.primal(limit);
                }
            }
            let bland = self.degenerate_run > DEGENERATE_LIMIT;
            let mut r = NIL;
            let mut worst = 0.0;
            for (p, &j) in self.head.iter().enumerate() {
                let inf = self.infeasibility(j);
                if inf <= 0.0 {
                    continue;
                }
                if bland {
                    if r == NIL || j < self.head[r] {
                        r = p;
                    }
                } else if inf > worst {
                    worst = inf;
                    r = p;
                }
            }
            if r == NIL {
                return LpStatus::Optimal;
            }
            let p_var = self.head[r];
            let to_lower = self.x[p_var] < self.lo[p_var];
            let s = if to_lower { 1.0 } else { -1.0 };
            let alpha_r = self.pivot_row(r);

            let mut tmax = f64::INFINITY;
            for j in 0..n + m {
                let st = self.state[j];
                if st == BASIC || self.lo[j] == self.hi[j] {
                    continue;
                }
                let a = alpha_r[j];
                if a.abs() < PIVOT_TOL {
                    continue;
                }
                let ok = match st {
                    LOWER => s * a < 0.0,
                    UPPER => s * a > 0.0,
                    _ => true,
                };
                if ok {
                    tmax = tmax.min((self.dj[j].abs() + DUAL_TOL) / a.abs());
                }
            }
            if !tmax.is_finite() {
                return LpStatus::Infeasible;
            }
            let mut q = NIL;
            let mut best_a = 0.0;
            for j in 0..n + m {
                let st = self.state[j];
                if st == BASIC || self.lo[j] == self.hi[j] {
                    continue;
                }
                let a = alpha_r[j];
                if a.abs() < PIVOT_TOL {
                    continue;
                }
                let ok = match st {
                    LOWER => s * a < 0.0,
                    UPPER => s * a > 0.0,
                    _ => true,
                };
                if !ok || self.dj[j].abs() / a.abs() > tmax {
                    continue;
                }
                let better = if bland { q == NIL } else { a.abs() > best_a };
                if better {
                    best_a = a.abs();
                    q = j;
                }
            }
            let alpha_q = self.ftran_col(q);
            let arq = alpha_q[r];
            if arq.abs() < PIVOT_TOL || (arq - alpha_r[q]).abs() > 1e-6 * (1.0 + arq.abs()) {
                // factorization drifted; rebuild and retry
                self.refactor();
                self.compute_x();
                let cost = self.data.cost.clone();
                self.compute_duals(&cost);
                self.iterations += 1;
                continue;
            }
            let theta_d = self.dj[q] / arq;
            for j in 0..n + m {
                if self.state[j] != BASIC && alpha_r[j] != 0.0 {
                    self.dj[j] -= theta_d * alpha_r[j];
                }
            }
            self.dj[q] = 0.0;
            self.dj[p_var] = -theta_d;

            let target = if to_lower {
                self.lo[p_var]
            } else {
                self.hi[p_var]
            };
            let theta_p = (self.x[p_var] - target) / arq;
            if theta_p.abs() < 1e-12 {
                self.degenerate_run += 1;
            } else {
                self.degenerate_run = 0;
            }
            for (pp, &j) in self.head.iter().enumerate() {
                self.x[j] -= theta_p * alpha_q[pp];
            }
            self.x[q] += theta_p;
            self.x[p_var] = target;
            let leave_state = if to_lower { LOWER } else { UPPER };
            self.replace(r, q, &alpha_q, leave_state);
            self.iterations += 1;
        }
    }

    /// Structural values in unscaled units.
    pub fn values(&self) -> Vec<f64> {
        (0..self.data.n)
            .map(|j| self.x[j] * self.data.col_scale[j])
            .collect()
    }

    pub fn objective(&self) -> f64 {
        let n = self.data.n;
        let mut z = self.data.obj_offset;
        for j in 0..n {
            z += self.data.cost[j] * self.x[j];
        }
        z
    }

    /// Row multipliers `y` (unscaled) with reduced costs `c - Aᵀy`.
    pub fn row_duals(&mut self) -> Vec<f64> {
        let cost = self.data.cost.clone();
        let y = self.compute_duals(&cost);
        y.iter()
            .zip(&self.data.row_scale)
            .map(|(v, s)| v * s)
            .collect()
    }
}

/// Solves the continuous relaxation of `model` from a slack basis.
pub fn solve_relaxation(model: &Model, max_iter: usize) -> (LpStatus, Simplex) {
    let lo: Vec<f64> = model.vars.iter().map(|v| v.lower).collect();
    let hi: Vec<f64> = model.vars.iter().map(|v| v.upper).collect();
    let data = Arc::new(LpData::new(model, &lo, &hi));
    let mut s = Simplex::new(data);
    let st = s.solve(max_iter);
    (st, s)
}
