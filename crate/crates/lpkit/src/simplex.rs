//! Bounded-variable revised simplex on `A x + s = b` with one slack per row.
//!
//! The basis inverse is kept explicitly (column-major) and updated in product
//! form; both updates and reinversion skip zero entries, which keeps network
//! style bases cheap.

use crate::model::{LinearProgram, RowSense};
use crate::{FEAS_TOL, OPT_TOL};

const PIVOT_TOL: f64 = 1e-9;
const DROP_TOL: f64 = 1e-13;
const REFACTOR_EVERY: usize = 100;
const DEGENERATE_BEFORE_BLAND: usize = 60;
const NONBASIC: usize = usize::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    /// The model failed [`LinearProgram::validate`](crate::LinearProgram::validate).
    Invalid,
}

/// A simplex basis: the basic column of every row and the bound each
/// nonbasic column sits at. Columns `n..n+m` are row slacks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Basis {
    pub head: Vec<usize>,
    pub at_upper: Vec<bool>,
}

/// Column- and row-wise copies of the constraint matrix plus slack bounds.
pub(crate) struct Prepared {
    pub m: usize,
    pub n: usize,
    col_start: Vec<usize>,
    col_rows: Vec<usize>,
    col_vals: Vec<f64>,
    row_start: Vec<usize>,
    row_cols: Vec<usize>,
    row_vals: Vec<f64>,
    pub rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub cost: Vec<f64>,
}

impl Prepared {
    pub fn new(lp: &LinearProgram) -> Self {
        let m = lp.num_rows();
        let n = lp.num_vars();
        let mut trip: Vec<(usize, usize, f64)> = lp.entries.clone();
        trip.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(trip.len());
        for (r, j, v) in trip {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == j => last.2 += v,
                _ => merged.push((r, j, v)),
            }
        }
        merged.retain(|e| e.2 != 0.0);

        let mut col_start = vec![0usize; n + 1];
        for &(_, j, _) in &merged {
            col_start[j + 1] += 1;
        }
        for j in 0..n {
            col_start[j + 1] += col_start[j];
        }
        let col_rows = merged.iter().map(|e| e.0).collect();
        let col_vals = merged.iter().map(|e| e.2).collect();

        let mut by_row = merged.clone();
        by_row.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_start = vec![0usize; m + 1];
        for &(r, _, _) in &by_row {
            row_start[r + 1] += 1;
        }
        for r in 0..m {
            row_start[r + 1] += row_start[r];
        }
        let row_cols = by_row.iter().map(|e| e.1).collect();
        let row_vals = by_row.iter().map(|e| e.2).collect();

        let mut lower = lp.lower.clone();
        let mut upper = lp.upper.clone();
        for s in &lp.senses {
            let (lo, hi) = match s {
                RowSense::Le => (0.0, f64::INFINITY),
                RowSense::Ge => (f64::NEG_INFINITY, 0.0),
                RowSense::Eq => (0.0, 0.0),
            };
            lower.push(lo);
            upper.push(hi);
        }
        let mut cost = lp.objective.clone();
        cost.resize(n + m, 0.0);
        Prepared {
            m,
            n,
            col_start,
            col_rows,
            col_vals,
            row_start,
            row_cols,
            row_vals,
            rhs: lp.rhs.clone(),
            lower,
            upper,
            cost,
        }
    }

    fn col(&self, j: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.col_start[j], self.col_start[j + 1]);
        (&self.col_rows[a..b], &self.col_vals[a..b])
    }

    fn col_nnz(&self, j: usize) -> usize {
        if j < self.n {
            self.col_start[j + 1] - self.col_start[j]
        } else {
            1
        }
    }
}

/// Dense vector with a list of (possibly) nonzero positions.
struct Sparse {
    val: Vec<f64>,
    nz: Vec<usize>,
    mark: Vec<bool>,
}

impl Sparse {
    fn new(len: usize) -> Self {
        Sparse { val: vec![0.0; len], nz: Vec::new(), mark: vec![false; len] }
    }

    fn clear(&mut self) {
        for &i in &self.nz {
            self.val[i] = 0.0;
            self.mark[i] = false;
        }
        self.nz.clear();
    }

    fn add(&mut self, i: usize, v: f64) {
        if !self.mark[i] {
            self.mark[i] = true;
            self.nz.push(i);
        }
        self.val[i] += v;
    }
}

pub(crate) struct Engine<'p> {
    p: &'p Prepared,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub cost: Vec<f64>,
    head: Vec<usize>,
    pos: Vec<usize>,
    at_upper: Vec<bool>,
    x: Vec<f64>,
    binv: Vec<f64>,
    d: Vec<f64>,
    alpha: Sparse,
    rho: Sparse,
    row_alpha: Sparse,
    updates: usize,
    fresh: bool,
    pub iterations: usize,
    pub iteration_limit: usize,
}

enum Step {
    Done,
    Continue,
    Unbounded,
    Stuck,
}

impl<'p> Engine<'p> {
    pub fn new(p: &'p Prepared) -> Self {
        let (m, n) = (p.m, p.n);
        let mut e = Engine {
            p,
            lower: p.lower.clone(),
            upper: p.upper.clone(),
            cost: p.cost.clone(),
            head: (n..n + m).collect(),
            pos: vec![NONBASIC; n + m],
            at_upper: vec![false; n + m],
            x: vec![0.0; n + m],
            binv: vec![0.0; m * m],
            d: vec![0.0; n + m],
            alpha: Sparse::new(m),
            rho: Sparse::new(m),
            row_alpha: Sparse::new(n + m),
            updates: 0,
            fresh: false,
            iterations: 0,
            iteration_limit: 50_000 + 50 * (n + m),
        };
        for i in 0..m {
            e.pos[n + i] = i;
        }
        e.set_identity();
        e
    }

    fn set_identity(&mut self) {
        let m = self.p.m;
        self.binv.fill(0.0);
        for i in 0..m {
            self.binv[i * m + i] = 1.0;
        }
        self.updates = 0;
    }

    pub fn basis(&self) -> Basis {
        Basis { head: self.head.clone(), at_upper: self.at_upper.clone() }
    }

    /// Installs `basis` if its dimensions fit; the inverse is rebuilt lazily.
    pub fn load_basis(&mut self, basis: &Basis) -> bool {
        let (m, n) = (self.p.m, self.p.n);
        if basis.head.len() != m || basis.at_upper.len() != n + m {
            return false;
        }
        let mut seen = vec![false; n + m];
        for &j in &basis.head {
            if j >= n + m || seen[j] {
                return false;
            }
            seen[j] = true;
        }
        self.head.clone_from(&basis.head);
        self.at_upper.clone_from(&basis.at_upper);
        self.pos.fill(NONBASIC);
        for (r, &j) in self.head.iter().enumerate() {
            self.pos[j] = r;
        }
        self.fresh = false;
        true
    }

    pub fn x(&self) -> &[f64] {
        &self.x[..self.p.n]
    }

    fn nonbasic_value(&mut self, j: usize) -> f64 {
        let (lo, hi) = (self.lower[j], self.upper[j]);
        if self.at_upper[j] && hi.is_finite() {
            hi
        } else if lo.is_finite() {
            self.at_upper[j] = false;
            lo
        } else if hi.is_finite() {
            self.at_upper[j] = true;
            hi
        } else {
            self.at_upper[j] = false;
            0.0
        }
    }

    fn ftran(&mut self, j: usize) {
        let m = self.p.m;
        self.alpha.clear();
        let axpy = |alpha: &mut Sparse, k: usize, v: f64, binv: &[f64]| {
            let col = &binv[k * m..(k + 1) * m];
            for (i, &b) in col.iter().enumerate() {
                if b != 0.0 {
                    alpha.add(i, v * b);
                }
            }
        };
        if j < self.p.n {
            let (rows, vals) = self.p.col(j);
            for (&k, &v) in rows.iter().zip(vals) {
                axpy(&mut self.alpha, k, v, &self.binv);
            }
        } else {
            axpy(&mut self.alpha, j - self.p.n, 1.0, &self.binv);
        }
        let alpha = &mut self.alpha;
        alpha.nz.retain(|&i| {
            if alpha.val[i].abs() > DROP_TOL {
                true
            } else {
                alpha.val[i] = 0.0;
                alpha.mark[i] = false;
                false
            }
        });
    }

    /// Row `r` of the inverse.
    fn btran_unit(&mut self, r: usize) {
        let m = self.p.m;
        self.rho.clear();
        for k in 0..m {
            let v = self.binv[k * m + r];
            if v.abs() > DROP_TOL {
                self.rho.add(k, v);
            }
        }
    }

    /// `row_alpha[j] = rho · a_j` for every column, slacks included.
    fn price_row(&mut self) {
        let n = self.p.n;
        self.row_alpha.clear();
        for &k in &self.rho.nz {
            let rk = self.rho.val[k];
            let (a, b) = (self.p.row_start[k], self.p.row_start[k + 1]);
            for t in a..b {
                self.row_alpha.add(self.p.row_cols[t], rk * self.p.row_vals[t]);
            }
            self.row_alpha.add(n + k, rk);
        }
    }

    /// Replaces the basic column of row `r` by the column whose ftran is in `alpha`.
    fn update_inverse(&mut self, r: usize) {
        let m = self.p.m;
        let piv = self.alpha.val[r];
        for k in 0..m {
            let col = &mut self.binv[k * m..(k + 1) * m];
            let br = col[r];
            if br == 0.0 {
                continue;
            }
            let t = br / piv;
            for &i in &self.alpha.nz {
                col[i] -= self.alpha.val[i] * t;
            }
            col[r] = t;
        }
        self.updates += 1;
    }

    /// Rebuilds the inverse from scratch. Columns that turn out dependent are
    /// swapped for slacks and return to a bound.
    fn reinvert(&mut self) {
        let (m, n) = (self.p.m, self.p.n);
        self.set_identity();
        let mut claimed = vec![false; m];
        let mut structural = Vec::new();
        for &j in &self.head {
            if j >= n {
                claimed[j - n] = true;
            } else {
                structural.push(j);
            }
        }
        structural.sort_by_key(|&j| (self.p.col_nnz(j), j));
        let mut new_head: Vec<usize> = (n..n + m).collect();
        for j in structural {
            self.ftran(j);
            let mut best = None;
            let mut best_abs = PIVOT_TOL;
            for &i in &self.alpha.nz {
                let a = self.alpha.val[i].abs();
                if !claimed[i] && (a > best_abs || (a == best_abs && best.is_some_and(|b| i < b))) {
                    best = Some(i);
                    best_abs = a;
                }
            }
            match best {
                Some(r) => {
                    self.update_inverse(r);
                    claimed[r] = true;
                    new_head[r] = j;
                }
                None => {
                    self.pos[j] = NONBASIC;
                    self.at_upper[j] = false;
                }
            }
        }
        self.head = new_head;
        self.pos.fill(NONBASIC);
        for (r, &j) in self.head.iter().enumerate() {
            self.pos[j] = r;
        }
        self.updates = 0;
        self.fresh = true;
    }

    fn compute_primal(&mut self) {
        let (m, n) = (self.p.m, self.p.n);
        let mut w = self.p.rhs.clone();
        for j in 0..n + m {
            if self.pos[j] != NONBASIC {
                continue;
            }
            let v = self.nonbasic_value(j);
            self.x[j] = v;
            if v == 0.0 {
                continue;
            }
            if j < n {
                let (rows, vals) = self.p.col(j);
                for (&r, &a) in rows.iter().zip(vals) {
                    w[r] -= a * v;
                }
            } else {
                w[j - n] -= v;
            }
        }
        let mut xb = vec![0.0; m];
        for (k, &wk) in w.iter().enumerate() {
            if wk == 0.0 {
                continue;
            }
            let col = &self.binv[k * m..(k + 1) * m];
            for (i, &b) in col.iter().enumerate() {
                xb[i] += b * wk;
            }
        }
        for (r, &j) in self.head.iter().enumerate() {
            self.x[j] = xb[r];
        }
    }

    /// Duals `y = c_B' B^-1` for the given column costs.
    fn duals_for(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.p.m;
        let cb: Vec<f64> = self.head.iter().map(|&j| cost[j]).collect();
        (0..m)
            .map(|k| {
                let col = &self.binv[k * m..(k + 1) * m];
                col.iter().zip(&cb).map(|(b, c)| b * c).sum()
            })
            .collect()
    }

    fn compute_reduced_costs(&mut self) {
        let (m, n) = (self.p.m, self.p.n);
        let y = self.duals_for(&self.cost);
        for j in 0..n {
            let (rows, vals) = self.p.col(j);
            let ya: f64 = rows.iter().zip(vals).map(|(&r, &a)| y[r] * a).sum();
            self.d[j] = self.cost[j] - ya;
        }
        for i in 0..m {
            self.d[n + i] = self.cost[n + i] - y[i];
        }
        for &j in &self.head {
            self.d[j] = 0.0;
        }
    }

    fn refresh(&mut self) {
        if !self.fresh || self.updates >= REFACTOR_EVERY {
            self.reinvert();
        }
        self.compute_primal();
        self.compute_reduced_costs();
    }

    fn infeasibility(&self, j: usize) -> f64 {
        let v = self.x[j];
        if v < self.lower[j] - FEAS_TOL {
            self.lower[j] - v
        } else if v > self.upper[j] + FEAS_TOL {
            v - self.upper[j]
        } else {
            0.0
        }
    }

    fn primal_feasible(&self) -> bool {
        self.head.iter().all(|&j| self.infeasibility(j) == 0.0)
    }

    fn movable(&self, j: usize) -> (bool, bool) {
        if self.pos[j] != NONBASIC || self.lower[j] == self.upper[j] {
            return (false, false);
        }
        let free = self.lower[j] == f64::NEG_INFINITY && self.upper[j] == f64::INFINITY;
        if free {
            (true, true)
        } else if self.at_upper[j] {
            (false, true)
        } else {
            (true, false)
        }
    }

    fn dual_feasible(&self) -> bool {
        (0..self.p.n + self.p.m).all(|j| {
            let (up, down) = self.movable(j);
            !(up && self.d[j] < -OPT_TOL) && !(down && self.d[j] > OPT_TOL)
        })
    }

    /// Dantzig pricing on `d`; Bland picks the lowest eligible index.
    fn choose_entering(&self, d: &[f64], bland: bool) -> Option<usize> {
        let mut best = None;
        let mut best_score = OPT_TOL;
        for j in 0..self.p.n + self.p.m {
            let (up, down) = self.movable(j);
            let score = if up && d[j] < -OPT_TOL {
                -d[j]
            } else if down && d[j] > OPT_TOL {
                d[j]
            } else {
                continue;
            };
            if bland {
                return Some(j);
            }
            if score > best_score {
                best_score = score;
                best = Some(j);
            }
        }
        best
    }

    /// Harris two-pass ratio test for moving entering `q` in direction `dir`.
    /// Returns `(row, step, leaves_at_upper)` or `None` when no row blocks.
    /// In phase one, infeasible basics block where they become feasible.
    fn ratio_test(&self, dir: f64, phase_one: bool, bland: bool) -> Option<(usize, f64, bool)> {
        let limit = |i: usize, tol: f64| -> Option<(f64, bool)> {
            let a = self.alpha.val[i];
            if a.abs() <= PIVOT_TOL {
                return None;
            }
            let b = self.head[i];
            let rate = -dir * a;
            let (xv, lo, hi) = (self.x[b], self.lower[b], self.upper[b]);
            if phase_one && xv < lo - FEAS_TOL {
                return (rate > 0.0).then(|| (((lo - xv) + tol) / rate, false));
            }
            if phase_one && xv > hi + FEAS_TOL {
                return (rate < 0.0).then(|| (((xv - hi) + tol) / -rate, true));
            }
            if rate < 0.0 && lo.is_finite() {
                Some((((xv - lo).max(0.0) + tol) / -rate, false))
            } else if rate > 0.0 && hi.is_finite() {
                Some((((hi - xv).max(0.0) + tol) / rate, true))
            } else {
                None
            }
        };
        if bland {
            let mut best: Option<(usize, f64, bool)> = None;
            for &i in &self.alpha.nz {
                if let Some((t, up)) = limit(i, 0.0) {
                    let better = match best {
                        None => true,
                        Some((bi, bt, _)) => t < bt - 1e-12 || (t <= bt + 1e-12 && self.head[i] < self.head[bi]),
                    };
                    if better {
                        best = Some((i, t, up));
                    }
                }
            }
            return best;
        }
        let mut bound = f64::INFINITY;
        for &i in &self.alpha.nz {
            if let Some((t, _)) = limit(i, FEAS_TOL) {
                bound = bound.min(t);
            }
        }
        if bound == f64::INFINITY {
            return None;
        }
        let mut best: Option<(usize, f64, bool)> = None;
        let mut best_abs = 0.0;
        for &i in &self.alpha.nz {
            if let Some((t, up)) = limit(i, 0.0) {
                let a = self.alpha.val[i].abs();
                if t <= bound && (a > best_abs || (a == best_abs && best.is_some_and(|(bi, _, _)| i < bi))) {
                    best_abs = a;
                    best = Some((i, t, up));
                }
            }
        }
        best
    }

    /// Moves entering `q` by `step` in `dir`; pivots at row `leave` if given.
    fn apply_primal_step(&mut self, q: usize, dir: f64, step: f64, leave: Option<(usize, bool)>) {
        if step != 0.0 {
            self.x[q] += dir * step;
            for &i in &self.alpha.nz {
                let b = self.head[i];
                self.x[b] -= dir * step * self.alpha.val[i];
            }
        }
        match leave {
            None => {
                self.at_upper[q] = dir > 0.0;
                self.x[q] = if dir > 0.0 { self.upper[q] } else { self.lower[q] };
            }
            Some((r, to_upper)) => {
                let b = self.head[r];
                self.x[b] = if to_upper { self.upper[b] } else { self.lower[b] };
                self.pivot(q, r, to_upper);
            }
        }
    }

    /// Basis change at row `r` with entering `q`; updates reduced costs and the inverse.
    fn pivot(&mut self, q: usize, r: usize, leaving_to_upper: bool) {
        let b = self.head[r];
        self.btran_unit(r);
        self.price_row();
        let arq = self.alpha.val[r];
        let ratio = self.d[q] / arq;
        if ratio != 0.0 {
            for &j in &self.row_alpha.nz {
                if self.pos[j] == NONBASIC {
                    self.d[j] -= ratio * self.row_alpha.val[j];
                }
            }
        }
        self.d[q] = 0.0;
        self.d[b] = -ratio;
        self.update_inverse(r);
        self.head[r] = q;
        self.pos[q] = r;
        self.pos[b] = NONBASIC;
        self.at_upper[b] = leaving_to_upper;
        if self.updates >= REFACTOR_EVERY {
            self.refresh();
        }
    }

    fn primal_iteration(&mut self, phase_one: bool, bland: bool) -> (Step, f64) {
        let d_phase1;
        let d: &[f64] = if phase_one {
            // Phase-one costs: -1 below lower bound, +1 above upper bound.
            let m = self.p.m;
            let n = self.p.n;
            let mut y = vec![0.0; m];
            let mut any = false;
            for r in 0..m {
                let b = self.head[r];
                let c = if self.x[b] < self.lower[b] - FEAS_TOL {
                    -1.0
                } else if self.x[b] > self.upper[b] + FEAS_TOL {
                    1.0
                } else {
                    continue;
                };
                any = true;
                for k in 0..m {
                    y[k] += c * self.binv[k * m + r];
                }
            }
            if !any {
                return (Step::Done, 0.0);
            }
            self.rho.clear();
            for (k, &v) in y.iter().enumerate() {
                if v.abs() > DROP_TOL {
                    self.rho.add(k, v);
                }
            }
            self.price_row();
            let mut dd = vec![0.0; n + m];
            for &j in &self.row_alpha.nz {
                dd[j] = -self.row_alpha.val[j];
            }
            for &j in &self.head {
                dd[j] = 0.0;
            }
            d_phase1 = dd;
            &d_phase1
        } else {
            &self.d
        };
        let Some(q) = self.choose_entering(d, bland) else {
            return (if phase_one { Step::Stuck } else { Step::Done }, 0.0);
        };
        let dir = if d[q] < 0.0 { 1.0 } else { -1.0 };
        self.ftran(q);
        let flip = self.upper[q] - self.lower[q];
        match self.ratio_test(dir, phase_one, bland) {
            Some((r, t, up)) if t < flip => {
                let step = t.max(0.0);
                self.apply_primal_step(q, dir, step, Some((r, up)));
                (Step::Continue, step)
            }
            _ if flip.is_finite() => {
                self.apply_primal_step(q, dir, flip, None);
                (Step::Continue, flip)
            }
            _ => (if phase_one { Step::Stuck } else { Step::Unbounded }, 0.0),
        }
    }

    fn primal(&mut self, phase_one: bool) -> Result<bool, LpStatus> {
        let mut degenerate = 0usize;
        loop {
            if self.iterations >= self.iteration_limit {
                return Err(LpStatus::IterationLimit);
            }
            let bland = degenerate >= DEGENERATE_BEFORE_BLAND;
            let (step, len) = self.primal_iteration(phase_one, bland);
            match step {
                Step::Done => return Ok(true),
                Step::Unbounded => return Err(LpStatus::Unbounded),
                Step::Stuck => return Ok(false),
                Step::Continue => {}
            }
            self.iterations += 1;
            if len <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
        }
    }

    /// Dual simplex from a dual-feasible basis.
    fn dual(&mut self) -> Result<(), LpStatus> {
        let (m, n) = (self.p.m, self.p.n);
        let mut degenerate = 0usize;
        loop {
            if self.iterations >= self.iteration_limit {
                return Err(LpStatus::IterationLimit);
            }
            let bland = degenerate >= DEGENERATE_BEFORE_BLAND;
            let mut leave = None;
            let mut worst = 0.0;
            for r in 0..m {
                let inf = self.infeasibility(self.head[r]);
                if inf > worst {
                    worst = inf;
                    leave = Some(r);
                    if bland {
                        break;
                    }
                }
            }
            let Some(r) = leave else { return Ok(()) };
            let b = self.head[r];
            let to_upper = self.x[b] > self.upper[b];
            let target = if to_upper { self.upper[b] } else { self.lower[b] };
            self.btran_unit(r);
            self.price_row();
            // x_b moves by -alpha_rj * dx_j; it must rise when below, fall when above.
            let sign = if to_upper { 1.0 } else { -1.0 };
            let cand = |j: usize| -> Option<(f64, f64)> {
                let (up, down) = self.movable(j);
                let a = self.row_alpha.val[j];
                if a.abs() <= PIVOT_TOL {
                    return None;
                }
                let ok = (up && sign * a > 0.0) || (down && sign * a < 0.0);
                ok.then(|| (self.d[j].abs(), a.abs()))
            };
            let mut chosen = None;
            if bland {
                let mut best_t = f64::INFINITY;
                for &j in &self.row_alpha.nz {
                    if let Some((dj, a)) = cand(j) {
                        let t = dj / a;
                        if t < best_t - 1e-12 || (t <= best_t + 1e-12 && chosen.is_some_and(|c| j < c)) {
                            best_t = t;
                            chosen = Some(j);
                        }
                    }
                }
            } else {
                let mut bound = f64::INFINITY;
                for &j in &self.row_alpha.nz {
                    if let Some((dj, a)) = cand(j) {
                        bound = bound.min((dj + OPT_TOL) / a);
                    }
                }
                let mut best_abs = 0.0;
                for &j in &self.row_alpha.nz {
                    if let Some((dj, a)) = cand(j) {
                        if dj / a <= bound && (a > best_abs || (a == best_abs && chosen.is_some_and(|c| j < c))) {
                            best_abs = a;
                            chosen = Some(j);
                        }
                    }
                }
            }
            let Some(q) = chosen else {
                return Err(LpStatus::Infeasible);
            };
            let dual_step = (self.d[q] / self.row_alpha.val[q]).abs();
            self.ftran(q);
            let arq = self.alpha.val[r];
            if arq.abs() <= PIVOT_TOL {
                self.refresh();
                degenerate += 1;
                continue;
            }
            let dx = (self.x[b] - target) / arq;
            self.x[q] += dx;
            for &i in &self.alpha.nz {
                let hb = self.head[i];
                self.x[hb] -= self.alpha.val[i] * dx;
            }
            self.x[b] = target;
            let _ = n;
            self.pivot(q, r, to_upper);
            self.iterations += 1;
            if dual_step <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
        }
    }

    /// Solves from the current basis and bounds.
    pub fn run(&mut self) -> LpStatus {
        self.refresh();
        for _round in 0..20 {
            if !self.primal_feasible() {
                if self.dual_feasible() {
                    match self.dual() {
                        Ok(()) => {}
                        Err(LpStatus::Infeasible) => {
                            // Confirm with phase one before declaring infeasibility.
                            self.refresh();
                            match self.primal(true) {
                                Ok(true) => {}
                                Ok(false) => return self.confirm_infeasible(),
                                Err(s) => return s,
                            }
                        }
                        Err(s) => return s,
                    }
                } else {
                    match self.primal(true) {
                        Ok(true) => {}
                        Ok(false) => return self.confirm_infeasible(),
                        Err(s) => return s,
                    }
                }
                self.compute_reduced_costs();
            }
            if let Err(s) = self.primal(false) {
                return s;
            }
            self.reinvert();
            self.compute_primal();
            self.compute_reduced_costs();
            if self.primal_feasible() && self.dual_feasible() {
                return LpStatus::Optimal;
            }
        }
        LpStatus::IterationLimit
    }

    fn confirm_infeasible(&mut self) -> LpStatus {
        self.reinvert();
        self.compute_primal();
        if self.primal_feasible() {
            self.compute_reduced_costs();
            match self.primal(false) {
                Ok(_) => LpStatus::Optimal,
                Err(s) => s,
            }
        } else {
            LpStatus::Infeasible
        }
    }

    pub fn objective(&self) -> f64 {
        (0..self.p.n).map(|j| self.cost[j] * self.x[j]).sum()
    }

    pub fn row_duals(&self) -> Vec<f64> {
        self.duals_for(&self.cost)
    }

    pub fn reduced_costs(&self) -> Vec<f64> {
        self.d[..self.p.n].to_vec()
    }
}
