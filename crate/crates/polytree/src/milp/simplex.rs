//! Bounded-variable revised simplex over an explicit basis inverse.
//!
//! The solver works on an equality-form problem `min c·x : Ax = b, lo <= x <= hi`
//! with column layout `[structurals | slacks | artificials]`. Phase 1 minimizes
//! the signed sum of artificial values; phase 2 optimizes the true cost with
//! artificials pinned to zero. A dual simplex entry point reoptimizes from a
//! stored basis after bound changes, which is how branch-and-bound warm-starts
//! child nodes.

use nalgebra::DMatrix;

use super::model::{MilpModel, Sense};

pub(crate) const FEAS_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const PIV_TOL: f64 = 1e-9;
const DRIVE_OUT_TOL: f64 = 1e-7;
const PHASE1_DONE: f64 = 1e-8;
const RATIO_TIE: f64 = 1e-12;
const REFACTOR_EVERY: usize = 100;
const DEGEN_BLAND_TRIGGER: usize = 400;

pub(crate) const INF: f64 = f64::INFINITY;

fn ftol(v: f64) -> f64 {
    FEAS_TOL * (1.0 + v.abs())
}

/// Equality-form data shared by every solve of one model (bounds vary).
pub(crate) struct StdForm {
    pub m: usize,
    pub n_struct: usize,
    pub n_total: usize,
    /// Sparse columns as `(row, coefficient)`.
    pub cols: Vec<Vec<(usize, f64)>>,
    /// Phase-2 cost (artificials zero).
    pub cost: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub b: Vec<f64>,
    pub obj_offset: f64,
}

impl StdForm {
    pub fn from_model(model: &MilpModel) -> StdForm {
        let m = model.constrs.len();
        let n_struct = model.vars.len();
        let n_total = n_struct + 2 * m;
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_total];
        let mut b = vec![0.0; m];
        let mut lo = vec![0.0; n_total];
        let mut hi = vec![0.0; n_total];
        for (j, v) in model.vars.iter().enumerate() {
            lo[j] = v.lo;
            hi[j] = v.hi;
        }
        for (i, c) in model.constrs.iter().enumerate() {
            for &(v, coef) in &c.expr.terms {
                cols[v.0].push((i, coef));
            }
            b[i] = c.rhs;
            let s = n_struct + i;
            cols[s].push((i, 1.0));
            match c.sense {
                Sense::Le => {
                    lo[s] = 0.0;
                    hi[s] = INF;
                }
                Sense::Eq => {
                    lo[s] = 0.0;
                    hi[s] = 0.0;
                }
            }
            let a = n_struct + m + i;
            cols[a].push((i, 1.0));
            lo[a] = 0.0;
            hi[a] = 0.0;
        }
        let mut cost = vec![0.0; n_total];
        for &(v, c) in &model.objective.terms {
            cost[v.0] += c;
        }
        StdForm {
            m,
            n_struct,
            n_total,
            cols,
            cost,
            lo,
            hi,
            b,
            obj_offset: model.objective.constant,
        }
    }

    fn is_artificial(&self, j: usize) -> bool {
        j >= self.n_struct + self.m
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum VState {
    Basic(usize),
    AtLo,
    AtUp,
    /// Free nonbasic, pinned at zero.
    Free0,
}

/// Compact basis snapshot for warm starts.
#[derive(Clone, Debug)]
pub(crate) struct BasisSnapshot {
    basic: Vec<u32>,
    /// 0 = at lower, 1 = at upper, 2 = free-at-zero, 3 = basic.
    state: Vec<u8>,
}

#[derive(Clone, Debug)]
pub(crate) enum LpStatus {
    Optimal,
    /// Row multipliers certifying that no point within bounds satisfies Ax = b.
    Infeasible(Vec<f64>),
    /// Improving ray over all columns.
    Unbounded(Vec<f64>),
}

pub(crate) struct LpResult {
    pub status: LpStatus,
    /// Objective including the model's constant offset (phase-2 cost).
    pub obj: f64,
    pub iterations: usize,
}

enum PrimalEnd {
    Optimal,
    Unbounded { col: usize, dir: f64, w: Vec<f64> },
}

enum DualEnd {
    PrimalFeasible,
    Infeasible(Vec<f64>),
}

struct Numerical;

pub(crate) struct Simplex<'a> {
    f: &'a StdForm,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    state: Vec<VState>,
    basic: Vec<usize>,
    binv: DMatrix<f64>,
    d: Vec<f64>,
    pivots: usize,
    since_refactor: usize,
    degen_run: usize,
    bland: bool,
    max_pivots: usize,
}

impl<'a> Simplex<'a> {
    pub fn new(f: &'a StdForm) -> Simplex<'a> {
        let n = f.n_total;
        let m = f.m;
        Simplex {
            f,
            lo: f.lo.clone(),
            hi: f.hi.clone(),
            cost: f.cost.clone(),
            x: vec![0.0; n],
            state: vec![VState::Free0; n],
            basic: Vec::with_capacity(m),
            binv: DMatrix::identity(m.max(1), m.max(1)),
            d: vec![0.0; n],
            pivots: 0,
            since_refactor: 0,
            degen_run: 0,
            bland: false,
            max_pivots: 50_000 + 200 * m,
        }
    }

    pub fn set_var_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        self.lo[j] = lo;
        self.hi[j] = hi;
    }

    pub fn value(&self, j: usize) -> f64 {
        self.x[j]
    }

    fn is_fixed(&self, j: usize) -> bool {
        self.hi[j] - self.lo[j] <= 0.0
    }

    fn nonbasic_snap(&self, j: usize) -> (VState, f64) {
        if self.lo[j] > -INF {
            (VState::AtLo, self.lo[j])
        } else if self.hi[j] < INF {
            (VState::AtUp, self.hi[j])
        } else {
            (VState::Free0, 0.0)
        }
    }

    /// Cold start: slack basis, artificials promoted where residuals violate
    /// slack bounds, then two-phase primal simplex.
    pub fn solve_from_scratch(&mut self) -> Result<LpResult, ()> {
        match self.solve_cold() {
            Ok(r) => Ok(r),
            Err(Numerical) => {
                // One repair attempt: restart completely.
                self.pivots = 0;
                self.bland = true;
                self.solve_cold().map_err(|_| ())
            }
        }
    }

    fn solve_cold(&mut self) -> Result<LpResult, Numerical> {
        let m = self.f.m;
        let ns = self.f.n_struct;
        // Everything nonbasic at its snap value.
        for j in 0..self.f.n_total {
            let (st, v) = self.nonbasic_snap(j);
            self.state[j] = st;
            self.x[j] = v;
        }
        // Artificial bounds reset to pinned.
        for i in 0..m {
            let a = ns + m + i;
            self.lo[a] = 0.0;
            self.hi[a] = 0.0;
            self.cost[a] = 0.0;
        }
        // Residuals with all columns at their snapped values.
        let mut resid = self.f.b.clone();
        for j in 0..self.f.n_total {
            let v = self.x[j];
            if v != 0.0 {
                for &(r, c) in &self.f.cols[j] {
                    resid[r] -= c * v;
                }
            }
        }
        self.basic.clear();
        let mut phase1_cost: Vec<(usize, f64)> = Vec::new();
        let mut needs_phase1 = false;
        for i in 0..m {
            let s = ns + i;
            // Residual on top of the slack's snapped value gives its basic value.
            let sval = self.x[s] + resid[i];
            if sval >= self.lo[s] - ftol(sval) && sval <= self.hi[s] + ftol(sval) {
                self.basic.push(s);
                self.state[s] = VState::Basic(i);
                self.x[s] = sval;
            } else {
                let a = ns + m + i;
                let aval = sval - self.x[s];
                if aval >= 0.0 {
                    self.lo[a] = 0.0;
                    self.hi[a] = INF;
                    phase1_cost.push((a, 1.0));
                } else {
                    self.lo[a] = -INF;
                    self.hi[a] = 0.0;
                    phase1_cost.push((a, -1.0));
                }
                self.basic.push(a);
                self.state[a] = VState::Basic(i);
                self.x[a] = aval;
                needs_phase1 = true;
            }
        }
        if needs_phase1 {
            // Phase 1: minimize signed artificial sum.
            for c in self.cost.iter_mut() {
                *c = 0.0;
            }
            for &(a, c) in &phase1_cost {
                self.cost[a] = c;
            }
            self.refactorize()?;
            match self.primal_loop()? {
                PrimalEnd::Optimal => {}
                PrimalEnd::Unbounded { .. } => return Err(Numerical),
            }
            let infeas: f64 = phase1_cost.iter().map(|&(a, c)| c * self.x[a]).sum();
            if infeas > PHASE1_DONE {
                let y = self.duals();
                return Ok(LpResult {
                    status: LpStatus::Infeasible(y),
                    obj: f64::INFINITY,
                    iterations: self.pivots,
                });
            }
            // Pin artificials at zero and drive basic ones out where possible.
            for i in 0..m {
                let a = ns + m + i;
                self.lo[a] = 0.0;
                self.hi[a] = 0.0;
            }
            self.drive_out_artificials();
        }
        // Phase 2.
        self.cost.copy_from_slice(&self.f.cost);
        self.refactorize()?;
        match self.primal_loop()? {
            PrimalEnd::Optimal => Ok(LpResult {
                status: LpStatus::Optimal,
                obj: self.objective(),
                iterations: self.pivots,
            }),
            PrimalEnd::Unbounded { col, dir, w } => {
                let mut ray = vec![0.0; self.f.n_total];
                ray[col] = dir;
                for (i, &bi) in self.basic.iter().enumerate() {
                    ray[bi] = -dir * w[i];
                }
                Ok(LpResult {
                    status: LpStatus::Unbounded(ray),
                    obj: f64::NEG_INFINITY,
                    iterations: self.pivots,
                })
            }
        }
    }

    /// Reoptimize after bound changes, starting from a dual-feasible snapshot.
    /// Falls back to a cold solve when the snapshot cannot be reused.
    pub fn solve_warm(&mut self, snap: &BasisSnapshot) -> Result<LpResult, ()> {
        if snap.basic.len() != self.f.m || snap.state.len() != self.f.n_total {
            return self.solve_from_scratch();
        }
        match self.try_warm(snap) {
            Ok(r) => Ok(r),
            Err(Numerical) => self.solve_from_scratch(),
        }
    }

    fn try_warm(&mut self, snap: &BasisSnapshot) -> Result<LpResult, Numerical> {
        let m = self.f.m;
        let ns = self.f.n_struct;
        self.basic.clear();
        for (i, &j) in snap.basic.iter().enumerate() {
            self.basic.push(j as usize);
            self.state[j as usize] = VState::Basic(i);
        }
        for j in 0..self.f.n_total {
            match snap.state[j] {
                3 => {}
                0 => {
                    self.state[j] = VState::AtLo;
                    self.x[j] = self.lo[j];
                }
                1 => {
                    self.state[j] = VState::AtUp;
                    self.x[j] = self.hi[j];
                }
                _ => {
                    let (st, v) = self.nonbasic_snap(j);
                    self.state[j] = st;
                    self.x[j] = v;
                }
            }
        }
        // Artificials stay pinned in warm solves.
        for i in 0..m {
            let a = ns + m + i;
            self.lo[a] = 0.0;
            self.hi[a] = 0.0;
        }
        self.cost.copy_from_slice(&self.f.cost);
        self.refactorize()?;
        match self.dual_loop()? {
            DualEnd::Infeasible(y) => Ok(LpResult {
                status: LpStatus::Infeasible(y),
                obj: f64::INFINITY,
                iterations: self.pivots,
            }),
            DualEnd::PrimalFeasible => match self.primal_loop()? {
                PrimalEnd::Optimal => Ok(LpResult {
                    status: LpStatus::Optimal,
                    obj: self.objective(),
                    iterations: self.pivots,
                }),
                PrimalEnd::Unbounded { col, dir, w } => {
                    let mut ray = vec![0.0; self.f.n_total];
                    ray[col] = dir;
                    for (i, &bi) in self.basic.iter().enumerate() {
                        ray[bi] = -dir * w[i];
                    }
                    Ok(LpResult {
                        status: LpStatus::Unbounded(ray),
                        obj: f64::NEG_INFINITY,
                        iterations: self.pivots,
                    })
                }
            },
        }
    }

    pub fn snapshot(&self) -> BasisSnapshot {
        let mut state = vec![2u8; self.f.n_total];
        for (j, s) in self.state.iter().enumerate() {
            state[j] = match s {
                VState::Basic(_) => 3,
                VState::AtLo => 0,
                VState::AtUp => 1,
                VState::Free0 => 2,
            };
        }
        BasisSnapshot {
            basic: self.basic.iter().map(|&b| b as u32).collect(),
            state,
        }
    }

    /// Objective of the current point under the phase-2 cost.
    pub fn objective(&self) -> f64 {
        let mut obj = self.f.obj_offset;
        for j in 0..self.f.n_total {
            if self.f.cost[j] != 0.0 {
                obj += self.f.cost[j] * self.x[j];
            }
        }
        obj
    }

    /// Row multipliers `y = c_B' B^{-1}` for the current cost vector.
    fn duals(&self) -> Vec<f64> {
        let m = self.f.m;
        let mut y = vec![0.0; m];
        for (i, &bi) in self.basic.iter().enumerate() {
            let cb = self.cost[bi];
            if cb != 0.0 {
                for k in 0..m {
                    y[k] += cb * self.binv[(i, k)];
                }
            }
        }
        y
    }

    fn refactorize(&mut self) -> Result<(), Numerical> {
        let m = self.f.m;
        if m == 0 {
            self.recompute_d();
            return Ok(());
        }
        let mut bmat = DMatrix::zeros(m, m);
        for (k, &j) in self.basic.iter().enumerate() {
            for &(r, c) in &self.f.cols[j] {
                bmat[(r, k)] = c;
            }
        }
        match bmat.try_inverse() {
            Some(inv) => self.binv = inv,
            None => return Err(Numerical),
        }
        // Snap nonbasic values, recompute basic values exactly.
        for j in 0..self.f.n_total {
            match self.state[j] {
                VState::AtLo => self.x[j] = self.lo[j],
                VState::AtUp => self.x[j] = self.hi[j],
                VState::Free0 => {}
                VState::Basic(_) => {}
            }
        }
        let mut rhs = self.f.b.clone();
        for j in 0..self.f.n_total {
            if matches!(self.state[j], VState::Basic(_)) {
                continue;
            }
            let v = self.x[j];
            if v != 0.0 {
                for &(r, c) in &self.f.cols[j] {
                    rhs[r] -= c * v;
                }
            }
        }
        for i in 0..m {
            let mut v = 0.0;
            for k in 0..m {
                v += self.binv[(i, k)] * rhs[k];
            }
            self.x[self.basic[i]] = v;
        }
        self.recompute_d();
        self.since_refactor = 0;
        Ok(())
    }

    fn recompute_d(&mut self) {
        let y = self.duals();
        for j in 0..self.f.n_total {
            if matches!(self.state[j], VState::Basic(_)) {
                self.d[j] = 0.0;
                continue;
            }
            let mut dj = self.cost[j];
            for &(r, c) in &self.f.cols[j] {
                dj -= y[r] * c;
            }
            self.d[j] = dj;
        }
    }

    /// `B^{-1} A_j` as a dense vector, gathered column-wise.
    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.f.m;
        let mut w = vec![0.0; m];
        for &(r, c) in &self.f.cols[j] {
            for i in 0..m {
                w[i] += c * self.binv[(i, r)];
            }
        }
        w
    }

    /// Row `e_r' B^{-1} A_j` for every column.
    fn pivot_row(&self, r: usize) -> Vec<f64> {
        let m = self.f.m;
        let mut rho = vec![0.0; m];
        for k in 0..m {
            rho[k] = self.binv[(r, k)];
        }
        let mut alpha = vec![0.0; self.f.n_total];
        for (j, col) in self.f.cols.iter().enumerate() {
            let mut a = 0.0;
            for &(row, c) in col {
                a += rho[row] * c;
            }
            alpha[j] = a;
        }
        alpha
    }

    fn price(&self) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.f.n_total {
            if self.is_fixed(j) {
                continue;
            }
            let cand = match self.state[j] {
                VState::Basic(_) => None,
                VState::AtLo => {
                    if self.d[j] < -DUAL_TOL {
                        Some((1.0, -self.d[j]))
                    } else {
                        None
                    }
                }
                VState::AtUp => {
                    if self.d[j] > DUAL_TOL {
                        Some((-1.0, self.d[j]))
                    } else {
                        None
                    }
                }
                VState::Free0 => {
                    if self.d[j].abs() > DUAL_TOL {
                        Some((-self.d[j].signum(), self.d[j].abs()))
                    } else {
                        None
                    }
                }
            };
            if let Some((dir, score)) = cand {
                if self.bland {
                    return Some((j, dir));
                }
                match best {
                    Some((_, _, s)) if s >= score => {}
                    _ => best = Some((j, dir, score)),
                }
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    fn primal_loop(&mut self) -> Result<PrimalEnd, Numerical> {
        loop {
            if self.pivots > self.max_pivots {
                return Err(Numerical);
            }
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactorize()?;
            }
            let Some((j, dir)) = self.price() else {
                return Ok(PrimalEnd::Optimal);
            };
            let w = self.ftran(j);
            // Ratio test with bounds; t is the (nonnegative) step of x_j along dir.
            let own_range = self.hi[j] - self.lo[j];
            let mut t_best = if own_range.is_finite() { own_range } else { INF };
            let mut blocker: Option<(usize, bool, f64)> = None; // (row, leaves_at_upper, |pivot|)
            for (i, &wi) in w.iter().enumerate() {
                let a = dir * wi;
                let bi = self.basic[i];
                let (lim, at_upper) = if a > PIV_TOL {
                    if self.lo[bi] <= -INF {
                        continue;
                    }
                    (((self.x[bi] - self.lo[bi]) / a).max(0.0), false)
                } else if a < -PIV_TOL {
                    if self.hi[bi] >= INF {
                        continue;
                    }
                    (((self.hi[bi] - self.x[bi]) / (-a)).max(0.0), true)
                } else {
                    continue;
                };
                let take = match blocker {
                    None => lim < t_best - RATIO_TIE || lim <= t_best,
                    Some((br, _, bp)) => {
                        if lim < t_best - RATIO_TIE {
                            true
                        } else if lim <= t_best + RATIO_TIE {
                            if self.bland {
                                self.basic[i] < self.basic[br]
                            } else {
                                wi.abs() > bp
                            }
                        } else {
                            false
                        }
                    }
                };
                if take {
                    t_best = t_best.min(lim);
                    blocker = Some((i, at_upper, wi.abs()));
                }
            }
            if !t_best.is_finite() {
                return Ok(PrimalEnd::Unbounded { col: j, dir, w });
            }
            if t_best < 1e-11 {
                self.degen_run += 1;
                if self.degen_run > DEGEN_BLAND_TRIGGER {
                    self.bland = true;
                }
            } else {
                self.degen_run = 0;
                self.bland = false;
            }
            match blocker {
                Some((r, at_upper, _)) if t_best < own_range - RATIO_TIE || !own_range.is_finite() => {
                    self.apply_pivot(j, dir, t_best, r, at_upper, &w);
                }
                _ => {
                    // Bound flip: entering variable crosses to its other bound.
                    self.x[j] += dir * t_best;
                    for (i, &wi) in w.iter().enumerate() {
                        if wi != 0.0 {
                            let bi = self.basic[i];
                            self.x[bi] -= wi * dir * t_best;
                        }
                    }
                    self.state[j] = if dir > 0.0 { VState::AtUp } else { VState::AtLo };
                    self.x[j] = if dir > 0.0 { self.hi[j] } else { self.lo[j] };
                    self.pivots += 1;
                    self.since_refactor += 1;
                }
            }
        }
    }

    fn apply_pivot(&mut self, j: usize, dir: f64, t: f64, r: usize, leaves_at_upper: bool, w: &[f64]) {
        let leaving = self.basic[r];
        // Reduced-cost update needs the pivot row before the basis changes.
        let alpha = self.pivot_row(r);
        let piv = w[r];
        let theta_d = self.d[j] / piv;
        for k in 0..self.f.n_total {
            if k == j || matches!(self.state[k], VState::Basic(_)) {
                continue;
            }
            if alpha[k] != 0.0 {
                self.d[k] -= theta_d * alpha[k];
            }
        }
        // Values.
        self.x[j] += dir * t;
        for (i, &wi) in w.iter().enumerate() {
            if i != r && wi != 0.0 {
                let bi = self.basic[i];
                self.x[bi] -= wi * dir * t;
            }
        }
        self.x[leaving] = if leaves_at_upper { self.hi[leaving] } else { self.lo[leaving] };
        // Basis inverse eta update.
        let m = self.f.m;
        for i in 0..m {
            if i == r {
                continue;
            }
            let factor = w[i] / piv;
            if factor != 0.0 {
                for k in 0..m {
                    let delta = factor * self.binv[(r, k)];
                    self.binv[(i, k)] -= delta;
                }
            }
        }
        for k in 0..m {
            self.binv[(r, k)] /= piv;
        }
        self.basic[r] = j;
        self.state[j] = VState::Basic(r);
        self.state[leaving] = if leaves_at_upper { VState::AtUp } else { VState::AtLo };
        self.d[leaving] = -theta_d;
        self.d[j] = 0.0;
        self.pivots += 1;
        self.since_refactor += 1;
    }

    fn dual_loop(&mut self) -> Result<DualEnd, Numerical> {
        loop {
            if self.pivots > self.max_pivots {
                return Err(Numerical);
            }
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactorize()?;
            }
            // Most violated basic variable leaves.
            let mut leave: Option<(usize, f64, f64)> = None; // (row, sigma, violation)
            for (i, &bi) in self.basic.iter().enumerate() {
                let below = self.lo[bi] - self.x[bi];
                let above = self.x[bi] - self.hi[bi];
                let (sigma, viol) = if below > ftol(self.lo[bi]) {
                    (-1.0, below)
                } else if above > ftol(self.hi[bi]) {
                    (1.0, above)
                } else {
                    continue;
                };
                match leave {
                    Some((_, _, v)) if v >= viol => {}
                    _ => leave = Some((i, sigma, viol)),
                }
            }
            let Some((r, sigma, _)) = leave else {
                return Ok(DualEnd::PrimalFeasible);
            };
            let alpha = self.pivot_row(r);
            // Entering column: minimal dual ratio among sign-eligible nonbasics.
            let mut enter: Option<(usize, f64, f64)> = None; // (col, ratio, |beta|)
            for j in 0..self.f.n_total {
                if self.is_fixed(j) || matches!(self.state[j], VState::Basic(_)) {
                    continue;
                }
                let beta = sigma * alpha[j];
                let eligible = match self.state[j] {
                    VState::AtLo => beta > PIV_TOL,
                    VState::AtUp => beta < -PIV_TOL,
                    VState::Free0 => beta.abs() > PIV_TOL,
                    VState::Basic(_) => false,
                };
                if !eligible {
                    continue;
                }
                let ratio = (self.d[j] / beta).max(0.0);
                let take = match enter {
                    None => true,
                    Some((ej, er, eb)) => {
                        if ratio < er - RATIO_TIE {
                            true
                        } else if ratio <= er + RATIO_TIE {
                            if self.bland {
                                j < ej
                            } else {
                                beta.abs() > eb
                            }
                        } else {
                            false
                        }
                    }
                };
                if take {
                    enter = Some((j, ratio, beta.abs()));
                }
            }
            let Some((e, _, _)) = enter else {
                let m = self.f.m;
                let mut y = vec![0.0; m];
                for k in 0..m {
                    y[k] = sigma * self.binv[(r, k)];
                }
                return Ok(DualEnd::Infeasible(y));
            };
            let leaving = self.basic[r];
            let target = if sigma > 0.0 { self.hi[leaving] } else { self.lo[leaving] };
            let dt = (self.x[leaving] - target) / alpha[e];
            // Long step: cap at the entering variable's own range and bound-flip.
            let own_range = self.hi[e] - self.lo[e];
            if own_range.is_finite() && dt.abs() > own_range {
                let w = self.ftran(e);
                let flip = own_range * dt.signum();
                self.x[e] += flip;
                for (i, &wi) in w.iter().enumerate() {
                    if wi != 0.0 {
                        let bi = self.basic[i];
                        self.x[bi] -= wi * flip;
                    }
                }
                self.state[e] = match self.state[e] {
                    VState::AtLo => VState::AtUp,
                    VState::AtUp => VState::AtLo,
                    s => s,
                };
                self.pivots += 1;
                self.since_refactor += 1;
                continue;
            }
            if !dt.is_finite() {
                return Err(Numerical);
            }
            let w = self.ftran(e);
            // Consistency between row and column views of the pivot element.
            if (w[r] - alpha[e]).abs() > 1e-6 * (1.0 + alpha[e].abs()) {
                self.refactorize()?;
                continue;
            }
            let theta_d = self.d[e] / alpha[e];
            for k in 0..self.f.n_total {
                if k == e || matches!(self.state[k], VState::Basic(_)) {
                    continue;
                }
                if alpha[k] != 0.0 {
                    self.d[k] -= theta_d * alpha[k];
                }
            }
            self.x[e] += dt;
            for (i, &wi) in w.iter().enumerate() {
                if i != r && wi != 0.0 {
                    let bi = self.basic[i];
                    self.x[bi] -= wi * dt;
                }
            }
            self.x[leaving] = target;
            let m = self.f.m;
            let piv = w[r];
            if piv.abs() < PIV_TOL {
                return Err(Numerical);
            }
            for i in 0..m {
                if i == r {
                    continue;
                }
                let factor = w[i] / piv;
                if factor != 0.0 {
                    for k in 0..m {
                        let delta = factor * self.binv[(r, k)];
                        self.binv[(i, k)] -= delta;
                    }
                }
            }
            for k in 0..m {
                self.binv[(r, k)] /= piv;
            }
            self.basic[r] = e;
            self.state[e] = VState::Basic(r);
            self.state[leaving] = if sigma > 0.0 { VState::AtUp } else { VState::AtLo };
            self.d[leaving] = -theta_d;
            self.d[e] = 0.0;
            self.pivots += 1;
            self.since_refactor += 1;
        }
    }

    /// Pivot basic artificials out of the basis where a usable pivot exists.
    /// Rows without one are redundant; their artificial stays basic at zero.
    fn drive_out_artificials(&mut self) {
        let m = self.f.m;
        for r in 0..m {
            let bi = self.basic[r];
            if !self.f.is_artificial(bi) {
                continue;
            }
            let alpha = self.pivot_row(r);
            let mut pick: Option<(usize, f64)> = None;
            for j in 0..self.f.n_struct + m {
                if matches!(self.state[j], VState::Basic(_)) {
                    continue;
                }
                let a = alpha[j].abs();
                if a > DRIVE_OUT_TOL {
                    match pick {
                        Some((_, pa)) if pa >= a => {}
                        _ => pick = Some((j, a)),
                    }
                }
            }
            if let Some((j, _)) = pick {
                let w = self.ftran(j);
                // Degenerate exchange: the artificial sits at ~0, step is zero.
                self.apply_pivot(j, 1.0, 0.0, r, false, &w);
                debug_assert_eq!(self.basic[r], j);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::model::{LinExpr, MilpModel};

    fn solve(model: &MilpModel) -> (LpStatus, f64, Vec<f64>) {
        let f = StdForm::from_model(model);
        let mut s = Simplex::new(&f);
        let r = s.solve_from_scratch().expect("numerical");
        let x = (0..f.n_struct).map(|j| s.value(j)).collect();
        (r.status, r.obj, x)
    }

    #[test]
    fn maximize_single_var() {
        // max x s.t. x <= 3, x >= 0, as min -x.
        let mut m = MilpModel::new();
        let x = m.add_variable(0.0, INF).unwrap();
        m.add_le(LinExpr::var(x), 3.0).unwrap();
        m.set_objective(LinExpr::term(x, -1.0)).unwrap();
        let (st, obj, xs) = solve(&m);
        assert!(matches!(st, LpStatus::Optimal));
        assert!((obj + 3.0).abs() < 1e-9);
        assert!((xs[0] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn min_sum_with_cover() {
        let mut m = MilpModel::new();
        let x = m.add_variable(0.0, INF).unwrap();
        let y = m.add_variable(0.0, INF).unwrap();
        let mut e = LinExpr::new();
        e.add_term(x, 1.0).add_term(y, 1.0);
        m.add_ge(e, 1.0).unwrap();
        let mut obj = LinExpr::new();
        obj.add_term(x, 1.0).add_term(y, 1.0);
        m.set_objective(obj).unwrap();
        let (st, obj, _) = solve(&m);
        assert!(matches!(st, LpStatus::Optimal));
        assert!((obj - 1.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_with_certificate() {
        // x <= -1, x >= 0.
        let mut m = MilpModel::new();
        let x = m.add_variable(0.0, INF).unwrap();
        m.add_le(LinExpr::var(x), -1.0).unwrap();
        m.set_objective(LinExpr::constant(0.0)).unwrap();
        let f = StdForm::from_model(&m);
        let mut s = Simplex::new(&f);
        let r = s.solve_from_scratch().unwrap();
        let LpStatus::Infeasible(y) = r.status else {
            panic!("expected infeasible");
        };
        // Certificate: max over bounds of y'Ax must fall below y'b.
        let mut hi_bound = 0.0;
        for j in 0..f.n_struct + f.m {
            let yaj: f64 = f.cols[j].iter().map(|&(r, c)| y[r] * c).sum();
            let (lo, hi) = (f.lo[j], f.hi[j]);
            let best = (yaj * lo).max(yaj * hi);
            if best.is_nan() {
                continue;
            }
            hi_bound += if yaj == 0.0 { 0.0 } else { best };
        }
        let yb: f64 = y.iter().zip(&f.b).map(|(a, b)| a * b).sum();
        assert!(hi_bound < yb - 1e-9, "certificate not separating: {hi_bound} vs {yb}");
    }

    #[test]
    fn unbounded_detected() {
        let mut m = MilpModel::new();
        let x = m.add_variable(0.0, INF).unwrap();
        m.set_objective(LinExpr::term(x, -1.0)).unwrap();
        // Harmless constraint so the row set is nonempty.
        m.add_le(LinExpr::term(x, -1.0), 0.0).unwrap();
        let (st, _, _) = solve(&m);
        assert!(matches!(st, LpStatus::Unbounded(_)));
    }

    #[test]
    fn equality_rows_and_free_vars() {
        // min x + y s.t. x + y = 2, x - y = 0, x,y free.
        let mut m = MilpModel::new();
        let x = m.add_variable(-INF, INF).unwrap();
        let y = m.add_variable(-INF, INF).unwrap();
        let mut e1 = LinExpr::new();
        e1.add_term(x, 1.0).add_term(y, 1.0);
        m.add_eq(e1, 2.0).unwrap();
        let mut e2 = LinExpr::new();
        e2.add_term(x, 1.0).add_term(y, -1.0);
        m.add_eq(e2, 0.0).unwrap();
        let mut obj = LinExpr::new();
        obj.add_term(x, 1.0).add_term(y, 1.0);
        m.set_objective(obj).unwrap();
        let (st, obj, xs) = solve(&m);
        assert!(matches!(st, LpStatus::Optimal));
        assert!((obj - 2.0).abs() < 1e-8);
        assert!((xs[0] - 1.0).abs() < 1e-8 && (xs[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn negative_lower_bounds() {
        // min x with -5 <= x <= 5 and x >= -3 via row.
        let mut m = MilpModel::new();
        let x = m.add_variable(-5.0, 5.0).unwrap();
        m.add_ge(LinExpr::var(x), -3.0).unwrap();
        m.set_objective(LinExpr::var(x)).unwrap();
        let (st, obj, _) = solve(&m);
        assert!(matches!(st, LpStatus::Optimal));
        assert!((obj + 3.0).abs() < 1e-9);
    }

    /// Brute-force vertex enumeration oracle for box-bounded LPs.
    fn enumerate_optimum(
        a: &[Vec<f64>],
        b: &[f64],
        lo: &[f64],
        hi: &[f64],
        cost: &[f64],
    ) -> Option<f64> {
        let n = cost.len();
        // Candidate active sets: choose n hyperplanes among rows and bound planes.
        let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
        for (ai, &bi) in a.iter().zip(b) {
            planes.push((ai.clone(), bi));
        }
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            planes.push((e.clone(), lo[j]));
            planes.push((e, hi[j]));
        }
        let mut best: Option<f64> = None;
        let idx: Vec<usize> = (0..planes.len()).collect();
        let mut combo = vec![0usize; n];
        fn rec(
            planes: &[(Vec<f64>, f64)],
            idx: &[usize],
            combo: &mut Vec<usize>,
            pos: usize,
            start: usize,
            n: usize,
            a: &[Vec<f64>],
            b: &[f64],
            lo: &[f64],
            hi: &[f64],
            cost: &[f64],
            best: &mut Option<f64>,
        ) {
            if pos == n {
                let mut mat = DMatrix::zeros(n, n);
                let mut rhs = nalgebra::DVector::zeros(n);
                for (k, &pi) in combo.iter().enumerate() {
                    for j in 0..n {
                        mat[(k, j)] = planes[pi].0[j];
                    }
                    rhs[k] = planes[pi].1;
                }
                if let Some(inv) = mat.try_inverse() {
                    let x = inv * rhs;
                    let feas = a
                        .iter()
                        .zip(b)
                        .all(|(ai, &bi)| ai.iter().zip(x.iter()).map(|(c, v)| c * v).sum::<f64>() <= bi + 1e-7)
                        && (0..n).all(|j| x[j] >= lo[j] - 1e-7 && x[j] <= hi[j] + 1e-7);
                    if feas {
                        let obj: f64 = cost.iter().zip(x.iter()).map(|(c, v)| c * v).sum();
                        *best = Some(best.map_or(obj, |b: f64| b.min(obj)));
                    }
                }
                return;
            }
            for s in start..idx.len() {
                combo[pos] = idx[s];
                rec(planes, idx, combo, pos + 1, s + 1, n, a, b, lo, hi, cost, best);
            }
        }
        rec(&planes, &idx, &mut combo, 0, 0, n, a, b, lo, hi, cost, &mut best);
        best
    }

    #[test]
    fn random_lps_match_vertex_enumeration() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for case in 0..120 {
            let n = rng.gen_range(2..=4);
            let rows = rng.gen_range(1..=5);
            let mut a = vec![vec![0.0; n]; rows];
            let mut b = vec![0.0; rows];
            let mut lo = vec![0.0; n];
            let mut hi = vec![0.0; n];
            for j in 0..n {
                lo[j] = rng.gen_range(-3.0..0.0);
                hi[j] = lo[j] + rng.gen_range(0.5..4.0);
            }
            for i in 0..rows {
                for j in 0..n {
                    a[i][j] = rng.gen_range(-2.0..2.0);
                }
                b[i] = rng.gen_range(-1.0..3.0);
            }
            let cost: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();

            let mut m = MilpModel::new();
            let vars: Vec<_> = (0..n).map(|j| m.add_variable(lo[j], hi[j]).unwrap()).collect();
            for i in 0..rows {
                let mut e = LinExpr::new();
                for j in 0..n {
                    e.add_term(vars[j], a[i][j]);
                }
                m.add_le(e, b[i]).unwrap();
            }
            let mut obj = LinExpr::new();
            for j in 0..n {
                obj.add_term(vars[j], cost[j]);
            }
            m.set_objective(obj).unwrap();

            let (st, got, xs) = solve(&m);
            let want = enumerate_optimum(&a, &b, &lo, &hi, &cost);
            match (st, want) {
                (LpStatus::Optimal, Some(w)) => {
                    assert!(
                        (got - w).abs() < 1e-6,
                        "case {case}: simplex {got} vs oracle {w}"
                    );
                    // Returned point is feasible.
                    for i in 0..rows {
                        let lhs: f64 = (0..n).map(|j| a[i][j] * xs[j]).sum();
                        assert!(lhs <= b[i] + 1e-7);
                    }
                }
                (LpStatus::Infeasible(_), None) => {}
                (st, want) => panic!("case {case}: status {st:?} vs oracle {want:?}"),
            }
        }
    }

    #[test]
    fn warm_start_dual_reoptimizes_after_bound_change() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..40 {
            let n = 5;
            let rows = 6;
            let mut m = MilpModel::new();
            let vars: Vec<_> = (0..n).map(|_| m.add_variable(0.0, 1.0).unwrap()).collect();
            for _ in 0..rows {
                let mut e = LinExpr::new();
                for v in &vars {
                    e.add_term(*v, rng.gen_range(-2.0..2.0));
                }
                m.add_le(e, rng.gen_range(0.0..2.0)).unwrap();
            }
            let mut obj = LinExpr::new();
            for v in &vars {
                obj.add_term(*v, rng.gen_range(-2.0..2.0));
            }
            m.set_objective(obj).unwrap();

            let f = StdForm::from_model(&m);
            let mut s = Simplex::new(&f);
            let root = s.solve_from_scratch().unwrap();
            if !matches!(root.status, LpStatus::Optimal) {
                continue;
            }
            let snap = s.snapshot();
            // Fix the first variable to 1 and reoptimize warm and cold.
            let mut warm = Simplex::new(&f);
            warm.set_var_bounds(0, 1.0, 1.0);
            let wres = warm.solve_warm(&snap).unwrap();
            let mut cold = Simplex::new(&f);
            cold.set_var_bounds(0, 1.0, 1.0);
            let cres = cold.solve_from_scratch().unwrap();
            match (&wres.status, &cres.status) {
                (LpStatus::Optimal, LpStatus::Optimal) => {
                    assert!((wres.obj - cres.obj).abs() < 1e-7, "{} vs {}", wres.obj, cres.obj);
                }
                (LpStatus::Infeasible(_), LpStatus::Infeasible(_)) => {}
                (a, b) => panic!("warm {a:?} vs cold {b:?}"),
            }
        }
    }
}
