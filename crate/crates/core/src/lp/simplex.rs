//! Bounded-variable primal simplex on a dense-LU basis.
//!
//! Columns are the structural variables followed by one slack per row
//! (`<=` slack in [0, inf), `>=` slack in (-inf, 0], `=` slack fixed at 0),
//! so every constraint is an equality and any column set of size m with a
//! nonsingular matrix is a basis. Infeasible starts are handled by a
//! composite phase 1 that minimizes the bound violations of the basic
//! variables; the same path restores feasibility after bound changes,
//! added cuts, or a reloaded basis, which is what makes warm starts cheap.
//!
//! Pivoting is deterministic: Dantzig pricing with lowest-index
//! tie-breaking, switching to Bland's rule after 10*n consecutive
//! degenerate steps. The basis factorization is refreshed every
//! [`REFACTOR_EVERY`] pivots; in between, product-form eta vectors keep
//! FTRAN/BTRAN exact.

use super::dense_lu::DenseLu;
use super::{LpError, LpModel, MilpSolution, Sense, Status, FEAS_TOL};

const REFACTOR_EVERY: usize = 100;
/// Conclusions reached on a long eta file are re-verified on a fresh factor.
const CONCLUDE_ETA_LIMIT: usize = 64;
const PIVOT_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const DEGEN_STEP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CStat {
    Basic,
    Lower,
    Upper,
    /// Nonbasic free variable parked at zero.
    FreeZero,
}

/// Basis state that can be carried across re-built models of identical
/// shape (warm starts between coordination iterations and B&B nodes).
#[derive(Debug, Clone)]
pub struct BasisSnapshot {
    stat: Vec<CStat>,
    basic: Vec<u32>,
}

struct Eta {
    r: usize,
    w: Vec<f64>,
}

/// A live solvable LP: computational form plus factorized basis.
pub struct Instance {
    m: usize,
    ncols: usize,
    nstruct: usize,
    cols: Vec<Vec<(u32, f64)>>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    obj: Vec<f64>,
    rhs: Vec<f64>,
    stat: Vec<CStat>,
    basic: Vec<u32>,
    basic_pos: Vec<u32>,
    lu: DenseLu,
    etas: Vec<Eta>,
    xb: Vec<f64>,
    need_refactor: bool,
    pivots_since_refactor: usize,
    degen_streak: usize,
    total_iterations: usize,
    parallel: bool,
}

impl Instance {
    /// Build the computational form. Binary marks are relaxed to their
    /// [lb, ub] boxes; integrality is the branch-and-bound layer's job.
    pub fn from_model(model: &LpModel, parallel: bool) -> Result<Instance, LpError> {
        model.validate()?;
        let m = model.n_rows();
        let nstruct = model.n_vars();
        let ncols = nstruct + m;
        let mut cols: Vec<Vec<(u32, f64)>> = vec![Vec::new(); ncols];
        let mut lb = Vec::with_capacity(ncols);
        let mut ub = Vec::with_capacity(ncols);
        let mut obj = vec![0.0; ncols];
        for (j, v) in model.vars.iter().enumerate() {
            lb.push(v.lb);
            ub.push(v.ub);
            obj[j] = v.obj;
        }
        let mut rhs = Vec::with_capacity(m);
        for (i, row) in model.rows.iter().enumerate() {
            for &(v, c) in &row.coeffs {
                cols[v].push((i as u32, c));
            }
            let s = nstruct + i;
            cols[s].push((i as u32, 1.0));
            let (slb, sub) = slack_bounds(row.sense);
            lb.push(slb);
            ub.push(sub);
            rhs.push(row.rhs);
        }
        let mut inst = Instance {
            m,
            ncols,
            nstruct,
            cols,
            lb,
            ub,
            obj,
            rhs,
            stat: Vec::new(),
            basic: Vec::new(),
            basic_pos: Vec::new(),
            lu: DenseLu::default(),
            etas: Vec::new(),
            xb: vec![0.0; m],
            need_refactor: true,
            pivots_since_refactor: 0,
            degen_streak: 0,
            total_iterations: 0,
            parallel,
        };
        inst.reset_basis();
        Ok(inst)
    }

    /// All-slack basis, structurals at their nearest finite bound.
    pub fn reset_basis(&mut self) {
        self.stat = (0..self.ncols).map(|j| self.default_stat(j)).collect();
        self.basic = Vec::with_capacity(self.m);
        self.basic_pos = vec![u32::MAX; self.ncols];
        for r in 0..self.m {
            let s = self.slack_col(r);
            self.stat[s] = CStat::Basic;
            self.basic.push(s as u32);
            self.basic_pos[s] = r as u32;
        }
        self.need_refactor = true;
    }

    /// Slack column of row r (row slacks are appended in row order).
    fn slack_col(&self, r: usize) -> usize {
        self.nstruct + r
    }

    fn default_stat(&self, j: usize) -> CStat {
        if self.lb[j].is_finite() {
            CStat::Lower
        } else if self.ub[j].is_finite() {
            CStat::Upper
        } else {
            CStat::FreeZero
        }
    }

    pub fn snapshot(&self) -> BasisSnapshot {
        BasisSnapshot { stat: self.stat.clone(), basic: self.basic.clone() }
    }

    /// Restore a basis saved from a model of identical shape. Falls back
    /// to the default basis if dimensions disagree.
    pub fn load_basis(&mut self, snap: &BasisSnapshot) {
        if snap.stat.len() != self.ncols || snap.basic.len() != self.m {
            self.reset_basis();
            return;
        }
        self.stat = snap.stat.clone();
        self.basic = snap.basic.clone();
        self.basic_pos = vec![u32::MAX; self.ncols];
        for (r, &c) in self.basic.iter().enumerate() {
            self.basic_pos[c as usize] = r as u32;
        }
        for j in 0..self.ncols {
            match self.stat[j] {
                CStat::Lower if !self.lb[j].is_finite() => self.stat[j] = self.default_stat(j),
                CStat::Upper if !self.ub[j].is_finite() => self.stat[j] = self.default_stat(j),
                _ => {}
            }
        }
        self.need_refactor = true;
    }

    pub fn set_col_bounds(&mut self, col: usize, lb: f64, ub: f64) {
        debug_assert!(lb <= ub);
        self.lb[col] = lb;
        self.ub[col] = ub;
        if self.basic_pos[col] == u32::MAX {
            self.stat[col] = match self.stat[col] {
                CStat::Upper if ub.is_finite() => CStat::Upper,
                _ => self.default_stat(col),
            };
        }
    }

    pub fn col_bounds(&self, col: usize) -> (f64, f64) {
        (self.lb[col], self.ub[col])
    }

    pub fn set_col_obj(&mut self, col: usize, c: f64) {
        self.obj[col] = c;
    }

    /// Append one row (and its slack) to the live instance; the new slack
    /// enters the basis so earlier work is retained.
    pub fn add_row(&mut self, coeffs: &[(usize, f64)], sense: Sense, rhs: f64) -> usize {
        let r = self.m;
        for &(v, c) in coeffs {
            debug_assert!(v < self.nstruct);
            if c != 0.0 {
                self.cols[v].push((r as u32, c));
            }
        }
        let s = self.ncols;
        debug_assert_eq!(s, self.nstruct + r);
        let (slb, sub) = slack_bounds(sense);
        self.cols.push(vec![(r as u32, 1.0)]);
        self.lb.push(slb);
        self.ub.push(sub);
        self.obj.push(0.0);
        self.stat.push(CStat::Basic);
        self.basic.push(s as u32);
        self.basic_pos.push(r as u32);
        self.rhs.push(rhs);
        self.xb.push(0.0);
        self.m += 1;
        self.ncols += 1;
        self.need_refactor = true;
        r
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.stat[j] {
            CStat::Basic => unreachable!("basic column has no nonbasic value"),
            CStat::Lower => self.lb[j],
            CStat::Upper => self.ub[j],
            CStat::FreeZero => 0.0,
        }
    }

    /// Current value of any column.
    pub fn col_value(&self, j: usize) -> f64 {
        if self.basic_pos[j] != u32::MAX {
            self.xb[self.basic_pos[j] as usize]
        } else {
            self.nonbasic_value(j)
        }
    }

    pub fn structural_values(&self) -> Vec<f64> {
        (0..self.nstruct).map(|j| self.col_value(j)).collect()
    }

    pub fn primal_objective(&self) -> f64 {
        (0..self.ncols).map(|j| self.obj[j] * self.col_value(j)).sum()
    }

    /// Duals from the current basis: y = c_B B^-T (marginal objective
    /// change per unit rhs increase).
    pub fn duals(&self) -> Vec<f64> {
        let mut y: Vec<f64> = self.basic.iter().map(|&c| self.obj[c as usize]).collect();
        self.btran(&mut y);
        y
    }

    /// Dual objective for weak-duality checks:
    /// y.rhs plus reduced costs times nonbasic bound values.
    pub fn dual_objective(&self) -> f64 {
        let y = self.duals();
        let mut v: f64 = y.iter().zip(&self.rhs).map(|(a, b)| a * b).sum();
        for j in 0..self.ncols {
            if self.basic_pos[j] == u32::MAX {
                let xj = self.nonbasic_value(j);
                if xj != 0.0 {
                    let d = self.obj[j] - self.col_dot(j, &y);
                    v += d * xj;
                }
            }
        }
        v
    }

    pub fn iterations(&self) -> usize {
        self.total_iterations
    }

    fn col_dot(&self, j: usize, y: &[f64]) -> f64 {
        self.cols[j].iter().map(|&(r, c)| c * y[r as usize]).sum()
    }

    fn ftran(&self, v: &mut [f64]) {
        self.lu.solve(v);
        for eta in &self.etas {
            let t = v[eta.r] / eta.w[eta.r];
            if t != 0.0 {
                for (vi, wi) in v.iter_mut().zip(&eta.w) {
                    *vi -= wi * t;
                }
            }
            v[eta.r] = t;
        }
    }

    fn btran(&self, v: &mut [f64]) {
        for eta in self.etas.iter().rev() {
            let dot: f64 = eta.w.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            v[eta.r] = (v[eta.r] - (dot - eta.w[eta.r] * v[eta.r])) / eta.w[eta.r];
        }
        self.lu.solve_transposed(v);
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        let mut resets = 0;
        loop {
            let mut dense = vec![0.0; m * m];
            for (r, &c) in self.basic.iter().enumerate() {
                for &(i, a) in &self.cols[c as usize] {
                    dense[i as usize + r * m] = a;
                }
            }
            match DenseLu::factor(dense, m, self.parallel) {
                Ok(lu) => {
                    self.lu = lu;
                    self.etas.clear();
                    self.pivots_since_refactor = 0;
                    self.need_refactor = false;
                    self.recompute_xb();
                    return Ok(());
                }
                Err(pos) if resets == 0 => {
                    // A stale warm basis can be singular under the rebuilt
                    // coefficients; restart from the all-slack identity.
                    log::debug!("singular basis at position {pos}; falling back to slack basis");
                    resets += 1;
                    self.reset_basis();
                }
                Err(pos) => {
                    return Err(LpError::Numerical(format!(
                        "slack basis reported singular at position {pos}"
                    )));
                }
            }
        }
    }

    fn recompute_xb(&mut self) {
        let mut v = self.rhs.clone();
        for j in 0..self.ncols {
            if self.basic_pos[j] == u32::MAX {
                let xj = self.nonbasic_value(j);
                if xj != 0.0 {
                    for &(r, c) in &self.cols[j] {
                        v[r as usize] -= c * xj;
                    }
                }
            }
        }
        self.ftran(&mut v);
        self.xb = v;
    }

    fn max_violation(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.m {
            let c = self.basic[r] as usize;
            let x = self.xb[r];
            if x > self.ub[c] {
                worst = worst.max(x - self.ub[c]);
            } else if x < self.lb[c] {
                worst = worst.max(self.lb[c] - x);
            }
        }
        worst
    }

    /// Before declaring a final status, make sure the conclusion does not
    /// rest on a long eta file. Returns true when the caller should
    /// re-price on the fresh factor instead of concluding.
    fn must_reverify(&mut self) -> Result<bool, LpError> {
        if self.etas.len() > CONCLUDE_ETA_LIMIT {
            self.refactor()?;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    /// Run the simplex from the current state to completion.
    pub fn solve(&mut self, pivot_limit: usize) -> Result<Status, LpError> {
        if self.need_refactor {
            self.refactor()?;
        } else {
            self.recompute_xb();
        }
        let mut iters_here = 0usize;
        let mut stuck_bland = false;
        loop {
            if self.pivots_since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
            }
            if iters_here > 10_000 && !stuck_bland {
                // tolerance thrash: drop to exact Bland pricing for the
                // rest of this call
                stuck_bland = true;
                self.refactor()?;
            }
            let phase1 = self.max_violation() > FEAS_TOL;
            let mut cb: Vec<f64> = Vec::with_capacity(self.m);
            for r in 0..self.m {
                let c = self.basic[r] as usize;
                if phase1 {
                    let x = self.xb[r];
                    cb.push(if x > self.ub[c] + FEAS_TOL {
                        1.0
                    } else if x < self.lb[c] - FEAS_TOL {
                        -1.0
                    } else {
                        0.0
                    });
                } else {
                    cb.push(self.obj[c]);
                }
            }
            let mut y = cb;
            self.btran(&mut y);
            let bland = stuck_bland || self.degen_streak > 10 * self.ncols;
            let mut enter: Option<(usize, f64, f64)> = None; // col, direction, |d|
            for j in 0..self.ncols {
                if self.basic_pos[j] != u32::MAX || self.lb[j] == self.ub[j] {
                    continue;
                }
                let cj = if phase1 { 0.0 } else { self.obj[j] };
                let d = cj - self.col_dot(j, &y);
                let dtol = DUAL_TOL * (1.0 + cj.abs());
                let dir = match self.stat[j] {
                    CStat::Lower if d < -dtol => 1.0,
                    CStat::Upper if d > dtol => -1.0,
                    CStat::FreeZero if d < -dtol => 1.0,
                    CStat::FreeZero if d > dtol => -1.0,
                    _ => continue,
                };
                if bland {
                    enter = Some((j, dir, d.abs()));
                    break;
                }
                if enter.as_ref().map_or(true, |&(_, _, best)| d.abs() > best) {
                    enter = Some((j, dir, d.abs()));
                }
            }
            let Some((q, dir, _)) = enter else {
                if self.must_reverify()? {
                    continue;
                }
                self.recompute_xb();
                if phase1 {
                    if self.max_violation() > FEAS_TOL {
                        return Ok(Status::Infeasible);
                    }
                    continue; // feasible after all: proceed with phase 2
                }
                return Ok(Status::Optimal);
            };
            // Direction of the basics as the entering column moves by +t*dir.
            let mut w = vec![0.0; self.m];
            for &(r, c) in &self.cols[q] {
                w[r as usize] = c;
            }
            self.ftran(&mut w);
            // Two-pass (Harris-style) ratio test. Pass 1 finds the largest
            // step that keeps every blocking row within the feasibility
            // tolerance; pass 2 picks, among rows blocking within that
            // relaxed step, the strict-ratio row with the best pivot
            // magnitude (lowest basic index in Bland mode). The entering
            // variable's own span competes as a bound flip.
            let span = self.ub[q] - self.lb[q];
            let mut t_relaxed = if span.is_finite() { span } else { f64::INFINITY };
            let block_of = |r: usize, rate: f64, xb: f64| -> Option<(f64, f64, CStat)> {
                // returns (strict limit, slack for relaxation, bound hit)
                let c = self.basic[r] as usize;
                if phase1 && xb > self.ub[c] + FEAS_TOL {
                    (rate < 0.0).then(|| (xb - self.ub[c], -rate, CStat::Upper))
                } else if phase1 && xb < self.lb[c] - FEAS_TOL {
                    (rate > 0.0).then(|| (self.lb[c] - xb, rate, CStat::Lower))
                } else if rate > 0.0 {
                    self.ub[c].is_finite().then(|| (self.ub[c] - xb, rate, CStat::Upper))
                } else {
                    self.lb[c].is_finite().then(|| (xb - self.lb[c], -rate, CStat::Lower))
                }
                .map(|(limit, rate_abs, target)| (limit.max(0.0), rate_abs, target))
            };
            for r in 0..self.m {
                let rate = -dir * w[r];
                if rate.abs() <= PIVOT_TOL {
                    continue;
                }
                if let Some((limit, rate_abs, _)) = block_of(r, rate, self.xb[r]) {
                    let t = (limit + FEAS_TOL) / rate_abs;
                    if t < t_relaxed {
                        t_relaxed = t;
                    }
                }
            }
            let mut leave: Option<(usize, CStat)> = None;
            let mut t_best = if span.is_finite() { span.min(t_relaxed) } else { t_relaxed };
            let mut best_piv = 0.0f64;
            for r in 0..self.m {
                let rate = -dir * w[r];
                if rate.abs() <= PIVOT_TOL {
                    continue;
                }
                let Some((limit, rate_abs, target)) = block_of(r, rate, self.xb[r]) else { continue };
                let t_strict = limit / rate_abs;
                if t_strict > t_relaxed {
                    continue; // not binding within the relaxed step
                }
                let replace = match &leave {
                    None => true,
                    Some((lr, _)) if bland => self.basic[r] < self.basic[*lr],
                    Some(_) => w[r].abs() > best_piv,
                };
                if replace {
                    leave = Some((r, target));
                    best_piv = w[r].abs();
                }
                if t_strict < t_best {
                    t_best = t_strict;
                }
            }
            if leave.is_some() {
                // step to the chosen row's strict ratio
                let (r, _) = leave.as_ref().unwrap();
                let rate = (-dir * w[*r]).abs();
                let (limit, _, _) = block_of(*r, -dir * w[*r], self.xb[*r]).expect("blocking row");
                t_best = limit / rate;
            } else if span.is_finite() && span <= t_relaxed {
                t_best = span; // bound flip
            } else {
                if self.must_reverify()? {
                    continue;
                }
                // no blocking bound: genuinely unbounded in phase 2, or
                // tolerance noise; retry once with exact Bland pricing on
                // a fresh factor before concluding
                if !bland {
                    self.degen_streak = 10 * self.ncols + 1;
                    self.refactor()?;
                    continue;
                }
                self.recompute_xb();
                if phase1 {
                    return Err(LpError::Numerical("phase-1 ray with no blocking bound".into()));
                }
                return Ok(Status::Unbounded);
            }
            let step = dir * t_best;
            if step != 0.0 {
                for r in 0..self.m {
                    self.xb[r] -= w[r] * step;
                }
            }
            self.total_iterations += 1;
            iters_here += 1;
            if t_best <= DEGEN_STEP {
                self.degen_streak += 1;
            } else {
                self.degen_streak = 0;
            }
            match leave {
                None => {
                    // bound flip, no basis change
                    self.stat[q] = match self.stat[q] {
                        CStat::Lower => CStat::Upper,
                        CStat::Upper => CStat::Lower,
                        s => s,
                    };
                }
                Some((r, target)) => {
                    let entering_value = self.nonbasic_value(q) + step;
                    let out = self.basic[r] as usize;
                    self.etas.push(Eta { r, w });
                    self.pivots_since_refactor += 1;
                    self.basic[r] = q as u32;
                    self.basic_pos[q] = r as u32;
                    self.stat[q] = CStat::Basic;
                    self.basic_pos[out] = u32::MAX;
                    self.stat[out] = if self.lb[out] == self.ub[out] { CStat::Lower } else { target };
                    self.xb[r] = entering_value;
                }
            }
            if iters_here > pivot_limit {
                return Err(LpError::Numerical(format!(
                    "simplex iteration limit {pivot_limit} exceeded (m={}, n={})",
                    self.m, self.nstruct
                )));
            }
        }
    }
}

fn slack_bounds(sense: Sense) -> (f64, f64) {
    match sense {
        Sense::Le => (0.0, f64::INFINITY),
        Sense::Ge => (f64::NEG_INFINITY, 0.0),
        Sense::Eq => (0.0, 0.0),
    }
}

/// Solve a pure LP (integrality marks relaxed to their boxes).
pub fn solve_lp(model: &LpModel) -> Result<MilpSolution, LpError> {
    solve_lp_warm(model, None).map(|(s, _)| s)
}

/// Solve with an optional warm basis; returns the final basis for reuse.
pub fn solve_lp_warm(
    model: &LpModel,
    warm: Option<&BasisSnapshot>,
) -> Result<(MilpSolution, BasisSnapshot), LpError> {
    let mut inst = Instance::from_model(model, crate::exec::parallel_available())?;
    if let Some(b) = warm {
        inst.load_basis(b);
    }
    let status = inst.solve(pivot_budget(model))?;
    let snap = inst.snapshot();
    Ok((package(&inst, model, status, 0), snap))
}

pub(crate) fn pivot_budget(model: &LpModel) -> usize {
    50_000 + 40 * (model.n_rows() + model.n_vars())
}

pub(crate) fn package(inst: &Instance, model: &LpModel, status: Status, nodes: usize) -> MilpSolution {
    let primal = inst.structural_values();
    let (objective, duals) = if status == Status::Optimal {
        (model.objective_value(&primal), inst.duals())
    } else {
        (f64::NAN, vec![0.0; model.n_rows()])
    };
    MilpSolution {
        status,
        objective,
        primal,
        duals,
        node_count: nodes,
        simplex_iterations: inst.iterations(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::VarKind;

    #[test]
    fn min_x_with_floor_row() {
        let mut m = LpModel::new();
        let x = m.add_var("x", 0.0, 10.0, 1.0, VarKind::Continuous);
        m.add_row(vec![(x, 1.0)], Sense::Ge, 3.0);
        let s = solve_lp(&m).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.objective - 3.0).abs() < 1e-9);
        assert!((s.primal[x] - 3.0).abs() < 1e-9);
        assert!((s.duals[0] - 1.0).abs() < 1e-9, "duals {:?}", s.duals);
    }

    #[test]
    fn simple_box_lp() {
        let mut m = LpModel::new();
        let x = m.add_var("x", 0.0, f64::INFINITY, -1.0, VarKind::Continuous);
        let y = m.add_var("y", 0.0, f64::INFINITY, -1.0, VarKind::Continuous);
        m.add_row(vec![(x, 1.0), (y, 1.0)], Sense::Le, 1.0);
        let s = solve_lp(&m).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.objective + 1.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded_are_statuses() {
        let mut m = LpModel::new();
        let x = m.add_var("x", 0.0, 1.0, 1.0, VarKind::Continuous);
        m.add_row(vec![(x, 1.0)], Sense::Ge, 2.0);
        assert_eq!(solve_lp(&m).unwrap().status, Status::Infeasible);

        let mut m2 = LpModel::new();
        let z = m2.add_var("z", f64::NEG_INFINITY, f64::INFINITY, 1.0, VarKind::Continuous);
        let w = m2.add_var("w", 0.0, f64::INFINITY, 0.0, VarKind::Continuous);
        m2.add_row(vec![(z, 1.0), (w, 1.0)], Sense::Le, 4.0);
        assert_eq!(solve_lp(&m2).unwrap().status, Status::Unbounded);
    }

    #[test]
    fn equality_rows_and_negative_bounds() {
        let mut m = LpModel::new();
        let x = m.add_var("x", -5.0, 5.0, 2.0, VarKind::Continuous);
        let y = m.add_var("y", -5.0, 5.0, -3.0, VarKind::Continuous);
        m.add_row(vec![(x, 1.0), (y, 1.0)], Sense::Eq, 1.0);
        let s = solve_lp(&m).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.primal[x] - (-4.0)).abs() < 1e-9);
        assert!((s.primal[y] - 5.0).abs() < 1e-9);
        assert!((s.objective - (2.0 * -4.0 - 3.0 * 5.0)).abs() < 1e-9);
    }

    #[test]
    fn warm_start_after_added_row() {
        let mut m = LpModel::new();
        let x = m.add_var("x", 0.0, 10.0, -1.0, VarKind::Continuous);
        let y = m.add_var("y", 0.0, 10.0, -2.0, VarKind::Continuous);
        m.add_row(vec![(x, 1.0), (y, 1.0)], Sense::Le, 8.0);
        let mut inst = Instance::from_model(&m, false).unwrap();
        assert_eq!(inst.solve(10_000).unwrap(), Status::Optimal);
        assert!((inst.primal_objective() + 16.0).abs() < 1e-9);
        inst.add_row(&[(y, 1.0)], Sense::Le, 5.0);
        assert_eq!(inst.solve(10_000).unwrap(), Status::Optimal);
        assert!((inst.col_value(y) - 5.0).abs() < 1e-9);
        assert!((inst.col_value(x) - 3.0).abs() < 1e-9);
    }

    #[test]
    fn bound_change_restoration() {
        let mut m = LpModel::new();
        let x = m.add_var("x", 0.0, 1.0, -1.0, VarKind::Continuous);
        let y = m.add_var("y", 0.0, 1.0, -1.0, VarKind::Continuous);
        m.add_row(vec![(x, 1.0), (y, 2.0)], Sense::Le, 2.0);
        let mut inst = Instance::from_model(&m, false).unwrap();
        assert_eq!(inst.solve(10_000).unwrap(), Status::Optimal);
        inst.set_col_bounds(x, 0.0, 0.0); // fix x = 0 as branch-and-bound would
        assert_eq!(inst.solve(10_000).unwrap(), Status::Optimal);
        assert!((inst.col_value(x)).abs() < 1e-9);
        assert!((inst.col_value(y) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn weak_duality_on_random_lps() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let mut optimal_seen = 0;
        for case in 0..80 {
            let n = rng.gen_range(1..8);
            let k = rng.gen_range(1..10);
            let mut m = LpModel::new();
            for j in 0..n {
                let lb = rng.gen_range(-4.0..0.0);
                let ub = lb + rng.gen_range(0.5..6.0);
                m.add_var(format!("x{j}"), lb, ub, rng.gen_range(-3.0..3.0), VarKind::Continuous);
            }
            for _ in 0..k {
                let mut coeffs: Vec<(usize, f64)> = Vec::new();
                for j in 0..n {
                    if rng.gen_bool(0.7) {
                        coeffs.push((j, rng.gen_range(-2.0..2.0)));
                    }
                }
                if coeffs.is_empty() {
                    continue;
                }
                let sense = match rng.gen_range(0..3) {
                    0 => Sense::Le,
                    1 => Sense::Ge,
                    _ => Sense::Eq,
                };
                m.add_row(coeffs, sense, rng.gen_range(-3.0..3.0));
            }
            if m.n_rows() == 0 {
                continue;
            }
            let mut inst = Instance::from_model(&m, false).unwrap();
            let status = inst.solve(50_000).unwrap();
            if status == Status::Optimal {
                optimal_seen += 1;
                let p = inst.primal_objective();
                let d = inst.dual_objective();
                assert!(
                    (p - d).abs() <= 1e-7 * (1.0 + p.abs()),
                    "case {case}: primal {p} dual {d}"
                );
            }
        }
        assert!(optimal_seen > 20, "sampler produced too few solvable LPs");
    }
}
