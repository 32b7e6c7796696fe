//! Embedded LP/MILP capability behind a small solving interface.
//!
//! The container is a sparse row/column model with bounds and binary
//! marks. The embedded solver is a bounded-variable primal simplex on a
//! dense-LU factorized basis (desk-scale instances), plus a deterministic
//! best-first branch-and-bound for the binary commitment variables. An
//! external MILP command can be substituted behind [`Solver`] for
//! large-scale interop; the model then travels through the LP text format.

mod branch_bound;
mod dense_lu;
pub mod external;
mod simplex;

pub use branch_bound::{solve_milp, solve_milp_warm};
pub use simplex::{solve_lp, solve_lp_warm, BasisSnapshot, Instance};

use std::collections::HashMap;

use crate::linearizer::LinearCut;

/// Integrality mark of a variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

/// Constraint row sense.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

/// Solve status of an LP or MILP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    /// Node or iteration budget exhausted; incumbent (if any) is returned.
    IterationLimit,
}

#[derive(Debug, thiserror::Error)]
pub enum LpError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("unknown variable name `{0}`")]
    UnknownVariable(String),
    #[error("numerical breakdown: {0}")]
    Numerical(String),
    #[error("external solver failure: {0}")]
    External(String),
}

#[derive(Debug, Clone)]
pub(crate) struct Var {
    pub name: String,
    pub lb: f64,
    pub ub: f64,
    pub obj: f64,
    pub kind: VarKind,
}

#[derive(Debug, Clone)]
pub(crate) struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// Sparse linear program with integrality marks. Objective sense is
/// always minimize.
#[derive(Debug, Clone, Default)]
pub struct LpModel {
    pub(crate) vars: Vec<Var>,
    pub(crate) rows: Vec<Row>,
    name_index: HashMap<String, usize>,
}

impl LpModel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add a variable; names must be unique within the model.
    pub fn add_var(&mut self, name: impl Into<String>, lb: f64, ub: f64, obj: f64, kind: VarKind) -> usize {
        let name = name.into();
        let id = self.vars.len();
        let prev = self.name_index.insert(name.clone(), id);
        assert!(prev.is_none(), "duplicate variable name `{name}`");
        assert!(lb <= ub, "variable `{name}`: lb {lb} > ub {ub}");
        self.vars.push(Var { name, lb, ub, obj, kind });
        id
    }

    pub fn var_id(&self, name: &str) -> Option<usize> {
        self.name_index.get(name).copied()
    }

    pub fn var_name(&self, id: usize) -> &str {
        &self.vars[id].name
    }

    pub fn bounds(&self, id: usize) -> (f64, f64) {
        (self.vars[id].lb, self.vars[id].ub)
    }

    pub fn set_bounds(&mut self, id: usize, lb: f64, ub: f64) {
        assert!(lb <= ub);
        self.vars[id].lb = lb;
        self.vars[id].ub = ub;
    }

    pub fn set_obj(&mut self, id: usize, obj: f64) {
        self.vars[id].obj = obj;
    }

    pub fn add_obj(&mut self, id: usize, obj: f64) {
        self.vars[id].obj += obj;
    }

    pub fn kind(&self, id: usize) -> VarKind {
        self.vars[id].kind
    }

    pub fn n_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Add a constraint row. Duplicate variable entries are merged; zero
    /// coefficients dropped.
    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> usize {
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(coeffs.len());
        let mut sorted = coeffs;
        sorted.sort_unstable_by_key(|&(v, _)| v);
        for (v, c) in sorted {
            assert!(v < self.vars.len(), "row references unknown variable id {v}");
            if let Some(last) = merged.last_mut() {
                if last.0 == v {
                    last.1 += c;
                    continue;
                }
            }
            merged.push((v, c));
        }
        merged.retain(|&(_, c)| c != 0.0);
        let id = self.rows.len();
        self.rows.push(Row { coeffs: merged, sense, rhs });
        id
    }

    /// Append a cut produced by the linearizer. Coefficients are resolved
    /// by variable name; re-solves warm-start from the previous basis.
    pub fn add_cut(&mut self, cut: &LinearCut) -> Result<usize, LpError> {
        let mut coeffs = Vec::with_capacity(cut.coeffs.len());
        for (name, c) in &cut.coeffs {
            let id = self
                .var_id(name)
                .ok_or_else(|| LpError::UnknownVariable(name.clone()))?;
            coeffs.push((id, *c));
        }
        Ok(self.add_row(coeffs, cut.sense, cut.rhs))
    }

    /// Structural sanity used by the solvers and the LP writer.
    pub fn validate(&self) -> Result<(), LpError> {
        for v in &self.vars {
            if !(v.lb <= v.ub) {
                return Err(LpError::InvalidModel(format!("variable `{}`: bounds crossed", v.name)));
            }
            if v.lb.is_nan() || v.ub.is_nan() || !v.obj.is_finite() {
                return Err(LpError::InvalidModel(format!("variable `{}`: non-finite data", v.name)));
            }
        }
        for (i, r) in self.rows.iter().enumerate() {
            if r.coeffs.is_empty() {
                return Err(LpError::InvalidModel(format!("row {i} has no nonzero coefficient")));
            }
            if !r.rhs.is_finite() || r.coeffs.iter().any(|&(_, c)| !c.is_finite()) {
                return Err(LpError::InvalidModel(format!("row {i}: non-finite data")));
            }
        }
        Ok(())
    }

    pub fn binary_ids(&self) -> Vec<usize> {
        (0..self.vars.len()).filter(|&i| self.vars[i].kind == VarKind::Binary).collect()
    }

    /// Row activity at a point given by a dense value vector.
    pub fn row_activity(&self, row: usize, x: &[f64]) -> f64 {
        self.rows[row].coeffs.iter().map(|&(v, c)| c * x[v]).sum()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.vars.iter().zip(x).map(|(v, &xv)| v.obj * xv).sum()
    }
}

/// Result of an LP or MILP solve.
#[derive(Debug, Clone)]
pub struct MilpSolution {
    pub status: Status,
    pub objective: f64,
    /// Value per structural variable (model order).
    pub primal: Vec<f64>,
    /// Dual value per row: marginal objective change per unit rhs
    /// increase. For MILPs these come from the final LP re-solve with
    /// binaries fixed at the incumbent.
    pub duals: Vec<f64>,
    pub node_count: usize,
    pub simplex_iterations: usize,
}

impl MilpSolution {
    pub fn value(&self, model: &LpModel, name: &str) -> f64 {
        self.primal[model.var_id(name).expect("unknown variable")]
    }
}

/// Solving interface: embedded simplex/branch-and-bound, or a
/// user-supplied external MILP command (see [`external`]).
#[derive(Debug, Clone, Default)]
pub enum Solver {
    #[default]
    Embedded,
    External(external::ExternalSolver),
}

impl Solver {
    pub fn solve_lp(&self, model: &LpModel) -> Result<MilpSolution, LpError> {
        match self {
            Solver::Embedded => solve_lp(model),
            Solver::External(ext) => ext.solve(model),
        }
    }

    pub fn solve_milp(&self, model: &LpModel, gap_tol: f64, node_limit: usize) -> Result<MilpSolution, LpError> {
        match self {
            Solver::Embedded => solve_milp(model, gap_tol, node_limit),
            Solver::External(ext) => ext.solve(model),
        }
    }
}

/// Debug helpers for examples: variable name and raw row access.
pub fn name_of(model: &LpModel, id: usize) -> &str {
    model.var_name(id)
}

pub fn row_of(model: &LpModel, i: usize) -> (&[(usize, f64)], Sense, f64) {
    let r = &model.rows[i];
    (&r.coeffs, r.sense, r.rhs)
}

#[cfg(test)]
pub(crate) fn dense_lu_for_tests(a: Vec<f64>, m: usize) -> Result<dense_lu::DenseLu, usize> {
    dense_lu::DenseLu::factor(a, m, false)
}

/// Absolute feasibility tolerance on row activity.
pub const FEAS_TOL: f64 = 1e-7;
/// Integrality tolerance for binaries.
pub const INT_TOL: f64 = 1e-6;
