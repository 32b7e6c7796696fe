//! Subproblem assembly and surrogate Lagrangian bookkeeping.
//!
//! [`tso`] builds the linearized zonal transmission MILPs, [`dso`] the
//! feeder LPs with their cut loops. This module owns the shared state
//! types (operating point, multipliers, residuals), the residual
//! assembly, and the surrogate value used by the acceptance test of each
//! phase.

pub mod dso;
pub mod tso;

use std::collections::HashMap;

use crate::model::{GridCase, LambdaInit, ModelError};

pub use dso::{build_dso, solve_dso, DsoModel, DsoObjectives};
pub use tso::{build_tso_zonal, BuildOpts, ZonalModel};

#[derive(Debug, thiserror::Error)]
pub enum SubproblemError {
    #[error("lp error in {context}: {source}")]
    Lp {
        context: String,
        #[source]
        source: crate::lp::LpError,
    },
    #[error("{context}: solver returned {status:?}")]
    BadStatus { context: String, status: crate::lp::Status },
    #[error("feeder cut loop did not converge within {rounds} rounds (worst violation {worst})")]
    CutLoop { rounds: usize, worst: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Dense `[period][index]` table of f64 values.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2 {
    nt: usize,
    n: usize,
    data: Vec<f64>,
}

impl Grid2 {
    pub fn zeros(nt: usize, n: usize) -> Self {
        Grid2 { nt, n, data: vec![0.0; nt * n] }
    }

    pub fn filled(nt: usize, n: usize, v: f64) -> Self {
        Grid2 { nt, n, data: vec![v; nt * n] }
    }

    #[inline]
    pub fn get(&self, t: usize, i: usize) -> f64 {
        debug_assert!(t < self.nt && i < self.n);
        self.data[t * self.n + i]
    }

    #[inline]
    pub fn set(&mut self, t: usize, i: usize, v: f64) {
        debug_assert!(t < self.nt && i < self.n);
        self.data[t * self.n + i] = v;
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// Per-feeder slice of the primal iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct DsoPoint {
    pub gen_p: Grid2,
    pub gen_q: Grid2,
    /// Squared voltage magnitudes, p.u.^2.
    pub v2: Grid2,
    /// Scaled squared currents (MW^2 per p.u.^2 of voltage).
    pub a2: Grid2,
    pub flow_p: Grid2,
    pub flow_q: Grid2,
}

/// The full primal iterate; TSO-side values double as the linearization
/// anchor for the next zonal build.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint {
    /// Commitments as 0/1 values per unit and period.
    pub commit: Grid2,
    pub gen_p: Grid2,
    pub gen_q: Grid2,
    pub v_re: Grid2,
    pub v_im: Grid2,
    pub flow_p: Grid2,
    pub flow_q: Grid2,
    /// Interface exchange seen from the TSO side, per feeder.
    pub pt_p: Grid2,
    pub pt_q: Grid2,
    /// Interface exchange seen from the DSO side, per feeder.
    pub pd_p: Grid2,
    pub pd_q: Grid2,
    /// Soft lower-voltage slacks per TSO bus.
    pub v_pen: Grid2,
    pub dso: Vec<DsoPoint>,
    /// Set only after the point passes the nonlinear feasibility audit.
    pub feasible: bool,
}

impl OperatingPoint {
    /// Flat start: unit voltage (1, 0) at every bus (or the case warm
    /// start), everything else zero.
    pub fn flat_start(case: &GridCase) -> Self {
        let t = case.periods();
        let nb = case.tso_buses.len();
        let nu = case.tso_units.len();
        let nl = case.tso_lines.len();
        let nd = case.dsos.len();
        let mut v_re = Grid2::filled(t, nb, 1.0);
        let mut v_im = Grid2::zeros(t, nb);
        if let Some(ws) = &case.warm_start {
            for wv in &ws.tso_voltages {
                if let Some(b) = case.bus_position(wv.bus) {
                    for tt in 0..t {
                        v_re.set(tt, b, wv.re);
                        v_im.set(tt, b, wv.im);
                    }
                }
            }
        }
        let dso = case
            .dsos
            .iter()
            .map(|d| DsoPoint {
                gen_p: Grid2::zeros(t, d.units.len()),
                gen_q: Grid2::zeros(t, d.units.len()),
                v2: Grid2::filled(t, d.buses.len(), 1.0),
                a2: Grid2::zeros(t, d.lines.len()),
                flow_p: Grid2::zeros(t, d.lines.len()),
                flow_q: Grid2::zeros(t, d.lines.len()),
            })
            .collect();
        OperatingPoint {
            commit: Grid2::zeros(t, nu),
            gen_p: Grid2::zeros(t, nu),
            gen_q: Grid2::zeros(t, nu),
            v_re,
            v_im,
            flow_p: Grid2::zeros(t, nl),
            flow_q: Grid2::zeros(t, nl),
            pt_p: Grid2::zeros(t, nd),
            pt_q: Grid2::zeros(t, nd),
            pd_p: Grid2::zeros(t, nd),
            pd_q: Grid2::zeros(t, nd),
            v_pen: Grid2::zeros(t, nb),
            dso,
            feasible: false,
        }
    }
}

/// All dual information of the coordination loop.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierState {
    /// Nodal balance multipliers per TSO bus and period, $/MWh, $/MVArh.
    pub lambda_p: Grid2,
    pub lambda_q: Grid2,
    /// Interface equality multipliers per feeder and period.
    pub psi_p: Grid2,
    pub psi_q: Grid2,
    /// Flexible penalization multipliers on the soft voltage slacks
    /// (projected nonnegative).
    pub lambda_pen: Grid2,
    pub s: f64,
    pub c: f64,
    pub c_p: f64,
    /// Count of accepted multiplier updates.
    pub k: usize,
}

impl MultiplierState {
    pub fn init(case: &GridCase, view: &CaseView, mode: LambdaInit) -> Self {
        let t = case.periods();
        let nb = case.tso_buses.len();
        let nd = case.dsos.len();
        let mut lambda_p = Grid2::zeros(t, nb);
        let lambda_q = Grid2::zeros(t, nb);
        if mode == LambdaInit::GenerationCosts {
            // seed generator buses with the unit's first-period marginal cost
            for (u, unit) in case.tso_units.iter().enumerate() {
                let b = view.units[u].bus_pos;
                let seed = unit.cost_p[0];
                for tt in 0..t {
                    if lambda_p.get(tt, b) < seed {
                        lambda_p.set(tt, b, seed);
                    }
                }
            }
        }
        MultiplierState {
            lambda_p,
            lambda_q,
            psi_p: Grid2::zeros(t, nd),
            psi_q: Grid2::zeros(t, nd),
            lambda_pen: Grid2::zeros(t, nb),
            s: case.params.s0,
            c: case.params.c0,
            c_p: case.params.cp0,
            k: 0,
        }
    }
}

/// Violations of the relaxed constraints. Concatenation order for the
/// norm operations: balance_p, balance_q, delta_p, delta_q, pen.
/// `pen` entries are signed per the flexible-penalization rule: the slack
/// value when the soft voltage constraint is violated, minus the
/// quadratic slack when satisfied (so the multiplier decays).
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualVector {
    pub balance_p: Grid2,
    pub balance_q: Grid2,
    pub delta_p: Grid2,
    pub delta_q: Grid2,
    pub pen: Grid2,
}

impl ResidualVector {
    fn chunks(&self) -> [&Grid2; 5] {
        [&self.balance_p, &self.balance_q, &self.delta_p, &self.delta_q, &self.pen]
    }

    /// Two-norm over the full concatenation.
    pub fn norm2(&self) -> f64 {
        self.chunks()
            .iter()
            .flat_map(|g| g.values())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// One-norm over the full concatenation.
    pub fn norm1(&self) -> f64 {
        self.chunks().iter().flat_map(|g| g.values()).map(|v| v.abs()).sum()
    }

    /// Two-norm of the hard relaxed constraints only (balances and
    /// interface mismatches), used by the epsilon convergence branch.
    pub fn violation_norm2(&self) -> f64 {
        [&self.balance_p, &self.balance_q, &self.delta_p, &self.delta_q]
            .iter()
            .flat_map(|g| g.values())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Largest positive soft-voltage violation.
    pub fn max_pen_violation(&self) -> f64 {
        self.pen.values().iter().fold(0.0f64, |m, &v| m.max(v))
    }
}

// ---------------------------------------------------------------------------
// case view: positional indexing resolved once

#[derive(Debug, Clone)]
pub struct LineView {
    pub from_pos: usize,
    pub to_pos: usize,
    /// Coupling admittance scaled to MW per p.u.^2 voltage product.
    pub g_mw: f64,
    pub b_mw: f64,
    pub limit: f64,
    /// Owner zone (the sending bus's zone): the zone whose model carries
    /// this line's flow variables.
    pub zone: usize,
}

#[derive(Debug, Clone)]
pub struct UnitView {
    pub bus_pos: usize,
    pub zone: usize,
}

#[derive(Debug, Clone)]
pub struct DsoLineView {
    pub from_pos: usize,
    pub to_pos: usize,
    /// Series impedance scaled for MW flows (r / base, x / base).
    pub r_s: f64,
    pub x_s: f64,
    /// Shunt admittance scaled to MW at v2 = 1 (g * base, b * base).
    pub g_sh_mw: f64,
    pub b_sh_mw: f64,
    pub s_limit: f64,
}

#[derive(Debug, Clone)]
pub struct DsoView {
    pub head: usize,
    pub lines: Vec<DsoLineView>,
    /// Per feeder bus: outgoing (child) line indices / incoming (parent).
    pub lines_out: Vec<Vec<usize>>,
    pub lines_in: Vec<Vec<usize>>,
    pub units_at: Vec<Vec<usize>>,
    pub unit_bus: Vec<usize>,
}

/// Positional indexes and scaled electrical data derived from a validated
/// case. Immutable and shareable across workers.
#[derive(Debug, Clone)]
pub struct CaseView<'a> {
    pub case: &'a GridCase,
    pub nt: usize,
    /// Resolved zone per bus position.
    pub zones: Vec<usize>,
    pub nz: usize,
    pub lines: Vec<LineView>,
    pub units: Vec<UnitView>,
    pub lines_out: Vec<Vec<usize>>,
    pub lines_in: Vec<Vec<usize>>,
    pub units_at: Vec<Vec<usize>>,
    /// Feeder index attached at each bus position, if any.
    pub dso_at_bus: Vec<Option<usize>>,
    /// Root bus position per feeder.
    pub root_pos: Vec<usize>,
    pub dsos: Vec<DsoView>,
}

impl<'a> CaseView<'a> {
    /// Resolve positions and zones. `zone_override` forces an automatic
    /// partition into that many zones; otherwise explicit per-bus labels
    /// are honored and the default automatic partition fills the gap.
    pub fn new(case: &'a GridCase, zone_override: Option<usize>) -> Result<Self, ModelError> {
        let nb = case.tso_buses.len();
        let nt = case.periods();
        let pos_of: HashMap<usize, usize> =
            case.tso_buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect();

        let zones = match zone_override {
            Some(k) => crate::model::auto_zone(&case.tso_buses, &case.tso_lines, k)?,
            None => {
                if !case.tso_buses.is_empty() && case.tso_buses.iter().all(|b| b.zone.is_some()) {
                    case.tso_buses.iter().map(|b| b.zone.unwrap()).collect()
                } else {
                    crate::model::auto_zone(
                        &case.tso_buses,
                        &case.tso_lines,
                        case.default_zone_count().min(nb.max(1)),
                    )?
                }
            }
        };
        let nz = zones.iter().copied().max().map_or(1, |z| z + 1);

        let mut lines = Vec::with_capacity(case.tso_lines.len());
        let mut lines_out = vec![Vec::new(); nb];
        let mut lines_in = vec![Vec::new(); nb];
        for (i, l) in case.tso_lines.iter().enumerate() {
            let from_pos = pos_of[&l.from];
            let to_pos = pos_of[&l.to];
            lines.push(LineView {
                from_pos,
                to_pos,
                g_mw: l.g * case.base_mva,
                b_mw: l.b * case.base_mva,
                limit: l.flow_limit,
                zone: zones[from_pos],
            });
            lines_out[from_pos].push(i);
            lines_in[to_pos].push(i);
        }

        let mut units = Vec::with_capacity(case.tso_units.len());
        let mut units_at = vec![Vec::new(); nb];
        for (i, u) in case.tso_units.iter().enumerate() {
            let bus_pos = pos_of[&u.bus];
            units.push(UnitView { bus_pos, zone: zones[bus_pos] });
            units_at[bus_pos].push(i);
        }

        let mut dso_at_bus = vec![None; nb];
        let mut root_pos = Vec::with_capacity(case.dsos.len());
        let mut dsos = Vec::with_capacity(case.dsos.len());
        for (j, d) in case.dsos.iter().enumerate() {
            let rp = pos_of[&d.root_bus];
            dso_at_bus[rp] = Some(j);
            root_pos.push(rp);

            let dpos: HashMap<usize, usize> =
                d.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect();
            let n = d.buses.len();
            let mut dlines = Vec::with_capacity(d.lines.len());
            let mut dout = vec![Vec::new(); n];
            let mut din = vec![Vec::new(); n];
            for (li, l) in d.lines.iter().enumerate() {
                let f = dpos[&l.from];
                let to = dpos[&l.to];
                dlines.push(DsoLineView {
                    from_pos: f,
                    to_pos: to,
                    r_s: l.r / case.base_mva,
                    x_s: l.x / case.base_mva,
                    g_sh_mw: l.g_shunt * case.base_mva,
                    b_sh_mw: l.b_shunt * case.base_mva,
                    s_limit: l.s_limit,
                });
                dout[f].push(li);
                din[to].push(li);
            }
            let mut units_at_d = vec![Vec::new(); n];
            let mut unit_bus = Vec::with_capacity(d.units.len());
            for (ui, u) in d.units.iter().enumerate() {
                let b = dpos[&u.bus];
                units_at_d[b].push(ui);
                unit_bus.push(b);
            }
            dsos.push(DsoView {
                head: dpos[&d.head_bus],
                lines: dlines,
                lines_out: dout,
                lines_in: din,
                units_at: units_at_d,
                unit_bus,
            });
        }

        Ok(CaseView {
            case,
            nt,
            zones,
            nz,
            lines,
            units,
            lines_out,
            lines_in,
            units_at,
            dso_at_bus,
            root_pos,
            dsos,
        })
    }

    pub fn hours(&self) -> f64 {
        self.case.horizon.period_hours
    }
}

// ---------------------------------------------------------------------------
// objectives, residual, surrogate value

/// TSO objective: generation costs plus the cost of interface purchases
/// at the feeders' bids.
pub fn tso_objective(view: &CaseView, point: &OperatingPoint) -> f64 {
    let h = view.hours();
    let mut total = 0.0;
    for (u, unit) in view.case.tso_units.iter().enumerate() {
        for t in 0..view.nt {
            total += h * (unit.cost_p[t] * point.gen_p.get(t, u) + unit.cost_q[t] * point.gen_q.get(t, u));
        }
    }
    for (j, d) in view.case.dsos.iter().enumerate() {
        for t in 0..view.nt {
            total += h * (d.bid_p[t] * point.pt_p.get(t, j) + d.bid_q[t] * point.pt_q.get(t, j));
        }
    }
    total
}

/// Feeder objective: local generation cost minus the revenue of the
/// interface exchange priced at the nodal multipliers of its root bus.
pub fn dso_objective(view: &CaseView, point: &OperatingPoint, duals: &MultiplierState, j: usize) -> f64 {
    let h = view.hours();
    let root = view.root_pos[j];
    let mut total = dso_generation_cost(view, point, j);
    for t in 0..view.nt {
        total -= h
            * (duals.lambda_p.get(t, root) * point.pd_p.get(t, j)
                + duals.lambda_q.get(t, root) * point.pd_q.get(t, j));
    }
    total
}

pub fn dso_generation_cost(view: &CaseView, point: &OperatingPoint, j: usize) -> f64 {
    let h = view.hours();
    let d = &view.case.dsos[j];
    let dp = &point.dso[j];
    let mut total = 0.0;
    for (u, unit) in d.units.iter().enumerate() {
        for t in 0..view.nt {
            total += h * (unit.cost_p[t] * dp.gen_p.get(t, u) + unit.cost_q[t] * dp.gen_q.get(t, u));
        }
    }
    total
}

/// Price-free system cost: all generation costs plus interface purchases
/// at bids. This is the basis the oracle optimizes and the comparison
/// basis for coordination-benefit checks.
pub fn social_cost(view: &CaseView, point: &OperatingPoint) -> f64 {
    let mut total = tso_objective(view, point);
    for j in 0..view.case.dsos.len() {
        total += dso_generation_cost(view, point, j);
    }
    total
}

/// Nodal balance violation at one bus/period, oriented load side minus
/// generation side (positive when load goes unserved), using the point's
/// linearized flows. This orientation makes the balance multipliers the
/// positive locational prices the feeder objective's revenue term prices
/// its exchange at.
pub fn balance_at(view: &CaseView, point: &OperatingPoint, t: usize, b: usize) -> (f64, f64) {
    let bus = &view.case.tso_buses[b];
    let mut bp = bus.load_p[t];
    let mut bq = bus.load_q[t];
    for &u in &view.units_at[b] {
        bp -= point.gen_p.get(t, u);
        bq -= point.gen_q.get(t, u);
    }
    for &l in &view.lines_in[b] {
        bp -= point.flow_p.get(t, l);
        bq -= point.flow_q.get(t, l);
    }
    for &l in &view.lines_out[b] {
        bp += point.flow_p.get(t, l);
        bq += point.flow_q.get(t, l);
    }
    if let Some(j) = view.dso_at_bus[b] {
        bp -= point.pt_p.get(t, j);
        bq -= point.pt_q.get(t, j);
    }
    (bp, bq)
}

/// Assemble the residual vector at a point that is complete on both
/// sides: nodal balances from the point's flows, interface mismatches
/// `pd - pt`, and the signed flexible-penalization entries.
pub fn assemble_residual(view: &CaseView, point: &OperatingPoint) -> ResidualVector {
    let nt = view.nt;
    let nb = view.case.tso_buses.len();
    let nd = view.case.dsos.len();
    let mut balance_p = Grid2::zeros(nt, nb);
    let mut balance_q = Grid2::zeros(nt, nb);
    let mut delta_p = Grid2::zeros(nt, nd);
    let mut delta_q = Grid2::zeros(nt, nd);
    let mut pen = Grid2::zeros(nt, nb);
    for t in 0..nt {
        for b in 0..nb {
            let (bp, bq) = balance_at(view, point, t, b);
            balance_p.set(t, b, bp);
            balance_q.set(t, b, bq);
            let vpen = point.v_pen.get(t, b);
            if vpen > 1e-12 {
                pen.set(t, b, vpen);
            } else {
                // satisfied: negative of the quadratic slack so the
                // flexible multiplier decays (projection clips at zero)
                let bus = &view.case.tso_buses[b];
                let v2 = point.v_re.get(t, b).powi(2) + point.v_im.get(t, b).powi(2);
                pen.set(t, b, -(v2 - bus.v_min * bus.v_min));
            }
        }
        for j in 0..nd {
            delta_p.set(t, j, point.pd_p.get(t, j) - point.pt_p.get(t, j));
            delta_q.set(t, j, point.pd_q.get(t, j) - point.pt_q.get(t, j));
        }
    }
    ResidualVector { balance_p, balance_q, delta_p, delta_q, pen }
}

/// Which side's surrogate Lagrangian to evaluate. The other side's
/// interface exchange is read from the point, which the coordinator keeps
/// at the latest accepted values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Tso,
    Dso(usize),
}

/// Value of the penalized Lagrangian at a point for one side:
/// the side's own objective, the multiplier terms on its residuals, the
/// absolute-value penalty, and (for the TSO) the flexible-penalty terms.
/// Proximal terms are not part of the surrogate acceptance value. All
/// relaxation terms scale with the period length so prices stay per-MWh.
pub fn eval_surrogate(view: &CaseView, point: &OperatingPoint, duals: &MultiplierState, side: Side) -> f64 {
    let h = view.hours();
    match side {
        Side::Tso => {
            let r = assemble_residual(view, point);
            let mut val = tso_objective(view, point);
            for t in 0..view.nt {
                for b in 0..view.case.tso_buses.len() {
                    val += h
                        * (duals.lambda_p.get(t, b) * r.balance_p.get(t, b)
                            + duals.lambda_q.get(t, b) * r.balance_q.get(t, b));
                    val += h * duals.c * (r.balance_p.get(t, b).abs() + r.balance_q.get(t, b).abs());
                    let vpen = point.v_pen.get(t, b);
                    val += h * (duals.c * vpen + duals.lambda_pen.get(t, b) * vpen);
                }
                for j in 0..view.case.dsos.len() {
                    val += h
                        * (duals.psi_p.get(t, j) * r.delta_p.get(t, j)
                            + duals.psi_q.get(t, j) * r.delta_q.get(t, j));
                    val += h * duals.c * (r.delta_p.get(t, j).abs() + r.delta_q.get(t, j).abs());
                }
            }
            val
        }
        Side::Dso(j) => {
            let mut val = dso_objective(view, point, duals, j);
            for t in 0..view.nt {
                let dp = point.pd_p.get(t, j) - point.pt_p.get(t, j);
                let dq = point.pd_q.get(t, j) - point.pt_q.get(t, j);
                val += h * (duals.psi_p.get(t, j) * dp + duals.psi_q.get(t, j) * dq);
                val += h * duals.c * (dp.abs() + dq.abs());
            }
            val
        }
    }
}

/// Surrogate optimality condition: strict decrease with a relative
/// tolerance band.
pub fn check_surrogate_condition(l_new: f64, l_old: f64) -> bool {
    l_new < l_old - 1e-9 * (1.0 + l_old.abs())
}

/// l1 distance between the TSO-side variables of two points: voltages,
/// flows and interface exchange (the proximal terms of the zonal
/// objective, evaluated across all zones).
pub fn proximal_norm1(new_point: &OperatingPoint, anchor: &OperatingPoint) -> f64 {
    let pairs = [
        (&new_point.v_re, &anchor.v_re),
        (&new_point.v_im, &anchor.v_im),
        (&new_point.flow_p, &anchor.flow_p),
        (&new_point.flow_q, &anchor.flow_q),
        (&new_point.pt_p, &anchor.pt_p),
        (&new_point.pt_q, &anchor.pt_q),
    ];
    pairs
        .iter()
        .map(|(a, b)| a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).sum::<f64>())
        .sum()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::model::{AlgoParams, DsoBus, DsoNetwork, Horizon, TsoBus, TsoUnit};

    pub(crate) fn single_bus_case() -> GridCase {
        GridCase {
            name: "one".into(),
            base_mva: 100.0,
            horizon: Horizon { num_periods: 1, period_hours: 1.0 },
            tso_buses: vec![TsoBus {
                id: 1,
                v_min: 0.9,
                v_max: 1.1,
                load_p: vec![40.0],
                load_q: vec![0.0],
                is_root: false,
                zone: Some(0),
            }],
            tso_lines: vec![],
            tso_units: vec![TsoUnit {
                id: 1,
                bus: 1,
                p_min: 0.0,
                p_max: 100.0,
                q_min: -50.0,
                q_max: 50.0,
                ramp_p: 100.0,
                ramp_q: 100.0,
                cost_p: vec![10.0],
                cost_q: vec![0.0],
                initial_commit: false,
                initial_p: 0.0,
                initial_q: 0.0,
            }],
            dsos: vec![],
            params: AlgoParams::default(),
            warm_start: None,
        }
    }

    #[test]
    fn single_bus_balance_residual() {
        let case = single_bus_case();
        let view = CaseView::new(&case, None).unwrap();
        let mut point = OperatingPoint::flat_start(&case);
        point.gen_p.set(0, 0, 50.0);
        let r = assemble_residual(&view, &point);
        // load 40 minus generation 50: a 10 MW imbalance, negative in the
        // load-minus-generation orientation used throughout
        assert!((r.balance_p.get(0, 0) + 10.0).abs() < 1e-12);
        assert!((r.balance_p.get(0, 0).abs() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn interface_mismatch_residual() {
        let mut case = single_bus_case();
        case.tso_buses[0].is_root = true;
        case.dsos.push(DsoNetwork {
            id: 1,
            root_bus: 1,
            head_bus: 1,
            buses: vec![DsoBus { id: 1, v2_min: 0.81, v2_max: 1.21, load_p: vec![0.0], load_q: vec![0.0] }],
            lines: vec![],
            units: vec![],
            bid_p: vec![22.0],
            bid_q: vec![57.0],
            pq_limit_tso: 200.0,
            pq_limit_dso: 200.0,
        });
        // a one-bus feeder has no lines: buses-1 == 0 lines keeps it a tree
        let view = CaseView::new(&case, None).unwrap();
        let mut point = OperatingPoint::flat_start(&case);
        point.pd_p.set(0, 0, 118.167);
        point.pt_p.set(0, 0, 100.0);
        let r = assemble_residual(&view, &point);
        assert!((r.delta_p.get(0, 0) - 18.167).abs() < 1e-12);
    }

    #[test]
    fn zero_residual_point_feasible_surrogate_is_plain_objective() {
        let case = single_bus_case();
        let view = CaseView::new(&case, None).unwrap();
        let mut point = OperatingPoint::flat_start(&case);
        point.commit.set(0, 0, 1.0);
        point.gen_p.set(0, 0, 40.0);
        let duals = MultiplierState::init(&case, &view, LambdaInit::Zero);
        let r = assemble_residual(&view, &point);
        assert!(r.violation_norm2() < 1e-12);
        let l = eval_surrogate(&view, &point, &duals, Side::Tso);
        let obj = tso_objective(&view, &point);
        assert!((l - obj).abs() < 1e-9, "l {l} obj {obj}");
        assert!((obj - 400.0).abs() < 1e-12);
    }

    #[test]
    fn surrogate_scales_linearly_in_c() {
        let case = single_bus_case();
        let view = CaseView::new(&case, None).unwrap();
        let mut point = OperatingPoint::flat_start(&case);
        point.gen_p.set(0, 0, 50.0); // imbalance of 10
        let mut duals = MultiplierState::init(&case, &view, LambdaInit::Zero);
        let r = assemble_residual(&view, &point);
        let r1 = r.norm1() - r.pen.values().iter().map(|v| v.abs()).sum::<f64>();
        let l1 = eval_surrogate(&view, &point, &duals, Side::Tso);
        duals.c *= 2.0;
        let l2 = eval_surrogate(&view, &point, &duals, Side::Tso);
        assert!(((l2 - l1) - duals.c / 2.0 * r1).abs() < 1e-9);
    }

    #[test]
    fn hand_computed_surrogate_fixture() {
        // objective 100, lambda.R = -5, c |R| = 12 -> 107
        let case = single_bus_case();
        let view = CaseView::new(&case, None).unwrap();
        let mut point = OperatingPoint::flat_start(&case);
        point.commit.set(0, 0, 1.0);
        point.gen_p.set(0, 0, 10.0); // objective = 100, unserved balance = +30
        let mut duals = MultiplierState::init(&case, &view, LambdaInit::Zero);
        duals.lambda_p.set(0, 0, -5.0 / 30.0); // lambda * 30 = -5
        duals.c = 12.0 / 30.0; // c * 30 = 12
        let l = eval_surrogate(&view, &point, &duals, Side::Tso);
        assert!((l - 107.0).abs() < 1e-9, "got {l}");
    }

    #[test]
    fn surrogate_condition_band() {
        assert!(check_surrogate_condition(99.0, 100.0));
        assert!(!check_surrogate_condition(100.0, 100.0));
        assert!(!check_surrogate_condition(100.0 + 1e-12, 100.0));
    }

    #[test]
    fn surrogate_is_affine_in_multipliers_with_residual_slope() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let case = single_bus_case();
        let view = CaseView::new(&case, None).unwrap();
        let mut point = OperatingPoint::flat_start(&case);
        point.gen_p.set(0, 0, rng.gen_range(0.0..100.0));
        let r = assemble_residual(&view, &point);
        for _ in 0..50 {
            let mut duals = MultiplierState::init(&case, &view, LambdaInit::Zero);
            duals.lambda_p.set(0, 0, rng.gen_range(-20.0..20.0));
            let base = eval_surrogate(&view, &point, &duals, Side::Tso);
            let h = 1e-3;
            duals.lambda_p.set(0, 0, duals.lambda_p.get(0, 0) + h);
            let bumped = eval_surrogate(&view, &point, &duals, Side::Tso);
            let slope = (bumped - base) / h;
            assert!((slope - r.balance_p.get(0, 0)).abs() < 1e-9 * (1.0 + slope.abs()));
        }
    }

}
