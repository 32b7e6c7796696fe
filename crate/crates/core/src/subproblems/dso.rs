//! Feeder subproblems: branch-flow LPs with convex-quadratic rows managed
//! by supporting-hyperplane cuts.
//!
//! Each feeder model carries squared voltages, scaled squared currents,
//! branch flows, dispatch and the interface exchange. The rotated-cone
//! rows (flow/current/voltage) and the apparent-power and interface
//! disks are absent from the base LP; violated ones receive cuts until
//! the worst violation falls under [`CUT_TOL`]. Cone cuts are anchored on
//! the cone surface (see [`cone_boundary_point`]) so they never exclude
//! feasible points; disk cuts are gradient cuts of a convex function and
//! are valid anywhere.

use std::collections::HashMap;

use crate::linearizer::{
    cone_boundary_point, cone_cut_at, l1_epigraph, ConeSlots, LinExpr, CUT_TOL,
};
use crate::lp::{Instance, LpModel, Sense, Status, VarKind};

use super::{CaseView, DsoPoint, Grid2, MultiplierState, OperatingPoint, SubproblemError};

/// Price and coupling data the feeder objective needs.
#[derive(Debug, Clone)]
pub struct DsoObjectives {
    pub lambda_p: Vec<f64>,
    pub lambda_q: Vec<f64>,
    pub psi_p: Vec<f64>,
    pub psi_q: Vec<f64>,
    pub c: f64,
    pub pt_fix: Vec<f64>,
    pub qt_fix: Vec<f64>,
    /// Standalone self-dispatch: exchange pinned to zero, no price or
    /// penalty terms (the baseline-comparison mode).
    pub standalone: bool,
}

impl DsoObjectives {
    pub fn from_duals(view: &CaseView, j: usize, duals: &MultiplierState, point: &OperatingPoint) -> Self {
        let root = view.root_pos[j];
        let nt = view.nt;
        DsoObjectives {
            lambda_p: (0..nt).map(|t| duals.lambda_p.get(t, root)).collect(),
            lambda_q: (0..nt).map(|t| duals.lambda_q.get(t, root)).collect(),
            psi_p: (0..nt).map(|t| duals.psi_p.get(t, j)).collect(),
            psi_q: (0..nt).map(|t| duals.psi_q.get(t, j)).collect(),
            c: duals.c,
            pt_fix: (0..nt).map(|t| point.pt_p.get(t, j)).collect(),
            qt_fix: (0..nt).map(|t| point.pt_q.get(t, j)).collect(),
            standalone: false,
        }
    }

    pub fn standalone(nt: usize) -> Self {
        DsoObjectives {
            lambda_p: vec![0.0; nt],
            lambda_q: vec![0.0; nt],
            psi_p: vec![0.0; nt],
            psi_q: vec![0.0; nt],
            c: 0.0,
            pt_fix: vec![0.0; nt],
            qt_fix: vec![0.0; nt],
            standalone: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum QuadKind {
    /// Rotated cone p^2 + q^2 <= v a: cut anchored on the surface.
    Cone,
    /// Disk p^2 + q^2 <= r^2: gradient cut at the iterate.
    Disk,
}

struct QuadSpec {
    kind: QuadKind,
    slots: ConeSlots,
    label: String,
}

/// A built feeder LP plus the quadratic rows its solve loop enforces.
pub struct DsoModel {
    pub model: LpModel,
    pub j: usize,
    nt: usize,
    specs: Vec<QuadSpec>,
    v2: HashMap<(usize, usize), usize>,
    a2: HashMap<(usize, usize), usize>,
    flow_p: HashMap<(usize, usize), usize>,
    flow_q: HashMap<(usize, usize), usize>,
    gen_p: HashMap<(usize, usize), usize>,
    gen_q: HashMap<(usize, usize), usize>,
    pd: HashMap<usize, usize>,
    qd: HashMap<usize, usize>,
}

/// Result of one feeder solve.
#[derive(Debug, Clone)]
pub struct DsoSolve {
    pub point: DsoPoint,
    pub pd_p: Vec<f64>,
    pub pd_q: Vec<f64>,
    pub cuts_added: usize,
    pub iterations: usize,
}

impl DsoSolve {
    pub fn apply_to(&self, point: &mut OperatingPoint, j: usize) {
        point.dso[j] = self.point.clone();
        for t in 0..self.pd_p.len() {
            point.pd_p.set(t, j, self.pd_p[t]);
            point.pd_q.set(t, j, self.pd_q[t]);
        }
    }
}

/// Assemble the feeder LP for one DSO with the transmission exchange held
/// fixed. Balances follow the branch-flow equations verbatim, including
/// the shunt terms; radial orientation is parent (sending) to child.
pub fn build_dso(view: &CaseView, j: usize, obj: &DsoObjectives) -> DsoModel {
    let case = view.case;
    let d = &case.dsos[j];
    let dv = &view.dsos[j];
    let nt = view.nt;
    let h = view.hours();

    let mut dm = DsoModel {
        model: LpModel::new(),
        j,
        nt,
        specs: Vec::new(),
        v2: HashMap::new(),
        a2: HashMap::new(),
        flow_p: HashMap::new(),
        flow_q: HashMap::new(),
        gen_p: HashMap::new(),
        gen_q: HashMap::new(),
        pd: HashMap::new(),
        qd: HashMap::new(),
    };
    let model = &mut dm.model;
    let tag = d.id;

    for (b, bus) in d.buses.iter().enumerate() {
        for t in 0..nt {
            let v = model.add_var(
                format!("d{tag}_v_b{}_t{t}", bus.id),
                bus.v2_min,
                bus.v2_max,
                0.0,
                VarKind::Continuous,
            );
            dm.v2.insert((b, t), v);
        }
    }
    for (l, line) in d.lines.iter().enumerate() {
        let lv = &dv.lines[l];
        for t in 0..nt {
            let a = model.add_var(format!("d{tag}_a_l{}_t{t}", line.id), 0.0, f64::INFINITY, 0.0, VarKind::Continuous);
            let fp = model.add_var(
                format!("d{tag}_fp_l{}_t{t}", line.id),
                -lv.s_limit,
                lv.s_limit,
                0.0,
                VarKind::Continuous,
            );
            let fq = model.add_var(
                format!("d{tag}_fq_l{}_t{t}", line.id),
                -lv.s_limit,
                lv.s_limit,
                0.0,
                VarKind::Continuous,
            );
            dm.a2.insert((l, t), a);
            dm.flow_p.insert((l, t), fp);
            dm.flow_q.insert((l, t), fq);
        }
    }
    for (u, unit) in d.units.iter().enumerate() {
        for t in 0..nt {
            let gp = model.add_var(
                format!("d{tag}_gp_u{}_t{t}", unit.id),
                unit.p_min,
                unit.p_max,
                h * unit.cost_p[t],
                VarKind::Continuous,
            );
            let gq = model.add_var(
                format!("d{tag}_gq_u{}_t{t}", unit.id),
                unit.q_min,
                unit.q_max,
                h * unit.cost_q[t],
                VarKind::Continuous,
            );
            dm.gen_p.insert((u, t), gp);
            dm.gen_q.insert((u, t), gq);
        }
    }
    let (pd_lb, pd_ub) = if obj.standalone { (0.0, 0.0) } else { (-d.pq_limit_dso, d.pq_limit_dso) };
    for t in 0..nt {
        let wp = if obj.standalone { 0.0 } else { h * (-obj.lambda_p[t] + obj.psi_p[t]) };
        let wq = if obj.standalone { 0.0 } else { h * (-obj.lambda_q[t] + obj.psi_q[t]) };
        let pd = model.add_var(format!("pd_d{tag}_t{t}"), pd_lb, pd_ub, wp, VarKind::Continuous);
        let qd = model.add_var(format!("qd_d{tag}_t{t}"), pd_lb, pd_ub, wq, VarKind::Continuous);
        dm.pd.insert(t, pd);
        dm.qd.insert(t, qd);
    }

    // voltage drop along each line
    for (l, lv) in dv.lines.iter().enumerate() {
        for t in 0..nt {
            model.add_row(
                vec![
                    (dm.v2[&(lv.to_pos, t)], 1.0),
                    (dm.v2[&(lv.from_pos, t)], -1.0),
                    (dm.flow_p[&(l, t)], -2.0 * lv.r_s),
                    (dm.flow_q[&(l, t)], -2.0 * lv.x_s),
                    (dm.a2[&(l, t)], lv.r_s * lv.r_s + lv.x_s * lv.x_s),
                ],
                Sense::Eq,
                0.0,
            );
        }
    }

    // nodal balances (verbatim orientation: everything on the left equals 0)
    for (b, bus) in d.buses.iter().enumerate() {
        for t in 0..nt {
            for is_p in [true, false] {
                let mut coeffs: Vec<(usize, f64)> = Vec::new();
                let mut shunt = 0.0;
                for &l in &dv.lines_out[b] {
                    let lv = &dv.lines[l];
                    coeffs.push((if is_p { dm.flow_p[&(l, t)] } else { dm.flow_q[&(l, t)] }, 1.0));
                    shunt += if is_p { lv.g_sh_mw } else { lv.b_sh_mw };
                }
                for &l in &dv.lines_in[b] {
                    let lv = &dv.lines[l];
                    coeffs.push((if is_p { dm.flow_p[&(l, t)] } else { dm.flow_q[&(l, t)] }, -1.0));
                    coeffs.push((dm.a2[&(l, t)], if is_p { lv.r_s } else { lv.x_s }));
                }
                for &u in &dv.units_at[b] {
                    coeffs.push((if is_p { dm.gen_p[&(u, t)] } else { dm.gen_q[&(u, t)] }, -1.0));
                }
                if shunt != 0.0 {
                    coeffs.push((dm.v2[&(b, t)], shunt));
                }
                if b == dv.head {
                    coeffs.push((if is_p { dm.pd[&t] } else { dm.qd[&t] }, 1.0));
                }
                let load = if is_p { bus.load_p[t] } else { bus.load_q[t] };
                model.add_row(coeffs, Sense::Eq, -load);
            }
        }
    }

    // interface mismatch penalty
    if !obj.standalone {
        let mut terms = Vec::with_capacity(2 * nt);
        for t in 0..nt {
            terms.push(
                LinExpr::constant(-obj.pt_fix[t]).term(model.var_name(dm.pd[&t]).to_string(), 1.0),
            );
            terms.push(
                LinExpr::constant(-obj.qt_fix[t]).term(model.var_name(dm.qd[&t]).to_string(), 1.0),
            );
        }
        let (aux, cuts) = l1_epigraph(&format!("d{tag}_ui"), &terms);
        for name in &aux {
            model.add_var(name.clone(), 0.0, f64::INFINITY, h * obj.c, VarKind::Continuous);
        }
        for cut in &cuts {
            model.add_cut(cut).expect("epigraph cut references known variables");
        }
    }

    // quadratic rows handled by the cut loop
    for (l, line) in d.lines.iter().enumerate() {
        let lv = &dv.lines[l];
        for t in 0..nt {
            let fp = model.var_name(dm.flow_p[&(l, t)]).to_string();
            let fq = model.var_name(dm.flow_q[&(l, t)]).to_string();
            let a = model.var_name(dm.a2[&(l, t)]).to_string();
            let vs = model.var_name(dm.v2[&(lv.from_pos, t)]).to_string();
            dm.specs.push(QuadSpec {
                kind: QuadKind::Cone,
                slots: ConeSlots {
                    p: LinExpr::var(fp.clone()),
                    q: LinExpr::var(fq.clone()),
                    v: LinExpr::var(vs),
                    a: LinExpr::var(a.clone()),
                },
                label: format!("cone line {} t {t}", line.id),
            });
            let s2 = lv.s_limit * lv.s_limit;
            dm.specs.push(QuadSpec {
                kind: QuadKind::Disk,
                slots: ConeSlots {
                    p: LinExpr::var(fp.clone()),
                    q: LinExpr::var(fq.clone()),
                    v: LinExpr::constant(s2),
                    a: LinExpr::constant(1.0),
                },
                label: format!("sending cap line {} t {t}", line.id),
            });
            dm.specs.push(QuadSpec {
                kind: QuadKind::Disk,
                slots: ConeSlots {
                    p: LinExpr::var(fp).term(a.clone(), -lv.r_s),
                    q: LinExpr::var(fq).term(a.clone(), -lv.x_s),
                    v: LinExpr::constant(s2),
                    a: LinExpr::constant(1.0),
                },
                label: format!("receiving cap line {} t {t}", line.id),
            });
        }
    }
    if !obj.standalone {
        for t in 0..nt {
            let r2 = d.pq_limit_dso * d.pq_limit_dso;
            dm.specs.push(QuadSpec {
                kind: QuadKind::Disk,
                slots: ConeSlots {
                    p: LinExpr::var(model.var_name(dm.pd[&t]).to_string()),
                    q: LinExpr::var(model.var_name(dm.qd[&t]).to_string()),
                    v: LinExpr::constant(r2),
                    a: LinExpr::constant(1.0),
                },
                label: format!("interface cap t {t}"),
            });
        }
    }

    dm
}

/// Maximum supporting-hyperplane cuts per quadratic row.
pub const MAX_CUTS_PER_ROW: usize = 200;

/// Solve the feeder LP to cut-loop convergence (worst quadratic violation
/// at most [`CUT_TOL`]).
pub fn solve_dso(dm: &DsoModel, parallel: bool) -> Result<DsoSolve, SubproblemError> {
    let mut inst = Instance::from_model(&dm.model, parallel).map_err(|e| SubproblemError::Lp {
        context: format!("dso {} build", dm.j),
        source: e,
    })?;
    let budget = 50_000 + 40 * (dm.model.n_rows() + dm.model.n_vars());
    let mut added = vec![0usize; dm.specs.len()];
    let mut cuts_total = 0usize;
    let mut rounds = 0usize;
    loop {
        let status = inst.solve(budget).map_err(|e| SubproblemError::Lp {
            context: format!("dso {} solve", dm.j),
            source: e,
        })?;
        if status != Status::Optimal {
            return Err(SubproblemError::BadStatus { context: format!("dso {}", dm.j), status });
        }
        let value = |name: &str| inst.col_value(dm.model.var_id(name).expect("spec variable"));
        let mut worst = 0.0f64;
        let mut new_cuts = Vec::new();
        for (i, spec) in dm.specs.iter().enumerate() {
            let p = spec.slots.p.value(value);
            let q = spec.slots.q.value(value);
            let v = spec.slots.v.value(value);
            let a = spec.slots.a.value(value);
            let h0 = p * p + q * q - v * a;
            if h0 > CUT_TOL {
                worst = worst.max(h0);
                if added[i] < MAX_CUTS_PER_ROW {
                    let anchor = match spec.kind {
                        QuadKind::Cone => cone_boundary_point(p, q, v, a),
                        QuadKind::Disk => (p, q, v, a),
                    };
                    log::trace!("dso {}: cutting {} (violation {h0:.3e})", dm.j, spec.label);
                    new_cuts.push(cone_cut_at(anchor, &spec.slots));
                    added[i] += 1;
                }
            }
        }
        if new_cuts.is_empty() {
            if worst > CUT_TOL {
                return Err(SubproblemError::CutLoop { rounds, worst });
            }
            return Ok(extract(dm, &inst, cuts_total, inst.iterations()));
        }
        for cut in &new_cuts {
            let coeffs: Vec<(usize, f64)> = cut
                .coeffs
                .iter()
                .map(|(n, c)| (dm.model.var_id(n).expect("cut variable"), *c))
                .collect();
            inst.add_row(&coeffs, cut.sense, cut.rhs);
            cuts_total += 1;
        }
        rounds += 1;
        if rounds > 500 {
            return Err(SubproblemError::CutLoop { rounds, worst });
        }
    }
}

fn extract(dm: &DsoModel, inst: &Instance, cuts_added: usize, iterations: usize) -> DsoSolve {
    let nt = dm.nt;
    let nb = dm.v2.len() / nt.max(1);
    let nl = if nt > 0 { dm.a2.len() / nt } else { 0 };
    let nu = if nt > 0 { dm.gen_p.len() / nt } else { 0 };
    let mut point = DsoPoint {
        gen_p: Grid2::zeros(nt, nu),
        gen_q: Grid2::zeros(nt, nu),
        v2: Grid2::zeros(nt, nb),
        a2: Grid2::zeros(nt, nl),
        flow_p: Grid2::zeros(nt, nl),
        flow_q: Grid2::zeros(nt, nl),
    };
    for (&(b, t), &id) in &dm.v2 {
        point.v2.set(t, b, inst.col_value(id));
    }
    for (&(l, t), &id) in &dm.a2 {
        point.a2.set(t, l, inst.col_value(id));
    }
    for (&(l, t), &id) in &dm.flow_p {
        point.flow_p.set(t, l, inst.col_value(id));
    }
    for (&(l, t), &id) in &dm.flow_q {
        point.flow_q.set(t, l, inst.col_value(id));
    }
    for (&(u, t), &id) in &dm.gen_p {
        point.gen_p.set(t, u, inst.col_value(id));
    }
    for (&(u, t), &id) in &dm.gen_q {
        point.gen_q.set(t, u, inst.col_value(id));
    }
    let pd_p = (0..nt).map(|t| inst.col_value(dm.pd[&t])).collect();
    let pd_q = (0..nt).map(|t| inst.col_value(dm.qd[&t])).collect();
    DsoSolve { point, pd_p, pd_q, cuts_added, iterations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AlgoParams, DsoBus, DsoLine, DsoNetwork, DsoUnit, GridCase, Horizon, TsoBus};

    fn feeder_case(load: f64, gen_cost: f64) -> GridCase {
        GridCase {
            name: "feeder".into(),
            base_mva: 100.0,
            horizon: Horizon { num_periods: 1, period_hours: 1.0 },
            tso_buses: vec![TsoBus {
                id: 1,
                v_min: 0.9,
                v_max: 1.1,
                load_p: vec![0.0],
                load_q: vec![0.0],
                is_root: true,
                zone: Some(0),
            }],
            tso_lines: vec![],
            tso_units: vec![],
            dsos: vec![DsoNetwork {
                id: 7,
                root_bus: 1,
                head_bus: 1,
                buses: vec![
                    DsoBus { id: 1, v2_min: 0.81, v2_max: 1.21, load_p: vec![0.0], load_q: vec![0.0] },
                    DsoBus { id: 2, v2_min: 0.81, v2_max: 1.21, load_p: vec![load], load_q: vec![0.0] },
                ],
                lines: vec![DsoLine {
                    id: 1,
                    from: 1,
                    to: 2,
                    r: 0.01,
                    x: 0.02,
                    g_shunt: 0.0,
                    b_shunt: 0.0,
                    s_limit: 30.0,
                }],
                units: vec![DsoUnit {
                    id: 1,
                    bus: 2,
                    p_min: 0.0,
                    p_max: 25.0,
                    q_min: -10.0,
                    q_max: 10.0,
                    cost_p: vec![gen_cost],
                    cost_q: vec![0.0],
                }],
                bid_p: vec![22.0],
                bid_q: vec![57.0],
                pq_limit_tso: 20.0,
                pq_limit_dso: 20.0,
            }],
            params: AlgoParams::default(),
            warm_start: None,
        }
    }

    #[test]
    fn zero_case_solves_to_zero() {
        let case = feeder_case(0.0, 0.0);
        let view = CaseView::new(&case, None).unwrap();
        let dm = build_dso(&view, 0, &DsoObjectives::standalone(1));
        let out = solve_dso(&dm, false).unwrap();
        assert!(out.pd_p[0].abs() < 1e-9);
        assert!(out.point.gen_p.get(0, 0).abs() < 1e-9);
    }

    #[test]
    fn standalone_self_dispatch_serves_local_load() {
        let case = feeder_case(10.0, 5.0);
        let view = CaseView::new(&case, None).unwrap();
        let dm = build_dso(&view, 0, &DsoObjectives::standalone(1));
        let out = solve_dso(&dm, false).unwrap();
        assert!(out.pd_p[0].abs() < 1e-9, "standalone exchange pinned to zero");
        // generation covers load plus the small branch loss
        assert!(out.point.gen_p.get(0, 0) >= 10.0 - 1e-6);
        assert!(out.point.gen_p.get(0, 0) <= 10.3);
        // cone tight or slack but never violated
        let p = out.point.flow_p.get(0, 0);
        let q = out.point.flow_q.get(0, 0);
        let v = out.point.v2.get(0, 0);
        let a = out.point.a2.get(0, 0);
        assert!(p * p + q * q <= v * a + 1e-5);
    }

    #[test]
    fn profitable_prices_push_export_to_interface_limit() {
        let case = feeder_case(0.0, 5.0);
        let view = CaseView::new(&case, None).unwrap();
        let mut obj = DsoObjectives::standalone(1);
        obj.standalone = false;
        obj.lambda_p = vec![30.0];
        obj.lambda_q = vec![30.0];
        obj.c = 0.0;
        let dm = build_dso(&view, 0, &obj);
        let out = solve_dso(&dm, false).unwrap();
        let norm = (out.pd_p[0].powi(2) + out.pd_q[0].powi(2)).sqrt();
        // exports ride the interface disk along the profitable direction
        assert!(norm >= 20.0 * (1.0 - 2e-3), "norm {norm}");
        assert!(out.pd_p[0] > 0.0 && out.pd_q[0] > 0.0);
    }

    #[test]
    fn zero_prices_zero_penalty_keeps_exchange_at_zero() {
        let case = feeder_case(0.0, 5.0);
        let view = CaseView::new(&case, None).unwrap();
        let mut obj = DsoObjectives::standalone(1);
        obj.standalone = false; // interface free, but no incentive
        let dm = build_dso(&view, 0, &obj);
        let out = solve_dso(&dm, false).unwrap();
        assert!(out.pd_p[0].abs() < 1e-7);
        assert!(out.point.gen_p.get(0, 0).abs() < 1e-7);
    }
}
