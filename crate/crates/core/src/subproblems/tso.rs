//! Assembly of the linearized zonal transmission subproblems.
//!
//! A zone's model carries the variables of its own buses (voltages, soft
//! lower-voltage slacks), its units (commitments and dispatch), the lines
//! whose sending bus lies in the zone, and the interface exchange of its
//! root buses. Boundary quantities owned by other zones enter as anchor
//! constants, so across a zone partition every transmission variable is
//! free in exactly one model.

use std::collections::HashMap;

use crate::linearizer::{
    l1_epigraph, linearize_flow, linearize_quadratic_cap, soft_lower_voltage, FlowVars, LinExpr,
    LinearCut,
};
use crate::lp::{LpModel, MilpSolution, Sense, VarKind};

use super::{CaseView, Grid2, MultiplierState, OperatingPoint, SubproblemError};

/// Build switches; the baseline-comparison run drops the interface.
#[derive(Debug, Clone)]
pub struct BuildOpts {
    pub include_interface: bool,
}

impl Default for BuildOpts {
    fn default() -> Self {
        BuildOpts { include_interface: true }
    }
}

/// A built zonal MILP plus the variable map needed to read solutions
/// back into an operating point.
pub struct ZonalModel {
    pub model: LpModel,
    pub zone: usize,
    commit: HashMap<(usize, usize), usize>,
    gen_p: HashMap<(usize, usize), usize>,
    gen_q: HashMap<(usize, usize), usize>,
    v_re: HashMap<(usize, usize), usize>,
    v_im: HashMap<(usize, usize), usize>,
    flow_p: HashMap<(usize, usize), usize>,
    flow_q: HashMap<(usize, usize), usize>,
    pt_p: HashMap<(usize, usize), usize>,
    pt_q: HashMap<(usize, usize), usize>,
    v_pen: HashMap<(usize, usize), usize>,
}

impl ZonalModel {
    pub fn binary_count(&self) -> usize {
        self.commit.len()
    }

    /// Write the solved values of this zone's variables into `point`.
    /// Commitments snap to 0/1.
    pub fn extract_into(&self, sol: &MilpSolution, point: &mut OperatingPoint) {
        for (&(u, t), &id) in &self.commit {
            point.commit.set(t, u, if sol.primal[id] >= 0.5 { 1.0 } else { 0.0 });
        }
        for (&(u, t), &id) in &self.gen_p {
            point.gen_p.set(t, u, sol.primal[id]);
        }
        for (&(u, t), &id) in &self.gen_q {
            point.gen_q.set(t, u, sol.primal[id]);
        }
        for (&(b, t), &id) in &self.v_re {
            point.v_re.set(t, b, sol.primal[id]);
        }
        for (&(b, t), &id) in &self.v_im {
            point.v_im.set(t, b, sol.primal[id]);
        }
        for (&(l, t), &id) in &self.flow_p {
            point.flow_p.set(t, l, sol.primal[id]);
        }
        for (&(l, t), &id) in &self.flow_q {
            point.flow_q.set(t, l, sol.primal[id]);
        }
        for (&(j, t), &id) in &self.pt_p {
            point.pt_p.set(t, j, sol.primal[id]);
        }
        for (&(j, t), &id) in &self.pt_q {
            point.pt_q.set(t, j, sol.primal[id]);
        }
        for (&(b, t), &id) in &self.v_pen {
            point.v_pen.set(t, b, sol.primal[id]);
        }
    }
}

/// Add a cut whose out-of-model variables are fixed: their terms fold
/// into the right-hand side at the anchor values. Cuts that degenerate to
/// a constant row (an all-zero anchor makes the point-linearized caps
/// vacuous) are skipped when trivially satisfied.
fn add_cut_substituted(
    model: &mut LpModel,
    cut: &LinearCut,
    fixed: &dyn Fn(&str) -> Option<f64>,
) -> Result<Option<usize>, SubproblemError> {
    let mut coeffs = Vec::with_capacity(cut.coeffs.len());
    let mut rhs = cut.rhs;
    for (name, c) in &cut.coeffs {
        match model.var_id(name) {
            Some(id) => coeffs.push((id, *c)),
            None => match fixed(name) {
                Some(v) => rhs -= c * v,
                None => {
                    return Err(SubproblemError::Lp {
                        context: format!("cut references `{name}` with no anchor value"),
                        source: crate::lp::LpError::UnknownVariable(name.clone()),
                    })
                }
            },
        }
    }
    if coeffs.iter().all(|&(_, c)| c == 0.0) {
        let holds = match cut.sense {
            crate::lp::Sense::Le => 0.0 <= rhs,
            crate::lp::Sense::Ge => 0.0 >= rhs,
            crate::lp::Sense::Eq => rhs == 0.0,
        };
        if holds {
            return Ok(None);
        }
        return Err(SubproblemError::Lp {
            context: "constant cut is infeasible".to_string(),
            source: crate::lp::LpError::InvalidModel(format!("0 {:?} {rhs}", cut.sense)),
        });
    }
    Ok(Some(model.add_row(coeffs, cut.sense, rhs)))
}

fn vre_name(id: usize, t: usize) -> String {
    format!("vre_b{id}_t{t}")
}
fn vim_name(id: usize, t: usize) -> String {
    format!("vim_b{id}_t{t}")
}

/// Cap anchors that drifted outside their ball are pulled back onto the
/// sphere before linearization; the raw cut would exclude the previous
/// iterate itself and destabilize the acceptance test.
fn project_to_ball(x: f64, y: f64, radius: f64) -> [f64; 2] {
    let n = (x * x + y * y).sqrt();
    if n > radius && n > 0.0 {
        [x * radius / n, y * radius / n]
    } else {
        [x, y]
    }
}

/// Build the linearized MILP of one zone around the previous accepted
/// iterate. `anchor` supplies every linearization anchor (voltages,
/// flows, interface exchange); `fixed_pd` is the feeder-side exchange
/// held fixed during the transmission phase.
pub fn build_tso_zonal(
    view: &CaseView,
    zone: usize,
    anchor: &OperatingPoint,
    duals: &MultiplierState,
    fixed_pd: (&Grid2, &Grid2),
    opts: &BuildOpts,
) -> Result<ZonalModel, SubproblemError> {
    if zone >= view.nz {
        return Err(SubproblemError::Lp {
            context: format!("zone {zone} out of range ({} zones)", view.nz),
            source: crate::lp::LpError::InvalidModel("unknown zone".into()),
        });
    }
    let case = view.case;
    let nt = view.nt;
    let h = view.hours();
    let c = duals.c;
    let cp = duals.c_p;

    let in_zone_bus: Vec<usize> =
        (0..case.tso_buses.len()).filter(|&b| view.zones[b] == zone).collect();
    let owned_line: Vec<usize> =
        (0..case.tso_lines.len()).filter(|&l| view.lines[l].zone == zone).collect();
    let in_zone_unit: Vec<usize> =
        (0..case.tso_units.len()).filter(|&u| view.units[u].zone == zone).collect();
    let in_zone_root: Vec<usize> = (0..case.dsos.len())
        .filter(|&j| view.zones[view.root_pos[j]] == zone && opts.include_interface)
        .collect();

    let mut zm = ZonalModel {
        model: LpModel::new(),
        zone,
        commit: HashMap::new(),
        gen_p: HashMap::new(),
        gen_q: HashMap::new(),
        v_re: HashMap::new(),
        v_im: HashMap::new(),
        flow_p: HashMap::new(),
        flow_q: HashMap::new(),
        pt_p: HashMap::new(),
        pt_q: HashMap::new(),
        v_pen: HashMap::new(),
    };
    let model = &mut zm.model;

    // --- variables -------------------------------------------------------
    // Rectangular voltages carry a global rotation (and reflection)
    // symmetry that preserves every flow; the first bus of the case acts
    // as the angle reference so the linearization has isolated fixed
    // points.
    let reference_bus = 0usize;
    for &b in &in_zone_bus {
        let bus = &case.tso_buses[b];
        let is_ref = b == reference_bus;
        let pen_ub = bus.v_min * bus.v_min + 2.0 * bus.v_max * bus.v_max + 1.0;
        for t in 0..nt {
            // the real part keeps a hard floor of half the magnitude
            // minimum: angles within +-60 degrees of the reference and
            // magnitudes at or above half the floor stay representable,
            // while outright voltage collapse (the soft magnitude bound
            // cannot prevent it) leaves the operating domain
            let vre = model.add_var(
                vre_name(bus.id, t),
                0.5 * bus.v_min,
                bus.v_max,
                0.0,
                VarKind::Continuous,
            );
            let vim = model.add_var(
                vim_name(bus.id, t),
                if is_ref { 0.0 } else { -bus.v_max },
                if is_ref { 0.0 } else { bus.v_max },
                0.0,
                VarKind::Continuous,
            );
            let pen_obj = h * (c + duals.lambda_pen.get(t, b));
            let vpen =
                model.add_var(format!("vpen_b{}_t{t}", bus.id), 0.0, pen_ub, pen_obj, VarKind::Continuous);
            zm.v_re.insert((b, t), vre);
            zm.v_im.insert((b, t), vim);
            zm.v_pen.insert((b, t), vpen);
        }
    }
    for &u in &in_zone_unit {
        let unit = &case.tso_units[u];
        let b = view.units[u].bus_pos;
        for t in 0..nt {
            let x = model.add_var(format!("x_u{}_t{t}", unit.id), 0.0, 1.0, 0.0, VarKind::Binary);
            let gp = model.add_var(
                format!("gp_u{}_t{t}", unit.id),
                unit.p_min.min(0.0),
                unit.p_max.max(0.0),
                h * (unit.cost_p[t] - duals.lambda_p.get(t, b)),
                VarKind::Continuous,
            );
            let gq = model.add_var(
                format!("gq_u{}_t{t}", unit.id),
                unit.q_min.min(0.0),
                unit.q_max.max(0.0),
                h * (unit.cost_q[t] - duals.lambda_q.get(t, b)),
                VarKind::Continuous,
            );
            zm.commit.insert((u, t), x);
            zm.gen_p.insert((u, t), gp);
            zm.gen_q.insert((u, t), gq);
        }
    }
    for &l in &owned_line {
        let lv = &view.lines[l];
        let line = &case.tso_lines[l];
        // flow appears as outflow (+) in the sending bus balance and as
        // inflow (-) in the receiving bus balance when that bus is ours
        let to_in_zone = view.zones[lv.to_pos] == zone;
        for t in 0..nt {
            let mut wp = h * duals.lambda_p.get(t, lv.from_pos);
            let mut wq = h * duals.lambda_q.get(t, lv.from_pos);
            if to_in_zone {
                wp -= h * duals.lambda_p.get(t, lv.to_pos);
                wq -= h * duals.lambda_q.get(t, lv.to_pos);
            }
            let fp = model.add_var(format!("fp_l{}_t{t}", line.id), -lv.limit, lv.limit, wp, VarKind::Continuous);
            let fq = model.add_var(format!("fq_l{}_t{t}", line.id), -lv.limit, lv.limit, wq, VarKind::Continuous);
            zm.flow_p.insert((l, t), fp);
            zm.flow_q.insert((l, t), fq);
        }
    }
    for &j in &in_zone_root {
        let d = &case.dsos[j];
        let root = view.root_pos[j];
        for t in 0..nt {
            let wp = h * (d.bid_p[t] - duals.lambda_p.get(t, root) - duals.psi_p.get(t, j));
            let wq = h * (d.bid_q[t] - duals.lambda_q.get(t, root) - duals.psi_q.get(t, j));
            let pt = model.add_var(
                format!("pt_d{}_t{t}", d.id),
                -d.pq_limit_tso,
                d.pq_limit_tso,
                wp,
                VarKind::Continuous,
            );
            let qt = model.add_var(
                format!("qt_d{}_t{t}", d.id),
                -d.pq_limit_tso,
                d.pq_limit_tso,
                wq,
                VarKind::Continuous,
            );
            zm.pt_p.insert((j, t), pt);
            zm.pt_q.insert((j, t), qt);
        }
    }

    // --- generation coupling and ramp rates ------------------------------
    for &u in &in_zone_unit {
        let unit = &case.tso_units[u];
        for t in 0..nt {
            let x = zm.commit[&(u, t)];
            let gp = zm.gen_p[&(u, t)];
            let gq = zm.gen_q[&(u, t)];
            model.add_row(vec![(gp, 1.0), (x, -unit.p_min)], Sense::Ge, 0.0);
            model.add_row(vec![(gp, 1.0), (x, -unit.p_max)], Sense::Le, 0.0);
            model.add_row(vec![(gq, 1.0), (x, -unit.q_min)], Sense::Ge, 0.0);
            model.add_row(vec![(gq, 1.0), (x, -unit.q_max)], Sense::Le, 0.0);
        }
        let up_p = unit.p_min + 0.5 * unit.ramp_p;
        let up_q = unit.q_min + 0.5 * unit.ramp_q;
        for t in 0..nt {
            let x_t = zm.commit[&(u, t)];
            let gp_t = zm.gen_p[&(u, t)];
            let gq_t = zm.gen_q[&(u, t)];
            if t == 0 {
                let x0 = if unit.initial_commit { 1.0 } else { 0.0 };
                // upward: g_0 - g_init <= R x_init + (Gmin + R/2)(x_0 - x_init)
                model.add_row(
                    vec![(gp_t, 1.0), (x_t, -up_p)],
                    Sense::Le,
                    unit.initial_p + unit.ramp_p * x0 - up_p * x0,
                );
                model.add_row(
                    vec![(gq_t, 1.0), (x_t, -up_q)],
                    Sense::Le,
                    unit.initial_q + unit.ramp_q * x0 - up_q * x0,
                );
                // downward: g_init - g_0 <= R x_0 + (Gmin + R/2)(x_init - x_0)
                model.add_row(
                    vec![(gp_t, -1.0), (x_t, -unit.ramp_p + up_p)],
                    Sense::Le,
                    -unit.initial_p + up_p * x0,
                );
                model.add_row(
                    vec![(gq_t, -1.0), (x_t, -unit.ramp_q + up_q)],
                    Sense::Le,
                    -unit.initial_q + up_q * x0,
                );
            } else {
                let x_prev = zm.commit[&(u, t - 1)];
                let gp_prev = zm.gen_p[&(u, t - 1)];
                let gq_prev = zm.gen_q[&(u, t - 1)];
                model.add_row(
                    vec![(gp_t, 1.0), (gp_prev, -1.0), (x_prev, -unit.ramp_p + up_p), (x_t, -up_p)],
                    Sense::Le,
                    0.0,
                );
                model.add_row(
                    vec![(gq_t, 1.0), (gq_prev, -1.0), (x_prev, -unit.ramp_q + up_q), (x_t, -up_q)],
                    Sense::Le,
                    0.0,
                );
                model.add_row(
                    vec![(gp_prev, 1.0), (gp_t, -1.0), (x_t, -unit.ramp_p + up_p), (x_prev, -up_p)],
                    Sense::Le,
                    0.0,
                );
                model.add_row(
                    vec![(gq_prev, 1.0), (gq_t, -1.0), (x_t, -unit.ramp_q + up_q), (x_prev, -up_q)],
                    Sense::Le,
                    0.0,
                );
            }
        }
    }

    // --- dynamically linearized rows --------------------------------------
    // anchor values for voltages of out-of-zone endpoints
    let mut voltage_anchors: HashMap<String, f64> = HashMap::new();
    for (b, bus) in case.tso_buses.iter().enumerate() {
        if view.zones[b] == zone {
            continue;
        }
        for t in 0..nt {
            voltage_anchors.insert(vre_name(bus.id, t), anchor.v_re.get(t, b));
            voltage_anchors.insert(vim_name(bus.id, t), anchor.v_im.get(t, b));
        }
    }
    let anchor_voltage = |name: &str| -> Option<f64> { voltage_anchors.get(name).copied() };

    for &l in &owned_line {
        let lv = &view.lines[l];
        let line = &case.tso_lines[l];
        let from_id = case.tso_buses[lv.from_pos].id;
        let to_id = case.tso_buses[lv.to_pos].id;
        for t in 0..nt {
            let vars = FlowVars {
                f_p: format!("fp_l{}_t{t}", line.id),
                f_q: format!("fq_l{}_t{t}", line.id),
                vs_re: vre_name(from_id, t),
                vs_im: vim_name(from_id, t),
                vr_re: vre_name(to_id, t),
                vr_im: vim_name(to_id, t),
            };
            let anchor_s = (anchor.v_re.get(t, lv.from_pos), anchor.v_im.get(t, lv.from_pos));
            let anchor_r = (anchor.v_re.get(t, lv.to_pos), anchor.v_im.get(t, lv.to_pos));
            let (p_cut, q_cut) = linearize_flow(lv.g_mw, lv.b_mw, anchor_s, anchor_r, &vars)
                .map_err(|e| SubproblemError::Lp {
                    context: format!("flow linearization line {} t {t}", line.id),
                    source: crate::lp::LpError::InvalidModel(e.to_string()),
                })?;
            add_cut_substituted(model, &p_cut, &anchor_voltage)?;
            add_cut_substituted(model, &q_cut, &anchor_voltage)?;
            // apparent-power cap at the (ball-projected) flow anchor
            let cap = linearize_quadratic_cap(
                &project_to_ball(anchor.flow_p.get(t, l), anchor.flow_q.get(t, l), lv.limit),
                &[vars.f_p.clone(), vars.f_q.clone()],
                lv.limit,
            );
            add_cut_substituted(model, &cap, &anchor_voltage)?;
        }
    }

    for &b in &in_zone_bus {
        let bus = &case.tso_buses[b];
        for t in 0..nt {
            let av = (anchor.v_re.get(t, b), anchor.v_im.get(t, b));
            let cap = linearize_quadratic_cap(
                &project_to_ball(av.0, av.1, bus.v_max),
                &[vre_name(bus.id, t), vim_name(bus.id, t)],
                bus.v_max,
            );
            add_cut_substituted(model, &cap, &anchor_voltage)?;
            // a near-zero anchor leaves the soft floor without a usable
            // gradient (the slack would be pinned at vmin^2 no matter
            // where the voltage moves); rescale such anchors to the inner
            // circle, keeping their direction
            let norm = (av.0 * av.0 + av.1 * av.1).sqrt();
            let soft_anchor = if norm < 0.25 * bus.v_min {
                if norm < 1e-9 {
                    (bus.v_min, 0.0)
                } else {
                    (av.0 * bus.v_min / norm, av.1 * bus.v_min / norm)
                }
            } else {
                av
            };
            let (soft, _slack) = soft_lower_voltage(
                bus.v_min,
                soft_anchor,
                &vre_name(bus.id, t),
                &vim_name(bus.id, t),
                &format!("vpen_b{}_t{t}", bus.id),
            );
            add_cut_substituted(model, &soft, &anchor_voltage)?;
        }
    }

    for &j in &in_zone_root {
        let d = &case.dsos[j];
        for t in 0..nt {
            let cap = linearize_quadratic_cap(
                &project_to_ball(anchor.pt_p.get(t, j), anchor.pt_q.get(t, j), d.pq_limit_tso),
                &[format!("pt_d{}_t{t}", d.id), format!("qt_d{}_t{t}", d.id)],
                d.pq_limit_tso,
            );
            add_cut_substituted(model, &cap, &anchor_voltage)?;
        }
    }

    // --- absolute-value penalty on the relaxed constraints ---------------
    // balance expressions, load-minus-generation orientation
    let mut residual_terms: Vec<LinExpr> = Vec::new();
    for &b in &in_zone_bus {
        let bus = &case.tso_buses[b];
        for t in 0..nt {
            for is_p in [true, false] {
                let load = if is_p { bus.load_p[t] } else { bus.load_q[t] };
                let gen_ids = if is_p { &zm.gen_p } else { &zm.gen_q };
                let flow_ids = if is_p { &zm.flow_p } else { &zm.flow_q };
                let flow_anchor = if is_p { &anchor.flow_p } else { &anchor.flow_q };
                let pt_ids = if is_p { &zm.pt_p } else { &zm.pt_q };
                let mut e = LinExpr::constant(load);
                for &u in &view.units_at[b] {
                    e.coeffs.push((model.var_name(gen_ids[&(u, t)]).to_string(), -1.0));
                }
                for &l in &view.lines_out[b] {
                    // outgoing lines of an in-zone bus are always owned here
                    e.coeffs.push((model.var_name(flow_ids[&(l, t)]).to_string(), 1.0));
                }
                for &l in &view.lines_in[b] {
                    match flow_ids.get(&(l, t)) {
                        Some(&id) => e.coeffs.push((model.var_name(id).to_string(), -1.0)),
                        None => e.constant -= flow_anchor.get(t, l),
                    }
                }
                if let Some(j) = view.dso_at_bus[b] {
                    if opts.include_interface {
                        e.coeffs.push((model.var_name(pt_ids[&(j, t)]).to_string(), -1.0));
                    }
                }
                residual_terms.push(e);
            }
        }
    }
    for &j in &in_zone_root {
        for t in 0..nt {
            let dp = LinExpr::constant(fixed_pd.0.get(t, j))
                .term(model.var_name(zm.pt_p[&(j, t)]).to_string(), -1.0);
            let dq = LinExpr::constant(fixed_pd.1.get(t, j))
                .term(model.var_name(zm.pt_q[&(j, t)]).to_string(), -1.0);
            residual_terms.push(dp);
            residual_terms.push(dq);
        }
    }
    let (aux, cuts) = l1_epigraph(&format!("ur_z{zone}"), &residual_terms);
    for name in &aux {
        model.add_var(name.clone(), 0.0, f64::INFINITY, h * c, VarKind::Continuous);
    }
    for cut in &cuts {
        add_cut_substituted(model, &cut.clone(), &anchor_voltage)?;
    }

    // --- l1-proximal terms -------------------------------------------------
    // |x - anchor| via a split with a single defining equality per term
    let mut prox_idx = 0usize;
    let add_prox = |model: &mut LpModel, var: usize, anchor_val: f64, zone: usize, prox_idx: &mut usize| {
        let dp = model.add_var(
            format!("prxp_z{zone}_{prox_idx}"),
            0.0,
            f64::INFINITY,
            h * cp,
            VarKind::Continuous,
        );
        let dn = model.add_var(
            format!("prxn_z{zone}_{prox_idx}"),
            0.0,
            f64::INFINITY,
            h * cp,
            VarKind::Continuous,
        );
        *prox_idx += 1;
        model.add_row(vec![(var, 1.0), (dp, -1.0), (dn, 1.0)], Sense::Eq, anchor_val);
    };
    for &b in &in_zone_bus {
        for t in 0..nt {
            add_prox(model, zm.v_re[&(b, t)], anchor.v_re.get(t, b), zone, &mut prox_idx);
            add_prox(model, zm.v_im[&(b, t)], anchor.v_im.get(t, b), zone, &mut prox_idx);
        }
    }
    for &l in &owned_line {
        for t in 0..nt {
            add_prox(model, zm.flow_p[&(l, t)], anchor.flow_p.get(t, l), zone, &mut prox_idx);
            add_prox(model, zm.flow_q[&(l, t)], anchor.flow_q.get(t, l), zone, &mut prox_idx);
        }
    }
    for &j in &in_zone_root {
        for t in 0..nt {
            add_prox(model, zm.pt_p[&(j, t)], anchor.pt_p.get(t, j), zone, &mut prox_idx);
            add_prox(model, zm.pt_q[&(j, t)], anchor.pt_q.get(t, j), zone, &mut prox_idx);
        }
    }

    Ok(zm)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::model::{AlgoParams, DsoBus, DsoNetwork, GridCase, Horizon, LambdaInit, TsoBus, TsoLine, TsoUnit};
    use crate::subproblems::{CaseView, OperatingPoint};

    fn line(id: usize, from: usize, to: usize) -> TsoLine {
        let (g, b) = crate::model::derive_admittance(0.01, 0.1).unwrap();
        TsoLine { id, from, to, r: 0.01, x: 0.1, g, b, flow_limit: 150.0 }
    }

    fn unit(id: usize, bus: usize, cost: f64, t: usize) -> TsoUnit {
        TsoUnit {
            id,
            bus,
            p_min: 0.0,
            p_max: 120.0,
            q_min: -60.0,
            q_max: 60.0,
            ramp_p: 120.0,
            ramp_q: 120.0,
            cost_p: vec![cost; t],
            cost_q: vec![0.0; t],
            initial_commit: false,
            initial_p: 0.0,
            initial_q: 0.0,
        }
    }

    pub(crate) fn four_bus_case(t: usize) -> GridCase {
        let mut buses: Vec<TsoBus> = (1..=4)
            .map(|id| TsoBus {
                id,
                v_min: 0.9,
                v_max: 1.1,
                load_p: vec![if id == 3 { 80.0 } else { 0.0 }; t],
                load_q: vec![0.0; t],
                is_root: false,
                zone: Some(0),
            })
            .collect();
        buses[1].is_root = true;
        GridCase {
            name: "four".into(),
            base_mva: 100.0,
            horizon: Horizon { num_periods: t, period_hours: 1.0 },
            tso_buses: buses,
            tso_lines: vec![line(1, 1, 2), line(2, 2, 3), line(3, 3, 4), line(4, 4, 1)],
            tso_units: vec![unit(1, 1, 40.0, t), unit(2, 4, 35.0, t)],
            dsos: vec![DsoNetwork {
                id: 1,
                root_bus: 2,
                head_bus: 1,
                buses: vec![DsoBus {
                    id: 1,
                    v2_min: 0.81,
                    v2_max: 1.21,
                    load_p: vec![0.0; t],
                    load_q: vec![0.0; t],
                }],
                lines: vec![],
                units: vec![],
                bid_p: vec![22.0; t],
                bid_q: vec![57.0; t],
                pq_limit_tso: 200.0,
                pq_limit_dso: 200.0,
            }],
            params: AlgoParams::default(),
            warm_start: None,
        }
    }

    #[test]
    fn binary_count_matches_units_times_periods() {
        for t in [1usize, 3] {
            let case = four_bus_case(t);
            let view = CaseView::new(&case, None).unwrap();
            let anchor = OperatingPoint::flat_start(&case);
            let duals = crate::subproblems::MultiplierState::init(&case, &view, LambdaInit::Zero);
            let zm = build_tso_zonal(
                &view,
                0,
                &anchor,
                &duals,
                (&anchor.pd_p, &anchor.pd_q),
                &BuildOpts::default(),
            )
            .unwrap();
            assert_eq!(zm.binary_count(), 2 * t);
            assert_eq!(zm.model.binary_ids().len(), 2 * t);
        }
    }

    #[test]
    fn zone_without_units_is_pure_lp() {
        let mut case = four_bus_case(1);
        // two zones: units sit on buses 1 and 4, both in zone 0
        for b in case.tso_buses.iter_mut() {
            b.zone = Some(if b.id == 2 || b.id == 3 { 1 } else { 0 });
        }
        let view = CaseView::new(&case, None).unwrap();
        let anchor = OperatingPoint::flat_start(&case);
        let duals = crate::subproblems::MultiplierState::init(&case, &view, LambdaInit::Zero);
        let zm = build_tso_zonal(
            &view,
            1,
            &anchor,
            &duals,
            (&anchor.pd_p, &anchor.pd_q),
            &BuildOpts::default(),
        )
        .unwrap();
        assert_eq!(zm.binary_count(), 0);
    }

    #[test]
    fn zone_partition_covers_every_variable_once() {
        let mut case = four_bus_case(2);
        for b in case.tso_buses.iter_mut() {
            b.zone = Some(if b.id <= 2 { 0 } else { 1 });
        }
        let view = CaseView::new(&case, None).unwrap();
        let anchor = OperatingPoint::flat_start(&case);
        let duals = crate::subproblems::MultiplierState::init(&case, &view, LambdaInit::Zero);
        let mut seen: std::collections::HashMap<String, usize> = std::collections::HashMap::new();
        for z in 0..view.nz {
            let zm = build_tso_zonal(
                &view,
                z,
                &anchor,
                &duals,
                (&anchor.pd_p, &anchor.pd_q),
                &BuildOpts::default(),
            )
            .unwrap();
            for j in 0..zm.model.n_vars() {
                let name = zm.model.var_name(j).to_string();
                if name.starts_with("ur_") || name.starts_with("prx") {
                    continue; // per-model auxiliaries
                }
                *seen.entry(name).or_insert(0) += 1;
            }
        }
        let t = case.periods();
        let expected = t
            * (case.tso_buses.len() * 3      // vre, vim, vpen
                + case.tso_units.len() * 3   // x, gp, gq
                + case.tso_lines.len() * 2   // fp, fq
                + case.dsos.len() * 2); // pt, qt
        assert_eq!(seen.len(), expected, "every transmission variable appears");
        assert!(seen.values().all(|&n| n == 1), "no variable is free in two zones");
    }

    #[test]
    fn anchor_satisfying_point_stays_feasible() {
        // Build the model anchored at a point whose flows equal the true
        // bilinear flows of its voltages; that point satisfies the
        // linearized rows exactly.
        let case = four_bus_case(1);
        let view = CaseView::new(&case, None).unwrap();
        let mut anchor = OperatingPoint::flat_start(&case);
        for (l, lv) in view.lines.iter().enumerate() {
            let vs = (anchor.v_re.get(0, lv.from_pos), anchor.v_im.get(0, lv.from_pos));
            let vr = (anchor.v_re.get(0, lv.to_pos), anchor.v_im.get(0, lv.to_pos));
            let (tp, tq) = crate::linearizer::true_flow(lv.g_mw, lv.b_mw, vs, vr);
            anchor.flow_p.set(0, l, tp);
            anchor.flow_q.set(0, l, tq);
        }
        let duals = crate::subproblems::MultiplierState::init(&case, &view, LambdaInit::Zero);
        let zm = build_tso_zonal(
            &view,
            0,
            &anchor,
            &duals,
            (&anchor.pd_p, &anchor.pd_q),
            &BuildOpts::default(),
        )
        .unwrap();
        // check the flow-definition equality rows at the anchor values
        let mut values = vec![f64::NAN; zm.model.n_vars()];
        for (&(l, t), &id) in &zm.flow_p {
            values[id] = anchor.flow_p.get(t, l);
        }
        for (&(l, t), &id) in &zm.flow_q {
            values[id] = anchor.flow_q.get(t, l);
        }
        for (&(b, t), &id) in &zm.v_re {
            values[id] = anchor.v_re.get(t, b);
        }
        for (&(b, t), &id) in &zm.v_im {
            values[id] = anchor.v_im.get(t, b);
        }
        for row in 0..zm.model.n_rows() {
            let act: f64 = zm.model.rows[row]
                .coeffs
                .iter()
                .map(|&(v, c)| if values[v].is_nan() { 0.0 } else { c * values[v] })
                .sum();
            if zm.model.rows[row].sense == Sense::Eq && !zm.model.rows[row].coeffs.iter().any(|&(v, _)| {
                zm.model.var_name(v).starts_with("prx")
            }) {
                assert!(
                    (act - zm.model.rows[row].rhs).abs() < 1e-9,
                    "row {row} violated at anchor"
                );
            }
        }
    }
}
