//! Brute-force references for desk-scale verification, plus the seeded
//! Monte Carlo comparison harness.
//!
//! The commitment oracle enumerates every on/off pattern and solves the
//! whole system (interface equality enforced, no relaxation, no zoning)
//! as a linearization fixed point: solve the LP anchored at the previous
//! solution, re-anchor, repeat. It shares the linearization rule and the
//! LP core with the coordinated path but none of its decomposition
//! machinery, which is the layer it exists to check.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coordinator::{run, run_uncoordinated, RunConfig};
use crate::exec::map_maybe_parallel;
use crate::linearizer::{
    cone_boundary_point, cone_cut_at, linearize_flow, linearize_quadratic_cap, true_flow, ConeSlots,
    FlowVars, LinExpr, CUT_TOL,
};
use crate::lp::{Instance, LpModel, Sense, Status, VarKind};
use crate::model::GridCase;
use crate::subproblems::{CaseView, OperatingPoint};

/// Hard cap on enumerated binaries (units times periods).
pub const MAX_ORACLE_BINARIES: usize = 12;

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("instance has {0} binaries; the oracle enumerates at most {MAX_ORACLE_BINARIES}")]
    TooLarge(usize),
    #[error("case is invalid:\n{}", .0.join("\n"))]
    InvalidCase(Vec<String>),
    #[error("lp failure in pattern {pattern}: {source}")]
    Lp {
        pattern: usize,
        #[source]
        source: crate::lp::LpError,
    },
}

/// Result of the exhaustive commitment enumeration.
#[derive(Debug, Clone)]
pub struct UcEnumeration {
    /// Price-free system cost of the best pattern, if any is feasible.
    pub best_cost: Option<f64>,
    /// Commitment of the best pattern, indexed `[unit * periods + t]`.
    pub best_commitment: Option<Vec<bool>>,
    pub patterns_total: usize,
    pub patterns_feasible: usize,
}

/// Exhaustive minimum over all commitment patterns; each pattern solves
/// the full coordinated system to a linearization fixed point (at most
/// 500 rounds, anchor movement below 1e-8).
pub fn enumerate_uc(case: &GridCase) -> Result<UcEnumeration, OracleError> {
    let findings = crate::model::validate_case(case);
    if !findings.is_empty() {
        return Err(OracleError::InvalidCase(findings));
    }
    let nb = case.tso_units.len() * case.periods();
    if nb > MAX_ORACLE_BINARIES {
        return Err(OracleError::TooLarge(nb));
    }
    let view = CaseView::new(case, None).map_err(|e| OracleError::InvalidCase(vec![e.to_string()]))?;
    let total = 1usize << nb;
    let patterns: Vec<usize> = (0..total).collect();
    let outcomes = map_maybe_parallel(patterns, crate::exec::parallel_available(), |mask| {
        solve_pattern(&view, mask)
    });
    let mut best: Option<(f64, usize)> = None;
    let mut feasible = 0usize;
    for (mask, out) in outcomes.into_iter().enumerate() {
        match out {
            PatternOutcome::Feasible(cost) => {
                feasible += 1;
                if best.map_or(true, |(b, bm)| cost < b - 1e-12 || (cost <= b + 1e-12 && mask < bm)) {
                    best = Some((cost, mask));
                }
            }
            PatternOutcome::Infeasible => {}
            PatternOutcome::Error(e) => return Err(OracleError::Lp { pattern: mask, source: e }),
        }
    }
    Ok(UcEnumeration {
        best_cost: best.map(|(c, _)| c),
        best_commitment: best.map(|(_, mask)| (0..nb).map(|i| mask >> i & 1 == 1).collect()),
        patterns_total: total,
        patterns_feasible: feasible,
    })
}

enum PatternOutcome {
    Feasible(f64),
    Infeasible,
    Error(crate::lp::LpError),
}

fn commit_of(mask: usize, u: usize, t: usize, periods: usize) -> f64 {
    if mask >> (u * periods + t) & 1 == 1 {
        1.0
    } else {
        0.0
    }
}

fn solve_pattern(view: &CaseView, mask: usize) -> PatternOutcome {
    let case = view.case;
    let nt = view.nt;
    // ramp feasibility of the fixed pattern is checked by the LP rows;
    // anchors start flat and move to each round's solution. The anchor
    // pull starts negligible and escalates if the plain iteration cycles;
    // it vanishes at any fixed point, so only tie-breaking is affected.
    let mut anchor = OperatingPoint::flat_start(case);
    for u in 0..case.tso_units.len() {
        for t in 0..nt {
            anchor.commit.set(t, u, commit_of(mask, u, t, nt));
        }
    }
    let stabilizer: f64 = 1e-7;
    for round in 0..500 {
        match solve_pattern_round(view, mask, &anchor, stabilizer) {
            Err(e) => return PatternOutcome::Error(e),
            Ok(None) => {
                log::debug!("oracle pattern {mask:b}: lp infeasible at round {round}");
                return PatternOutcome::Infeasible;
            }
            Ok(Some(point)) => {
                let movement = anchor_distance(&anchor, &point);
                if movement <= 1e-8 {
                    let cost = crate::subproblems::social_cost(view, &point);
                    anchor = point;
                    // exactness holds at the fixed point; make sure of it
                    if check_flow_equations(view.case, &anchor) > 1e-6 {
                        log::debug!("oracle pattern {mask:b}: fixed point fails flow check");
                        return PatternOutcome::Infeasible;
                    }
                    return PatternOutcome::Feasible(cost);
                }
                // averaged re-anchoring: plain replacement can orbit the
                // voltage-floor circle in a period-2 cycle; the damped
                // update has the same fixed points and settles
                mix_anchor(&mut anchor, &point, 0.5);
                if round > 0 && round % 100 == 0 {
                    log::debug!("oracle pattern {mask:b}: round {round} movement {movement:.3e}");
                }
            }
        }
    }
    log::debug!("oracle pattern {mask:b}: no fixed point in 500 rounds");
    PatternOutcome::Infeasible // no fixed point within the round budget
}

/// Damped anchor update over the linearized quantities; everything else
/// (dispatch, feeder state) is taken from the new point.
fn mix_anchor(anchor: &mut OperatingPoint, point: &OperatingPoint, keep: f64) {
    let mut mixed = point.clone();
    for (dst, src) in [
        (&mut mixed.v_re, &anchor.v_re),
        (&mut mixed.v_im, &anchor.v_im),
        (&mut mixed.flow_p, &anchor.flow_p),
        (&mut mixed.flow_q, &anchor.flow_q),
        (&mut mixed.pt_p, &anchor.pt_p),
        (&mut mixed.pt_q, &anchor.pt_q),
    ] {
        for t in 0..dst.nt() {
            for i in 0..dst.n() {
                let v = (1.0 - keep) * dst.get(t, i) + keep * src.get(t, i);
                dst.set(t, i, v);
            }
        }
    }
    *anchor = mixed;
}

fn anchor_distance(a: &OperatingPoint, b: &OperatingPoint) -> f64 {
    let mut worst = 0.0f64;
    for (x, y) in [
        (&a.v_re, &b.v_re),
        (&a.v_im, &b.v_im),
        (&a.flow_p, &b.flow_p),
        (&a.flow_q, &b.flow_q),
        (&a.pt_p, &b.pt_p),
        (&a.pt_q, &b.pt_q),
    ] {
        for (u, v) in x.values().iter().zip(y.values()) {
            worst = worst.max((u - v).abs());
        }
    }
    worst
}

fn add_cap_if_anchored(m: &mut LpModel, cut: &crate::linearizer::LinearCut) {
    // point-linearized caps vanish at an all-zero anchor; the next round
    // re-anchors and restores them
    if cut.coeffs.iter().any(|&(_, c)| c != 0.0) {
        m.add_cut(cut).expect("cap cut names");
    }
}

/// One LP round of the monolithic fixed-commitment model.
fn solve_pattern_round(
    view: &CaseView,
    mask: usize,
    anchor: &OperatingPoint,
    stabilizer: f64,
) -> Result<Option<OperatingPoint>, crate::lp::LpError> {
    let case = view.case;
    let nt = view.nt;
    let h = view.hours();
    let mut m = LpModel::new();

    // transmission variables; the first bus is the angle reference (the
    // rectangular model's global rotation symmetry is pinned there)
    let mut v_re = vec![usize::MAX; nt * case.tso_buses.len()];
    let mut v_im = vec![usize::MAX; nt * case.tso_buses.len()];
    for (b, bus) in case.tso_buses.iter().enumerate() {
        let is_ref = b == 0;
        for t in 0..nt {
            v_re[t * case.tso_buses.len() + b] = m.add_var(
                format!("vre_b{}_t{t}", bus.id),
                0.5 * bus.v_min,
                bus.v_max,
                0.0,
                VarKind::Continuous,
            );
            v_im[t * case.tso_buses.len() + b] = m.add_var(
                format!("vim_b{}_t{t}", bus.id),
                if is_ref { 0.0 } else { -bus.v_max },
                if is_ref { 0.0 } else { bus.v_max },
                0.0,
                VarKind::Continuous,
            );
        }
    }
    let vid = |grid: &[usize], t: usize, i: usize| grid[t * case.tso_buses.len() + i];
    let mut f_p = vec![usize::MAX; nt * case.tso_lines.len()];
    let mut f_q = vec![usize::MAX; nt * case.tso_lines.len()];
    for (l, lv) in view.lines.iter().enumerate() {
        let id = case.tso_lines[l].id;
        for t in 0..nt {
            f_p[t * case.tso_lines.len() + l] =
                m.add_var(format!("fp_l{id}_t{t}"), -lv.limit, lv.limit, 0.0, VarKind::Continuous);
            f_q[t * case.tso_lines.len() + l] =
                m.add_var(format!("fq_l{id}_t{t}"), -lv.limit, lv.limit, 0.0, VarKind::Continuous);
        }
    }
    let fid = |grid: &[usize], t: usize, l: usize| grid[t * case.tso_lines.len() + l];
    let mut g_p = vec![usize::MAX; nt * case.tso_units.len()];
    let mut g_q = vec![usize::MAX; nt * case.tso_units.len()];
    for (u, unit) in case.tso_units.iter().enumerate() {
        for t in 0..nt {
            let on = commit_of(mask, u, t, nt);
            g_p[t * case.tso_units.len() + u] = m.add_var(
                format!("gp_u{}_t{t}", unit.id),
                unit.p_min * on,
                unit.p_max * on,
                h * unit.cost_p[t],
                VarKind::Continuous,
            );
            g_q[t * case.tso_units.len() + u] = m.add_var(
                format!("gq_u{}_t{t}", unit.id),
                unit.q_min * on,
                unit.q_max * on,
                h * unit.cost_q[t],
                VarKind::Continuous,
            );
        }
    }
    let gid = |grid: &[usize], t: usize, u: usize| grid[t * case.tso_units.len() + u];
    let mut pt_p = vec![usize::MAX; nt * case.dsos.len()];
    let mut pt_q = vec![usize::MAX; nt * case.dsos.len()];
    for (j, d) in case.dsos.iter().enumerate() {
        for t in 0..nt {
            pt_p[t * case.dsos.len() + j] = m.add_var(
                format!("pt_d{}_t{t}", d.id),
                -d.pq_limit_tso,
                d.pq_limit_tso,
                h * d.bid_p[t],
                VarKind::Continuous,
            );
            pt_q[t * case.dsos.len() + j] = m.add_var(
                format!("qt_d{}_t{t}", d.id),
                -d.pq_limit_tso,
                d.pq_limit_tso,
                h * d.bid_q[t],
                VarKind::Continuous,
            );
        }
    }
    let ptid = |grid: &[usize], t: usize, j: usize| grid[t * case.dsos.len() + j];

    // ramp rows with the pattern constants
    for (u, unit) in case.tso_units.iter().enumerate() {
        let up_p = unit.p_min + 0.5 * unit.ramp_p;
        let up_q = unit.q_min + 0.5 * unit.ramp_q;
        for t in 0..nt {
            let x_t = commit_of(mask, u, t, nt);
            let (x_prev, gp_prev, gq_prev): (f64, Option<usize>, Option<usize>) = if t == 0 {
                (
                    if unit.initial_commit { 1.0 } else { 0.0 },
                    None,
                    None,
                )
            } else {
                (
                    commit_of(mask, u, t - 1, nt),
                    Some(gid(&g_p, t - 1, u)),
                    Some(gid(&g_q, t - 1, u)),
                )
            };
            let base_p = if t == 0 { unit.initial_p } else { 0.0 };
            let base_q = if t == 0 { unit.initial_q } else { 0.0 };
            // upward
            let mut row = vec![(gid(&g_p, t, u), 1.0)];
            if let Some(prev) = gp_prev {
                row.push((prev, -1.0));
            }
            m.add_row(row, Sense::Le, base_p + unit.ramp_p * x_prev + up_p * (x_t - x_prev));
            let mut row = vec![(gid(&g_q, t, u), 1.0)];
            if let Some(prev) = gq_prev {
                row.push((prev, -1.0));
            }
            m.add_row(row, Sense::Le, base_q + unit.ramp_q * x_prev + up_q * (x_t - x_prev));
            // downward
            let mut row = vec![(gid(&g_p, t, u), -1.0)];
            if let Some(prev) = gp_prev {
                row.push((prev, 1.0));
            }
            m.add_row(row, Sense::Le, -base_p + unit.ramp_p * x_t + up_p * (x_prev - x_t));
            let mut row = vec![(gid(&g_q, t, u), -1.0)];
            if let Some(prev) = gq_prev {
                row.push((prev, 1.0));
            }
            m.add_row(row, Sense::Le, -base_q + unit.ramp_q * x_t + up_q * (x_prev - x_t));
        }
    }

    // linearized flow definitions, caps, hard voltage rows
    for (l, lv) in view.lines.iter().enumerate() {
        for t in 0..nt {
            let vars = FlowVars {
                f_p: m.var_name(fid(&f_p, t, l)).to_string(),
                f_q: m.var_name(fid(&f_q, t, l)).to_string(),
                vs_re: m.var_name(vid(&v_re, t, lv.from_pos)).to_string(),
                vs_im: m.var_name(vid(&v_im, t, lv.from_pos)).to_string(),
                vr_re: m.var_name(vid(&v_re, t, lv.to_pos)).to_string(),
                vr_im: m.var_name(vid(&v_im, t, lv.to_pos)).to_string(),
            };
            let a_s = (anchor.v_re.get(t, lv.from_pos), anchor.v_im.get(t, lv.from_pos));
            let a_r = (anchor.v_re.get(t, lv.to_pos), anchor.v_im.get(t, lv.to_pos));
            let (pc, qc) = linearize_flow(lv.g_mw, lv.b_mw, a_s, a_r, &vars)
                .map_err(|e| crate::lp::LpError::InvalidModel(e.to_string()))?;
            m.add_cut(&pc).expect("flow cut names");
            m.add_cut(&qc).expect("flow cut names");
            let cap = linearize_quadratic_cap(
                &[anchor.flow_p.get(t, l), anchor.flow_q.get(t, l)],
                &[vars.f_p.clone(), vars.f_q.clone()],
                lv.limit,
            );
            add_cap_if_anchored(&mut m, &cap);
        }
    }
    for (b, bus) in case.tso_buses.iter().enumerate() {
        for t in 0..nt {
            let names = [m.var_name(vid(&v_re, t, b)).to_string(), m.var_name(vid(&v_im, t, b)).to_string()];
            let av = [anchor.v_re.get(t, b), anchor.v_im.get(t, b)];
            add_cap_if_anchored(&mut m, &linearize_quadratic_cap(&av, &names, bus.v_max));
            // hard linearized voltage floor (no slack in the oracle)
            m.add_row(
                vec![(vid(&v_re, t, b), av[0]), (vid(&v_im, t, b), av[1])],
                Sense::Ge,
                bus.v_min * bus.v_min,
            );
        }
    }
    for (j, d) in case.dsos.iter().enumerate() {
        for t in 0..nt {
            let names =
                [m.var_name(ptid(&pt_p, t, j)).to_string(), m.var_name(ptid(&pt_q, t, j)).to_string()];
            let av = [anchor.pt_p.get(t, j), anchor.pt_q.get(t, j)];
            add_cap_if_anchored(&mut m, &linearize_quadratic_cap(&av, &names, d.pq_limit_tso));
        }
    }

    // hard nodal balances
    for (b, bus) in case.tso_buses.iter().enumerate() {
        for t in 0..nt {
            for is_p in [true, false] {
                let mut coeffs: Vec<(usize, f64)> = Vec::new();
                for &u in &view.units_at[b] {
                    coeffs.push((gid(if is_p { &g_p } else { &g_q }, t, u), 1.0));
                }
                for &l in &view.lines_in[b] {
                    coeffs.push((fid(if is_p { &f_p } else { &f_q }, t, l), 1.0));
                }
                for &l in &view.lines_out[b] {
                    coeffs.push((fid(if is_p { &f_p } else { &f_q }, t, l), -1.0));
                }
                if let Some(j) = view.dso_at_bus[b] {
                    coeffs.push((ptid(if is_p { &pt_p } else { &pt_q }, t, j), 1.0));
                }
                let load = if is_p { bus.load_p[t] } else { bus.load_q[t] };
                if coeffs.is_empty() {
                    if load.abs() > 1e-9 {
                        return Ok(None); // isolated loaded bus can never balance
                    }
                    continue;
                }
                m.add_row(coeffs, Sense::Eq, load);
            }
        }
    }

    // feeders: same physics as the coordinated path, interface equality hard
    let mut quad_specs: Vec<ConeSlots> = Vec::new();
    let mut dso_maps = Vec::new();
    for (j, d) in case.dsos.iter().enumerate() {
        let dv = &view.dsos[j];
        let mut v2 = vec![usize::MAX; nt * d.buses.len()];
        let mut a2 = vec![usize::MAX; nt * d.lines.len()];
        let mut fp = vec![usize::MAX; nt * d.lines.len()];
        let mut fq = vec![usize::MAX; nt * d.lines.len()];
        let mut gp = vec![usize::MAX; nt * d.units.len()];
        let mut gq = vec![usize::MAX; nt * d.units.len()];
        let mut pd = vec![usize::MAX; nt];
        let mut qd = vec![usize::MAX; nt];
        for (b, bus) in d.buses.iter().enumerate() {
            for t in 0..nt {
                v2[t * d.buses.len() + b] = m.add_var(
                    format!("o_d{}_v_b{}_t{t}", d.id, bus.id),
                    bus.v2_min,
                    bus.v2_max,
                    0.0,
                    VarKind::Continuous,
                );
            }
        }
        for (l, lv) in dv.lines.iter().enumerate() {
            let id = d.lines[l].id;
            for t in 0..nt {
                a2[t * d.lines.len() + l] =
                    m.add_var(format!("o_d{}_a_l{id}_t{t}", d.id), 0.0, f64::INFINITY, 0.0, VarKind::Continuous);
                fp[t * d.lines.len() + l] = m.add_var(
                    format!("o_d{}_fp_l{id}_t{t}", d.id),
                    -lv.s_limit,
                    lv.s_limit,
                    0.0,
                    VarKind::Continuous,
                );
                fq[t * d.lines.len() + l] = m.add_var(
                    format!("o_d{}_fq_l{id}_t{t}", d.id),
                    -lv.s_limit,
                    lv.s_limit,
                    0.0,
                    VarKind::Continuous,
                );
            }
        }
        for (u, unit) in d.units.iter().enumerate() {
            for t in 0..nt {
                gp[t * d.units.len() + u] = m.add_var(
                    format!("o_d{}_gp_u{}_t{t}", d.id, unit.id),
                    unit.p_min,
                    unit.p_max,
                    h * unit.cost_p[t],
                    VarKind::Continuous,
                );
                gq[t * d.units.len() + u] = m.add_var(
                    format!("o_d{}_gq_u{}_t{t}", d.id, unit.id),
                    unit.q_min,
                    unit.q_max,
                    h * unit.cost_q[t],
                    VarKind::Continuous,
                );
            }
        }
        for t in 0..nt {
            pd[t] = m.add_var(
                format!("o_pd_d{}_t{t}", d.id),
                -d.pq_limit_dso,
                d.pq_limit_dso,
                0.0,
                VarKind::Continuous,
            );
            qd[t] = m.add_var(
                format!("o_qd_d{}_t{t}", d.id),
                -d.pq_limit_dso,
                d.pq_limit_dso,
                0.0,
                VarKind::Continuous,
            );
            // interface equality, the coupling the relaxation relaxes
            m.add_row(vec![(pd[t], 1.0), (ptid(&pt_p, t, j), -1.0)], Sense::Eq, 0.0);
            m.add_row(vec![(qd[t], 1.0), (ptid(&pt_q, t, j), -1.0)], Sense::Eq, 0.0);
        }
        for (l, lv) in dv.lines.iter().enumerate() {
            for t in 0..nt {
                m.add_row(
                    vec![
                        (v2[t * d.buses.len() + lv.to_pos], 1.0),
                        (v2[t * d.buses.len() + lv.from_pos], -1.0),
                        (fp[t * d.lines.len() + l], -2.0 * lv.r_s),
                        (fq[t * d.lines.len() + l], -2.0 * lv.x_s),
                        (a2[t * d.lines.len() + l], lv.r_s * lv.r_s + lv.x_s * lv.x_s),
                    ],
                    Sense::Eq,
                    0.0,
                );
            }
        }
        for (b, bus) in d.buses.iter().enumerate() {
            for t in 0..nt {
                for is_p in [true, false] {
                    let mut coeffs: Vec<(usize, f64)> = Vec::new();
                    let mut shunt = 0.0;
                    for &l in &dv.lines_out[b] {
                        let lv = &dv.lines[l];
                        coeffs.push((if is_p { fp[t * d.lines.len() + l] } else { fq[t * d.lines.len() + l] }, 1.0));
                        shunt += if is_p { lv.g_sh_mw } else { lv.b_sh_mw };
                    }
                    for &l in &dv.lines_in[b] {
                        let lv = &dv.lines[l];
                        coeffs.push((if is_p { fp[t * d.lines.len() + l] } else { fq[t * d.lines.len() + l] }, -1.0));
                        coeffs.push((a2[t * d.lines.len() + l], if is_p { lv.r_s } else { lv.x_s }));
                    }
                    for &u in &dv.units_at[b] {
                        coeffs.push((if is_p { gp[t * d.units.len() + u] } else { gq[t * d.units.len() + u] }, -1.0));
                    }
                    if shunt != 0.0 {
                        coeffs.push((v2[t * d.buses.len() + b], shunt));
                    }
                    if b == dv.head {
                        coeffs.push((if is_p { pd[t] } else { qd[t] }, 1.0));
                    }
                    let load = if is_p { bus.load_p[t] } else { bus.load_q[t] };
                    if coeffs.is_empty() {
                        if load.abs() > 1e-9 {
                            return Ok(None);
                        }
                        continue;
                    }
                    m.add_row(coeffs, Sense::Eq, -load);
                }
            }
        }
        // quadratic rows for the cut loop
        for (l, lv) in dv.lines.iter().enumerate() {
            for t in 0..nt {
                let fpn = m.var_name(fp[t * d.lines.len() + l]).to_string();
                let fqn = m.var_name(fq[t * d.lines.len() + l]).to_string();
                let an = m.var_name(a2[t * d.lines.len() + l]).to_string();
                let vn = m.var_name(v2[t * d.buses.len() + lv.from_pos]).to_string();
                quad_specs.push(ConeSlots {
                    p: LinExpr::var(fpn.clone()),
                    q: LinExpr::var(fqn.clone()),
                    v: LinExpr::var(vn),
                    a: LinExpr::var(an.clone()),
                });
                let s2 = lv.s_limit * lv.s_limit;
                quad_specs.push(ConeSlots {
                    p: LinExpr::var(fpn.clone()),
                    q: LinExpr::var(fqn.clone()),
                    v: LinExpr::constant(s2),
                    a: LinExpr::constant(1.0),
                });
                quad_specs.push(ConeSlots {
                    p: LinExpr::var(fpn).term(an.clone(), -lv.r_s),
                    q: LinExpr::var(fqn).term(an, -lv.x_s),
                    v: LinExpr::constant(s2),
                    a: LinExpr::constant(1.0),
                });
            }
        }
        for t in 0..nt {
            let r2 = d.pq_limit_dso * d.pq_limit_dso;
            quad_specs.push(ConeSlots {
                p: LinExpr::var(m.var_name(pd[t]).to_string()),
                q: LinExpr::var(m.var_name(qd[t]).to_string()),
                v: LinExpr::constant(r2),
                a: LinExpr::constant(1.0),
            });
        }
        dso_maps.push((v2, a2, fp, fq, gp, gq, pd, qd));
    }

    // Tiny pull toward the anchor on every linearized quantity: without
    // it, zero-cost voltage vertices wander between rounds and the plain
    // re-anchoring iteration need not settle. The weight is far below any
    // cost scale and vanishes at the fixed point; reported costs are
    // recomputed from the point, not from this objective.
    let mut stab_idx = 0usize;
    let stabilize = |m: &mut LpModel, var: usize, target: f64, idx: &mut usize| {
        let dp = m.add_var(format!("o_stp_{idx}"), 0.0, f64::INFINITY, stabilizer, VarKind::Continuous);
        let dn = m.add_var(format!("o_stn_{idx}"), 0.0, f64::INFINITY, stabilizer, VarKind::Continuous);
        *idx += 1;
        m.add_row(vec![(var, 1.0), (dp, -1.0), (dn, 1.0)], Sense::Eq, target);
    };
    for b in 0..case.tso_buses.len() {
        for t in 0..nt {
            stabilize(&mut m, vid(&v_re, t, b), anchor.v_re.get(t, b), &mut stab_idx);
            stabilize(&mut m, vid(&v_im, t, b), anchor.v_im.get(t, b), &mut stab_idx);
        }
    }
    for l in 0..case.tso_lines.len() {
        for t in 0..nt {
            stabilize(&mut m, fid(&f_p, t, l), anchor.flow_p.get(t, l), &mut stab_idx);
            stabilize(&mut m, fid(&f_q, t, l), anchor.flow_q.get(t, l), &mut stab_idx);
        }
    }
    for j in 0..case.dsos.len() {
        for t in 0..nt {
            stabilize(&mut m, ptid(&pt_p, t, j), anchor.pt_p.get(t, j), &mut stab_idx);
            stabilize(&mut m, ptid(&pt_q, t, j), anchor.pt_q.get(t, j), &mut stab_idx);
        }
    }

    // cut-loop solve of the monolithic LP
    let mut inst = Instance::from_model(&m, false)?;
    let budget = 50_000 + 40 * (m.n_rows() + m.n_vars());
    for _ in 0..300 {
        let status = inst.solve(budget)?;
        match status {
            Status::Optimal => {}
            Status::Infeasible => {
                if std::env::var_os("GRIDCOORD_DUMP_LP").is_some() {
                    let _ = std::fs::write("/tmp/oracle_infeasible.lp", crate::case_io::lp_format::write_lp_string(&m));
                }
                return Ok(None);
            }
            other => {
                return Err(crate::lp::LpError::Numerical(format!(
                    "oracle pattern LP returned {other:?}"
                )))
            }
        }
        let value = |name: &str| inst.col_value(m.var_id(name).expect("oracle spec var"));
        let mut cuts = Vec::new();
        for slots in &quad_specs {
            let p = slots.p.value(value);
            let q = slots.q.value(value);
            let v = slots.v.value(value);
            let a = slots.a.value(value);
            if p * p + q * q - v * a > CUT_TOL {
                let anchor_pt = if slots.v.coeffs.is_empty() {
                    (p, q, v, a) // disk: gradient cut is valid anywhere
                } else {
                    cone_boundary_point(p, q, v, a)
                };
                cuts.push(cone_cut_at(anchor_pt, slots));
            }
        }
        if cuts.is_empty() {
            // extract the operating point
            let mut point = OperatingPoint::flat_start(case);
            for u in 0..case.tso_units.len() {
                for t in 0..nt {
                    point.commit.set(t, u, commit_of(mask, u, t, nt));
                    point.gen_p.set(t, u, inst.col_value(gid(&g_p, t, u)));
                    point.gen_q.set(t, u, inst.col_value(gid(&g_q, t, u)));
                }
            }
            for b in 0..case.tso_buses.len() {
                for t in 0..nt {
                    point.v_re.set(t, b, inst.col_value(vid(&v_re, t, b)));
                    point.v_im.set(t, b, inst.col_value(vid(&v_im, t, b)));
                }
            }
            for l in 0..case.tso_lines.len() {
                for t in 0..nt {
                    point.flow_p.set(t, l, inst.col_value(fid(&f_p, t, l)));
                    point.flow_q.set(t, l, inst.col_value(fid(&f_q, t, l)));
                }
            }
            for (j, d) in case.dsos.iter().enumerate() {
                let (v2, a2, fp, fq, gp, gq, pd, qd) = &dso_maps[j];
                for t in 0..nt {
                    point.pt_p.set(t, j, inst.col_value(ptid(&pt_p, t, j)));
                    point.pt_q.set(t, j, inst.col_value(ptid(&pt_q, t, j)));
                    point.pd_p.set(t, j, inst.col_value(pd[t]));
                    point.pd_q.set(t, j, inst.col_value(qd[t]));
                    for b in 0..d.buses.len() {
                        point.dso[j].v2.set(t, b, inst.col_value(v2[t * d.buses.len() + b]));
                    }
                    for l in 0..d.lines.len() {
                        point.dso[j].a2.set(t, l, inst.col_value(a2[t * d.lines.len() + l]));
                        point.dso[j].flow_p.set(t, l, inst.col_value(fp[t * d.lines.len() + l]));
                        point.dso[j].flow_q.set(t, l, inst.col_value(fq[t * d.lines.len() + l]));
                    }
                    for u in 0..d.units.len() {
                        point.dso[j].gen_p.set(t, u, inst.col_value(gp[t * d.units.len() + u]));
                        point.dso[j].gen_q.set(t, u, inst.col_value(gq[t * d.units.len() + u]));
                    }
                }
            }
            return Ok(Some(point));
        }
        for cut in &cuts {
            let coeffs: Vec<(usize, f64)> =
                cut.coeffs.iter().map(|(n, c)| (m.var_id(n).expect("cut var"), *c)).collect();
            inst.add_row(&coeffs, cut.sense, cut.rhs);
        }
    }
    Ok(None)
}

/// Worst absolute gap between the stored linearized flows and the true
/// bilinear flows recomputed from the point's voltages.
pub fn check_flow_equations(case: &GridCase, point: &OperatingPoint) -> f64 {
    let view = CaseView::new(case, None).expect("validated case");
    let mut worst = 0.0f64;
    for t in 0..view.nt {
        for (l, lv) in view.lines.iter().enumerate() {
            let vs = (point.v_re.get(t, lv.from_pos), point.v_im.get(t, lv.from_pos));
            let vr = (point.v_re.get(t, lv.to_pos), point.v_im.get(t, lv.to_pos));
            let (tp, tq) = true_flow(lv.g_mw, lv.b_mw, vs, vr);
            worst = worst.max((point.flow_p.get(t, l) - tp).abs());
            worst = worst.max((point.flow_q.get(t, l) - tq).abs());
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// Monte Carlo harness

#[derive(Debug, Clone, PartialEq)]
pub struct McRow {
    pub sample: usize,
    pub tso_impr_pct: f64,
    pub dso_impr_pct: f64,
    pub total_impr_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McSummary {
    pub rows: Vec<McRow>,
    pub failures: usize,
    pub mean_tso: f64,
    pub mean_dso: f64,
    pub mean_total: f64,
}

fn pct(unco: f64, co: f64) -> f64 {
    if unco.abs() < 1e-9 {
        0.0
    } else {
        (unco - co) / unco.abs() * 100.0
    }
}

/// Redraw all transmission unit costs and feeder bids uniformly from
/// `[cost_low, cost_high]`, then compare coordinated and uncoordinated
/// costs per sample. Sample seeds derive from one master stream, so the
/// table is identical for a given seed regardless of parallelism.
pub fn monte_carlo(
    case: &GridCase,
    samples: usize,
    cost_low: f64,
    cost_high: f64,
    seed: u64,
    config: &RunConfig,
) -> Result<McSummary, OracleError> {
    let findings = crate::model::validate_case(case);
    if !findings.is_empty() {
        return Err(OracleError::InvalidCase(findings));
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let sample_seeds: Vec<(usize, u64)> = (0..samples).map(|i| (i, master.next_u64())).collect();
    let outcomes = map_maybe_parallel(sample_seeds, config.parallel_dsos, |(i, s)| {
        let drawn = redraw_costs(case, cost_low, cost_high, s);
        let co = run(&drawn, config);
        let unco = run_uncoordinated(&drawn, config);
        match (co, unco) {
            (Ok(co), Ok(unco)) => {
                let (Some(co_tso), Some(un_tso)) = (co.tso_cost, unco.tso_cost) else {
                    return (i, None);
                };
                let co_dso: f64 = co.dso_costs.iter().sum();
                let un_dso: f64 = unco.dso_costs.iter().sum();
                let co_total = co_tso + co_dso;
                let un_total = un_tso + un_dso;
                (
                    i,
                    Some(McRow {
                        sample: i,
                        tso_impr_pct: pct(un_tso, co_tso),
                        dso_impr_pct: pct(un_dso, co_dso),
                        total_impr_pct: pct(un_total, co_total),
                    }),
                )
            }
            _ => (i, None),
        }
    });
    let mut rows = Vec::new();
    let mut failures = 0usize;
    for (_, out) in outcomes {
        match out {
            Some(row) => rows.push(row),
            None => failures += 1,
        }
    }
    let n = rows.len().max(1) as f64;
    Ok(McSummary {
        mean_tso: rows.iter().map(|r| r.tso_impr_pct).sum::<f64>() / n,
        mean_dso: rows.iter().map(|r| r.dso_impr_pct).sum::<f64>() / n,
        mean_total: rows.iter().map(|r| r.total_impr_pct).sum::<f64>() / n,
        rows,
        failures,
    })
}

/// One sample's case: unit costs and bids drawn from U[lo, hi], constant
/// over the horizon, in a fixed order (units p then q, feeders p then q).
pub fn redraw_costs(case: &GridCase, lo: f64, hi: f64, sample_seed: u64) -> GridCase {
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
    let mut draw = || -> f64 {
        if hi > lo {
            rng.gen_range(lo..hi)
        } else {
            lo
        }
    };
    let t = case.periods();
    let mut out = case.clone();
    for u in out.tso_units.iter_mut() {
        u.cost_p = vec![draw(); t];
        u.cost_q = vec![draw(); t];
    }
    for d in out.dsos.iter_mut() {
        d.bid_p = vec![draw(); t];
        d.bid_q = vec![draw(); t];
    }
    out
}

/// Summary table as CSV: one row per successful sample plus a mean row.
pub fn write_mc_csv(summary: &McSummary, path: impl AsRef<std::path::Path>) -> std::io::Result<()> {
    use std::io::Write as _;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "sample,tso_impr_pct,dso_impr_pct,total_impr_pct")?;
    for r in &summary.rows {
        writeln!(
            f,
            "{},{},{},{}",
            r.sample,
            crate::case_io::fmt_f64(r.tso_impr_pct),
            crate::case_io::fmt_f64(r.dso_impr_pct),
            crate::case_io::fmt_f64(r.total_impr_pct)
        )?;
    }
    writeln!(
        f,
        "mean,{},{},{}",
        crate::case_io::fmt_f64(summary.mean_tso),
        crate::case_io::fmt_f64(summary.mean_dso),
        crate::case_io::fmt_f64(summary.mean_total)
    )?;
    f.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AlgoParams, Horizon, TsoBus, TsoUnit};

    fn uc_case(load: f64, caps: &[f64], costs: &[f64]) -> GridCase {
        let t = 1;
        GridCase {
            name: "uc".into(),
            base_mva: 100.0,
            horizon: Horizon { num_periods: t, period_hours: 1.0 },
            tso_buses: vec![TsoBus {
                id: 1,
                v_min: 0.9,
                v_max: 1.1,
                load_p: vec![load],
                load_q: vec![0.0],
                is_root: false,
                zone: Some(0),
            }],
            tso_lines: vec![],
            tso_units: caps
                .iter()
                .zip(costs)
                .enumerate()
                .map(|(i, (&cap, &cost))| TsoUnit {
                    id: i + 1,
                    bus: 1,
                    p_min: 0.0,
                    p_max: cap,
                    q_min: -50.0,
                    q_max: 50.0,
                    // cold starts are capped at p_min + ramp/2; keep the
                    // ramps generous so single-period dispatch is free
                    ramp_p: 2.5 * cap,
                    ramp_q: 100.0,
                    cost_p: vec![cost],
                    cost_q: vec![0.0],
                    initial_commit: false,
                    initial_p: 0.0,
                    initial_q: 0.0,
                })
                .collect(),
            dsos: vec![],
            params: AlgoParams::default(),
            warm_start: None,
        }
    }

    #[test]
    fn two_unit_enumeration() {
        let case = uc_case(100.0, &[80.0, 80.0], &[10.0, 20.0]);
        let out = enumerate_uc(&case).unwrap();
        assert_eq!(out.patterns_total, 4);
        assert!((out.best_cost.unwrap() - 1200.0).abs() < 1e-6);
        assert_eq!(out.best_commitment.unwrap(), vec![true, true]);
    }

    #[test]
    fn zero_load_prefers_everything_off() {
        let case = uc_case(0.0, &[80.0, 80.0], &[10.0, 20.0]);
        let out = enumerate_uc(&case).unwrap();
        assert_eq!(out.best_cost.unwrap(), 0.0);
        assert_eq!(out.best_commitment.unwrap(), vec![false, false]);
    }

    #[test]
    fn impossible_load_is_infeasible_for_all_patterns() {
        let case = uc_case(500.0, &[80.0, 80.0], &[10.0, 20.0]);
        let out = enumerate_uc(&case).unwrap();
        assert_eq!(out.patterns_feasible, 0);
        assert!(out.best_cost.is_none());
    }

    #[test]
    fn size_guard_rejects_large_instances() {
        let case = uc_case(10.0, &[80.0; 13], &[10.0; 13]);
        assert!(matches!(enumerate_uc(&case), Err(OracleError::TooLarge(13))));
    }

    #[test]
    fn flow_check_detects_perturbation() {
        let case = crate::subproblems::tso::tests::four_bus_case(1);
        let view = CaseView::new(&case, None).unwrap();
        let mut point = OperatingPoint::flat_start(&case);
        for (l, lv) in view.lines.iter().enumerate() {
            let (tp, tq) = true_flow(
                lv.g_mw,
                lv.b_mw,
                (point.v_re.get(0, lv.from_pos), point.v_im.get(0, lv.from_pos)),
                (point.v_re.get(0, lv.to_pos), point.v_im.get(0, lv.to_pos)),
            );
            point.flow_p.set(0, l, tp);
            point.flow_q.set(0, l, tq);
        }
        assert!(check_flow_equations(&case, &point) <= 1e-12);
        // perturb one voltage; the mismatch equals the hand-computed flow delta
        let lv0 = view.lines[0].clone();
        let old = (point.v_re.get(0, lv0.to_pos), point.v_im.get(0, lv0.to_pos));
        point.v_re.set(0, lv0.to_pos, old.0 + 0.1);
        let mut expected = 0.0f64;
        for (l, lv) in view.lines.iter().enumerate() {
            let vs = (point.v_re.get(0, lv.from_pos), point.v_im.get(0, lv.from_pos));
            let vr = (point.v_re.get(0, lv.to_pos), point.v_im.get(0, lv.to_pos));
            let (tp, tq) = true_flow(lv.g_mw, lv.b_mw, vs, vr);
            expected = expected.max((point.flow_p.get(0, l) - tp).abs());
            expected = expected.max((point.flow_q.get(0, l) - tq).abs());
        }
        let got = check_flow_equations(&case, &point);
        assert!(got > 0.0);
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn redraw_is_deterministic_per_seed() {
        let case = uc_case(10.0, &[80.0, 60.0], &[10.0, 20.0]);
        let a = redraw_costs(&case, 20.0, 60.0, 42);
        let b = redraw_costs(&case, 20.0, 60.0, 42);
        assert_eq!(a, b);
        let c = redraw_costs(&case, 20.0, 60.0, 43);
        assert_ne!(a, c);
        let degenerate = redraw_costs(&case, 30.0, 30.0, 7);
        assert!(degenerate.tso_units.iter().all(|u| u.cost_p[0] == 30.0));
    }
}
