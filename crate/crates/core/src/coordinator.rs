//! The coordination loop: alternating zonal transmission and feeder
//! solves gated by surrogate optimality conditions, with multiplier,
//! stepsize and penalty updates, feasibility detection against the
//! original nonlinear constraints, and feasible-cost accounting.

use std::time::Instant;

use crate::case_io::{Phase, PriceRow, TraceRow};
use crate::exec::map_maybe_parallel;
use crate::linearizer::true_flow;
use crate::lp::{self, Status};
use crate::model::{GridCase, LambdaInit};
use crate::subproblems::{
    assemble_residual, build_dso, build_tso_zonal, check_surrogate_condition, dso_generation_cost,
    dso_objective, eval_surrogate, proximal_norm1, social_cost, solve_dso, tso_objective, BuildOpts,
    CaseView, DsoObjectives, MultiplierState, OperatingPoint, ResidualVector, Side, SubproblemError,
};

#[derive(Debug, thiserror::Error)]
pub enum CoordError {
    #[error("case is invalid:\n{}", .0.join("\n"))]
    InvalidCase(Vec<String>),
    #[error("iteration {iter}: {source}")]
    Subproblem {
        iter: usize,
        #[source]
        source: SubproblemError,
    },
    #[error("iteration {iter}: zone {zone} milp: {source}")]
    Milp {
        iter: usize,
        zone: usize,
        #[source]
        source: lp::LpError,
    },
    #[error("iteration {iter}: zone {zone} solver returned {status:?}")]
    ZoneStatus { iter: usize, zone: usize, status: Status },
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

/// Run-time configuration: case parameters plus overrides.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub max_iter: Option<usize>,
    pub time_limit: Option<f64>,
    pub eps: Option<f64>,
    pub eps_p: Option<f64>,
    /// Forces an automatic partition into this many zones.
    pub zones: Option<usize>,
    pub lambda_init: Option<LambdaInit>,
    /// Reserved for sampling layers (Monte Carlo); the loop itself is
    /// deterministic.
    pub seed: u64,
    /// Solve feeders concurrently (always deterministic).
    pub parallel_dsos: bool,
    /// Solve zones concurrently; switches anchor propagation from
    /// immediate (within a sweep) to end-of-sweep barrier semantics.
    pub parallel_zones: bool,
    pub solver: lp::Solver,
    pub milp_gap: f64,
    pub milp_node_limit: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            max_iter: None,
            time_limit: None,
            eps: None,
            eps_p: None,
            zones: None,
            lambda_init: None,
            seed: 0,
            parallel_dsos: true,
            parallel_zones: false,
            solver: lp::Solver::Embedded,
            milp_gap: 1e-6,
            milp_node_limit: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIter,
    TimeLimit,
}

/// Outcome of a coordination run.
#[derive(Debug)]
pub struct RunResult {
    /// Best audit-passing point by price-free system cost, if any.
    pub best: Option<OperatingPoint>,
    /// The last accepted iterate, feasible or not (diagnostics).
    pub last: OperatingPoint,
    pub final_duals: MultiplierState,
    pub trace: Vec<TraceRow>,
    pub prices: Vec<PriceRow>,
    pub termination: Termination,
    /// Costs of the best feasible point, from the original objectives.
    pub tso_cost: Option<f64>,
    pub dso_costs: Vec<f64>,
    pub total_cost: Option<f64>,
    pub social_cost: Option<f64>,
    /// Accepted multiplier updates and total phase solves.
    pub k_accepted: usize,
    pub phases_total: usize,
    pub iterations: usize,
}

/// One entry of the feasibility audit report.
#[derive(Debug, Clone)]
pub struct AuditEntry {
    pub constraint: String,
    pub violation: f64,
}

/// Stepsizing parameter: alpha(k) = 1 - 1/(M * k^(1 - 1/k^r)).
/// At k = 1 the inner exponent collapses and alpha = 1 - 1/M.
pub fn update_alpha(k: usize, m: f64, r: f64) -> f64 {
    debug_assert!(k >= 1 && m > 1.0 && r > 0.0);
    let kf = k as f64;
    1.0 - 1.0 / (m * kf.powf(1.0 - kf.powf(-r)))
}

/// Contraction stepsize update; the identity
/// `s_new * norm_new = alpha * s_prev * norm_prev` holds to rounding.
pub fn update_stepsize(s_prev: f64, alpha: f64, norm_prev: f64, norm_new: f64) -> f64 {
    debug_assert!(norm_new > 0.0);
    alpha * s_prev * norm_prev / norm_new
}

/// Subgradient step on every multiplier block; flexible-penalization
/// multipliers are projected onto the nonnegative orthant.
pub fn step_multipliers(duals: &MultiplierState, residual: &ResidualVector, s: f64) -> MultiplierState {
    let mut next = duals.clone();
    next.s = s;
    for t in 0..residual.balance_p.nt() {
        for b in 0..residual.balance_p.n() {
            next.lambda_p.set(t, b, duals.lambda_p.get(t, b) + s * residual.balance_p.get(t, b));
            next.lambda_q.set(t, b, duals.lambda_q.get(t, b) + s * residual.balance_q.get(t, b));
            let lp_pen = duals.lambda_pen.get(t, b) + s * residual.pen.get(t, b);
            next.lambda_pen.set(t, b, lp_pen.max(0.0));
        }
        for j in 0..residual.delta_p.n() {
            next.psi_p.set(t, j, duals.psi_p.get(t, j) + s * residual.delta_p.get(t, j));
            next.psi_q.set(t, j, duals.psi_q.get(t, j) + s * residual.delta_q.get(t, j));
        }
    }
    next
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyPhase {
    Growing,
    Shrinking,
}

/// Geometric penalty schedule. The coordinator stops growing `c` for good
/// once the first feasible point is found; `c_p` resumes growing whenever
/// the proximal terms exceed their tolerance.
pub fn update_penalty(c: f64, phase: PenaltyPhase, beta: f64) -> f64 {
    debug_assert!(beta > 1.0);
    match phase {
        PenaltyPhase::Growing => c * beta,
        PenaltyPhase::Shrinking => c / beta,
    }
}

/// Audit a point against the original nonlinear constraints. Every
/// violation is measured against `eps * (1 + |rhs|)`. Returns the verdict
/// and the offending constraints sorted worst-first.
pub fn feasibility_audit(case: &GridCase, point: &OperatingPoint, eps: f64) -> (bool, Vec<AuditEntry>) {
    let view = match CaseView::new(case, None) {
        Ok(v) => v,
        Err(e) => return (false, vec![AuditEntry { constraint: format!("view: {e}"), violation: f64::INFINITY }]),
    };
    let mut out: Vec<AuditEntry> = Vec::new();
    let mut check = |violation: f64, scale: f64, label: String| {
        if violation > eps * (1.0 + scale.abs()) {
            out.push(AuditEntry { constraint: label, violation });
        }
    };
    let nt = view.nt;
    let case_units = &case.tso_units;

    for t in 0..nt {
        // generation boxes and ramp rates against the committed pattern
        for (u, unit) in case_units.iter().enumerate() {
            let x = point.commit.get(t, u);
            let gp = point.gen_p.get(t, u);
            let gq = point.gen_q.get(t, u);
            check(unit.p_min * x - gp, unit.p_min, format!("unit {} min p t {t}", unit.id));
            check(gp - unit.p_max * x, unit.p_max, format!("unit {} max p t {t}", unit.id));
            check(unit.q_min * x - gq, unit.q_min, format!("unit {} min q t {t}", unit.id));
            check(gq - unit.q_max * x, unit.q_max, format!("unit {} max q t {t}", unit.id));
            let (x_prev, gp_prev, gq_prev) = if t == 0 {
                (if unit.initial_commit { 1.0 } else { 0.0 }, unit.initial_p, unit.initial_q)
            } else {
                (point.commit.get(t - 1, u), point.gen_p.get(t - 1, u), point.gen_q.get(t - 1, u))
            };
            let up_p = unit.p_min + 0.5 * unit.ramp_p;
            let up_q = unit.q_min + 0.5 * unit.ramp_q;
            check(
                gp - gp_prev - unit.ramp_p * x_prev - up_p * (x - x_prev),
                unit.ramp_p,
                format!("unit {} ramp up p t {t}", unit.id),
            );
            check(
                gp_prev - gp - unit.ramp_p * x - up_p * (x_prev - x),
                unit.ramp_p,
                format!("unit {} ramp down p t {t}", unit.id),
            );
            check(
                gq - gq_prev - unit.ramp_q * x_prev - up_q * (x - x_prev),
                unit.ramp_q,
                format!("unit {} ramp up q t {t}", unit.id),
            );
            check(
                gq_prev - gq - unit.ramp_q * x - up_q * (x_prev - x),
                unit.ramp_q,
                format!("unit {} ramp down q t {t}", unit.id),
            );
        }
        // nodal balances with the point's flows
        for b in 0..case.tso_buses.len() {
            let (bp, bq) = crate::subproblems::balance_at(&view, point, t, b);
            let scale = case.tso_buses[b].load_p[t];
            check(bp.abs(), scale, format!("bus {} balance p t {t}", case.tso_buses[b].id));
            check(bq.abs(), case.tso_buses[b].load_q[t], format!("bus {} balance q t {t}", case.tso_buses[b].id));
        }
        // true bilinear flows vs the stored linearized flows, and MVA caps
        for (l, lv) in view.lines.iter().enumerate() {
            let vs = (point.v_re.get(t, lv.from_pos), point.v_im.get(t, lv.from_pos));
            let vr = (point.v_re.get(t, lv.to_pos), point.v_im.get(t, lv.to_pos));
            let (tp, tq) = true_flow(lv.g_mw, lv.b_mw, vs, vr);
            let id = case.tso_lines[l].id;
            check((point.flow_p.get(t, l) - tp).abs(), tp, format!("AC flow mismatch line {id} p t {t}"));
            check((point.flow_q.get(t, l) - tq).abs(), tq, format!("AC flow mismatch line {id} q t {t}"));
            let mva = (tp * tp + tq * tq).sqrt();
            check(mva - lv.limit, lv.limit, format!("line {id} mva cap t {t}"));
        }
        // voltage magnitude box
        for (b, bus) in case.tso_buses.iter().enumerate() {
            let vm = (point.v_re.get(t, b).powi(2) + point.v_im.get(t, b).powi(2)).sqrt();
            check(bus.v_min - vm, bus.v_min, format!("bus {} voltage floor t {t}", bus.id));
            check(vm - bus.v_max, bus.v_max, format!("bus {} voltage ceiling t {t}", bus.id));
        }
        // interface equality and both PQ limits
        for (j, d) in case.dsos.iter().enumerate() {
            let dp = point.pd_p.get(t, j) - point.pt_p.get(t, j);
            let dq = point.pd_q.get(t, j) - point.pt_q.get(t, j);
            check(dp.abs(), point.pt_p.get(t, j), format!("dso {} interface p t {t}", d.id));
            check(dq.abs(), point.pt_q.get(t, j), format!("dso {} interface q t {t}", d.id));
            let nt_side = (point.pt_p.get(t, j).powi(2) + point.pt_q.get(t, j).powi(2)).sqrt();
            check(nt_side - d.pq_limit_tso, d.pq_limit_tso, format!("dso {} pq cap tso t {t}", d.id));
            let nd_side = (point.pd_p.get(t, j).powi(2) + point.pd_q.get(t, j).powi(2)).sqrt();
            check(nd_side - d.pq_limit_dso, d.pq_limit_dso, format!("dso {} pq cap dso t {t}", d.id));
        }
        // feeder internals
        for (j, d) in case.dsos.iter().enumerate() {
            let dv = &view.dsos[j];
            let dp = &point.dso[j];
            for (u, unit) in d.units.iter().enumerate() {
                check(unit.p_min - dp.gen_p.get(t, u), unit.p_min, format!("dso {} unit {} min p t {t}", d.id, unit.id));
                check(dp.gen_p.get(t, u) - unit.p_max, unit.p_max, format!("dso {} unit {} max p t {t}", d.id, unit.id));
                check(unit.q_min - dp.gen_q.get(t, u), unit.q_min, format!("dso {} unit {} min q t {t}", d.id, unit.id));
                check(dp.gen_q.get(t, u) - unit.q_max, unit.q_max, format!("dso {} unit {} max q t {t}", d.id, unit.id));
            }
            for (b, bus) in d.buses.iter().enumerate() {
                let v = dp.v2.get(t, b);
                check(bus.v2_min - v, bus.v2_min, format!("dso {} bus {} v2 floor t {t}", d.id, bus.id));
                check(v - bus.v2_max, bus.v2_max, format!("dso {} bus {} v2 ceiling t {t}", d.id, bus.id));
            }
            for (l, lv) in dv.lines.iter().enumerate() {
                let id = d.lines[l].id;
                let fp = dp.flow_p.get(t, l);
                let fq = dp.flow_q.get(t, l);
                let a = dp.a2.get(t, l);
                let vfrom = dp.v2.get(t, lv.from_pos);
                check(fp * fp + fq * fq - vfrom * a, vfrom * a, format!("dso {} cone line {id} t {t}", d.id));
                let drop = dp.v2.get(t, lv.to_pos) - vfrom
                    - 2.0 * (lv.r_s * fp + lv.x_s * fq)
                    + a * (lv.r_s * lv.r_s + lv.x_s * lv.x_s);
                check(drop.abs(), vfrom, format!("dso {} voltage drop line {id} t {t}", d.id));
                let s2 = lv.s_limit * lv.s_limit;
                check(fp * fp + fq * fq - s2, s2, format!("dso {} sending cap line {id} t {t}", d.id));
                let rp = fp - a * lv.r_s;
                let rq = fq - a * lv.x_s;
                check(rp * rp + rq * rq - s2, s2, format!("dso {} receiving cap line {id} t {t}", d.id));
            }
            // feeder balances, verbatim orientation
            for (b, bus) in d.buses.iter().enumerate() {
                for is_p in [true, false] {
                    let mut acc = if is_p { bus.load_p[t] } else { bus.load_q[t] };
                    for &l in &dv.lines_out[b] {
                        let lv = &dv.lines[l];
                        acc += if is_p { dp.flow_p.get(t, l) } else { dp.flow_q.get(t, l) };
                        acc += dp.v2.get(t, b) * if is_p { lv.g_sh_mw } else { lv.b_sh_mw };
                    }
                    for &l in &dv.lines_in[b] {
                        let lv = &dv.lines[l];
                        let f = if is_p { dp.flow_p.get(t, l) } else { dp.flow_q.get(t, l) };
                        let loss = dp.a2.get(t, l) * if is_p { lv.r_s } else { lv.x_s };
                        acc -= f - loss;
                    }
                    for &u in &dv.units_at[b] {
                        acc -= if is_p { dp.gen_p.get(t, u) } else { dp.gen_q.get(t, u) };
                    }
                    if b == dv.head {
                        acc += if is_p { point.pd_p.get(t, j) } else { point.pd_q.get(t, j) };
                    }
                    let kind = if is_p { "p" } else { "q" };
                    check(acc.abs(), if is_p { bus.load_p[t] } else { bus.load_q[t] },
                        format!("dso {} bus {} balance {kind} t {t}", d.id, bus.id));
                }
            }
        }
    }
    out.sort_by(|a, b| b.violation.total_cmp(&a.violation));
    (out.is_empty(), out)
}

// ---------------------------------------------------------------------------

struct LoopState<'a> {
    view: &'a CaseView<'a>,
    config: &'a RunConfig,
    duals: MultiplierState,
    /// Latest accepted combined point; TSO slices double as anchors.
    point: OperatingPoint,
    /// Previous accepted points per side for the surrogate conditions.
    prev_tso: OperatingPoint,
    prev_dso: OperatingPoint,
    norm_prev: f64,
    latest_alpha: f64,
    first_feasible: bool,
    c_shrunk: bool,
    k: usize,
    phases: usize,
    trace: Vec<TraceRow>,
    prices: Vec<PriceRow>,
    started: Instant,
    warm: Vec<Option<lp::BasisSnapshot>>,
    dso_fail_streak: usize,
    tso_stall_streak: usize,
    forced_steps: usize,
    best: Option<(f64, OperatingPoint)>,
    best_costs: Option<(f64, Vec<f64>, f64, f64)>,
    last_prox: f64,
}

impl<'a> LoopState<'a> {
    fn wall_ms(&self) -> u64 {
        self.started.elapsed().as_millis() as u64
    }

    fn push_trace(&mut self, phase: Phase, residual_norm2: f64, surrogate: f64) {
        let iter = self.trace.len() + 1;
        self.trace.push(TraceRow {
            iter,
            phase,
            s: self.duals.s,
            alpha: self.latest_alpha,
            c: self.duals.c,
            c_p: self.duals.c_p,
            residual_norm2,
            proximal_norm1: self.last_prox,
            surrogate_value: surrogate,
            feasible_cost_total: self.best_costs.as_ref().map(|(t, d, _, _)| t + d.iter().sum::<f64>()),
            wall_ms: self.wall_ms(),
        });
    }

    fn snapshot_prices(&mut self, outer: usize) {
        for (j, d) in self.view.case.dsos.iter().enumerate() {
            let root = self.view.root_pos[j];
            // first period is the representative price trajectory
            self.prices.push(PriceRow {
                iter: outer,
                dso: d.id,
                root_bus: d.root_bus,
                price_p: self.duals.lambda_p.get(0, root) + self.duals.psi_p.get(0, j),
                price_q: self.duals.lambda_q.get(0, root) + self.duals.psi_q.get(0, j),
            });
        }
    }
}

/// Run the full coordination (Algorithm 1 shape): initialize multipliers
/// and penalties, then alternate transmission and feeder phases until the
/// stopping criteria hold.
pub fn run(case: &GridCase, config: &RunConfig) -> Result<RunResult, CoordError> {
    let findings = crate::model::validate_case(case);
    if !findings.is_empty() {
        return Err(CoordError::InvalidCase(findings));
    }
    let view = CaseView::new(case, config.zones)?;
    run_on_view(&view, config, true)
}

fn run_on_view(view: &CaseView, config: &RunConfig, with_dsos: bool) -> Result<RunResult, CoordError> {
    let case = view.case;
    let params = &case.params;
    let eps = config.eps.unwrap_or(params.eps);
    let eps_p = config.eps_p.unwrap_or(params.eps_p);
    let max_iter = config.max_iter.unwrap_or(params.max_iter);
    let time_limit = config.time_limit.unwrap_or(params.time_limit);
    let lambda_init = config.lambda_init.unwrap_or(params.lambda_init);

    let point = OperatingPoint::flat_start(case);
    let duals = MultiplierState::init(case, view, lambda_init);
    let norm_prev = {
        let r = assemble_residual(view, &point);
        r.norm2()
    };
    let mut st = LoopState {
        view,
        config,
        duals,
        prev_tso: point.clone(),
        prev_dso: point.clone(),
        point,
        norm_prev,
        latest_alpha: 0.0,
        first_feasible: false,
        c_shrunk: false,
        k: 0,
        phases: 0,
        trace: Vec::new(),
        prices: Vec::new(),
        started: Instant::now(),
        warm: vec![None; view.nz],
        dso_fail_streak: 0,
        tso_stall_streak: 0,
        forced_steps: 0,
        best: None,
        best_costs: None,
        last_prox: 0.0,
    };

    let termination;
    let mut outer = 0usize;
    loop {
        outer += 1;
        if outer > max_iter {
            termination = Termination::MaxIter;
            break;
        }
        if st.started.elapsed().as_secs_f64() > time_limit {
            termination = Termination::TimeLimit;
            break;
        }

        // ----- transmission phase -----
        let tso_residual = tso_phase(&mut st, outer)?;

        // ----- feeder phase -----
        let r_latest = if with_dsos && !case.dsos.is_empty() {
            dso_phase(&mut st, outer)?
        } else {
            tso_residual
        };

        if outer % 10 == 0 || outer == 1 {
            st.snapshot_prices(outer);
        }
        log::info!(
            "iter {outer}: |R| {:.3e} (bal {:.3e} delta {:.3e} pen+ {:.3e}) s {:.3e} c {:.4} c_p {:.3e} prox {:.3e}",
            r_latest.violation_norm2(),
            [&r_latest.balance_p, &r_latest.balance_q].iter().flat_map(|g| g.values()).map(|v| v * v).sum::<f64>().sqrt(),
            [&r_latest.delta_p, &r_latest.delta_q].iter().flat_map(|g| g.values()).map(|v| v * v).sum::<f64>().sqrt(),
            r_latest.max_pen_violation(),
            st.duals.s,
            st.duals.c,
            st.duals.c_p,
            st.last_prox
        );

        // ----- epsilon branch: feasibility work -----
        let resid_ok = r_latest.violation_norm2() <= eps && r_latest.max_pen_violation() <= eps;
        if resid_ok {
            if st.last_prox <= eps_p {
                let (feasible, report) = feasibility_audit(case, &st.point, eps);
                if feasible {
                    let stop = st.c_shrunk; // a prior shrink completes the stopping rule
                    let mut accepted = st.point.clone();
                    accepted.feasible = true;
                    let social = social_cost(view, &accepted);
                    let tso_c = tso_objective(view, &accepted);
                    let dso_c: Vec<f64> = (0..case.dsos.len())
                        .map(|j| dso_objective(view, &accepted, &st.duals, j))
                        .collect();
                    let total = tso_c + dso_c.iter().sum::<f64>();
                    if st.best.as_ref().map_or(true, |(s, _)| social < *s) {
                        st.best = Some((social, accepted));
                        st.best_costs = Some((tso_c, dso_c, total, social));
                    }
                    st.first_feasible = true;
                    st.duals.c = update_penalty(st.duals.c, PenaltyPhase::Shrinking, params.beta);
                    st.duals.c_p = update_penalty(st.duals.c_p, PenaltyPhase::Shrinking, params.beta_p);
                    st.c_shrunk = true;
                    let surrogate = eval_surrogate(view, &st.point, &st.duals, Side::Tso);
                    st.push_trace(Phase::Feasibility, r_latest.violation_norm2(), surrogate);
                    if stop {
                        termination = Termination::Converged;
                        break;
                    }
                } else {
                    log::debug!(
                        "audit rejected point: worst {} ({:.3e})",
                        report.first().map(|e| e.constraint.as_str()).unwrap_or("none"),
                        report.first().map(|e| e.violation).unwrap_or(0.0)
                    );
                    st.duals.c_p =
                        update_penalty(st.duals.c_p, PenaltyPhase::Growing, params.beta_p);
                }
            } else {
                st.duals.c_p = update_penalty(st.duals.c_p, PenaltyPhase::Growing, params.beta_p);
            }
        }
    }

    st.snapshot_prices(outer);
    let (tso_cost, dso_costs, total_cost, social) = match &st.best_costs {
        Some((t, d, tot, s)) => (Some(*t), d.clone(), Some(*tot), Some(*s)),
        None => (None, Vec::new(), None, None),
    };
    Ok(RunResult {
        best: st.best.map(|(_, p)| p),
        last: st.point,
        final_duals: st.duals,
        trace: st.trace,
        prices: st.prices,
        termination,
        tso_cost,
        dso_costs,
        total_cost,
        social_cost: social,
        k_accepted: st.k,
        phases_total: st.phases,
        iterations: outer.min(max_iter),
    })
}

/// One transmission phase: sweep the zones (retrying with refreshed
/// anchors and a rotated order when the surrogate condition fails), then
/// update multipliers and grow the penalty while infeasible.
fn tso_phase(st: &mut LoopState, outer: usize) -> Result<ResidualVector, CoordError> {
    let view = st.view;
    let params = &view.case.params;

    let l_old = eval_surrogate(view, &st.prev_tso, &st.duals, Side::Tso);

    // One sweep per phase, always anchored at the latest accepted
    // iterate. Re-solving against scratch anchors looks appealing when
    // the acceptance test fails, but any candidate taken from such a
    // retry carries flows linearized around a discarded point, and the
    // loop can settle into a cycle whose iterates never satisfy their own
    // linearization. Anchoring strictly at adopted iterates keeps the
    // fixed points of the sweep exactly the points where the linearized
    // and true flows coincide.
    let mut candidate = st.point.clone();
    let order: Vec<usize> = (0..view.nz).map(|i| (i + outer - 1) % view.nz).collect();
    if st.config.parallel_zones {
        // end-of-sweep anchor propagation: every zone linearizes at the
        // same anchors, solves independently, results merge at a barrier
        let anchor = st.point.clone();
        let duals = st.duals.clone();
        let exchange = &st.point;
        let config = st.config;
        let results = map_maybe_parallel(order, true, |z| {
            solve_zone(view, z, &anchor, &duals, exchange, config, None)
        });
        for res in results {
            let (zm, sol, _basis) = res.map_err(|e| annotate(e, outer))?;
            zm.extract_into(&sol, &mut candidate);
        }
    } else {
        // immediate propagation: later zones in the sweep see earlier
        // zones' accepted values as anchors
        let mut anchor = st.point.clone();
        for &z in &order {
            let warm = st.warm[z].take();
            let (zm, sol, basis) = solve_zone(view, z, &anchor, &st.duals, &st.point, st.config, warm)
                .map_err(|e| annotate(e, outer))?;
            zm.extract_into(&sol, &mut candidate);
            zm.extract_into(&sol, &mut anchor);
            st.warm[z] = basis;
        }
    }
    st.phases += 1;
    let l_new = eval_surrogate(view, &candidate, &st.duals, Side::Tso);
    let decreased = check_surrogate_condition(l_new, l_old);

    // The candidate always becomes the latest iterate (anchors move with
    // the most recent values); non-decreases adopt without touching the
    // duals.
    st.last_prox = proximal_norm1(&candidate, &st.point);
    st.prev_tso = candidate.clone();
    st.point = candidate;
    let mut forced = false;
    if decreased {
        st.tso_stall_streak = 0;
    } else {
        st.tso_stall_streak += 1;
        // A run of rejected phases means the primal sits at a fixed point
        // of the current penalties. Forcing the multiplier step keeps the
        // flexible penalization alive (the soft-voltage multipliers are
        // usually the only residual entries left, and they must keep
        // growing to push trapped voltages out); the stepsize rule's own
        // contraction bounds the total travel. A persistent stall still
        // halves the stepsize once in a while as a runaway guard.
        if st.tso_stall_streak >= 5 {
            forced = true;
            st.tso_stall_streak = 0;
            st.forced_steps += 1;
            if st.forced_steps % 40 == 0 {
                st.duals.s *= 0.5;
            }
            log::debug!("iter {outer}: forced transmission step after stalls");
        }
    }

    let residual = assemble_residual(view, &st.point);
    let norm_new = residual.norm2();
    log::debug!(
        "iter {outer}: tso phase decreased={decreased} forced={forced} stall={} l_new={l_new:.4} l_old={l_old:.4} norm={norm_new:.3e}",
        st.tso_stall_streak
    );
    if (decreased || forced) && norm_new > 0.0 {
        st.k += 1;
        st.latest_alpha = update_alpha(st.k, params.m, params.r);
        let s = update_stepsize(st.duals.s, st.latest_alpha, st.norm_prev, norm_new);
        st.duals = step_multipliers(&st.duals, &residual, s);
        st.norm_prev = norm_new;
        if !st.first_feasible {
            st.duals.c = update_penalty(st.duals.c, PenaltyPhase::Growing, params.beta);
        }
    } else if norm_new == 0.0 && st.last_prox > st.config.eps_p.unwrap_or(params.eps_p) {
        st.duals.c_p = update_penalty(st.duals.c_p, PenaltyPhase::Growing, params.beta_p);
    }
    st.push_trace(Phase::Tso, norm_new, l_new);
    Ok(residual)
}

type ZoneSolve = (crate::subproblems::ZonalModel, lp::MilpSolution, Option<lp::BasisSnapshot>);

fn solve_zone(
    view: &CaseView,
    zone: usize,
    anchor: &OperatingPoint,
    duals: &MultiplierState,
    exchange_point: &OperatingPoint,
    config: &RunConfig,
    warm: Option<lp::BasisSnapshot>,
) -> Result<ZoneSolve, ZoneError> {
    let opts = BuildOpts { include_interface: !view.case.dsos.is_empty() };
    let zm = build_tso_zonal(view, zone, anchor, duals, (&exchange_point.pd_p, &exchange_point.pd_q), &opts)
        .map_err(|e| ZoneError { zone, kind: ZoneErrorKind::Sub(e) })?;
    let (sol, basis) = match &config.solver {
        lp::Solver::Embedded => {
            let (sol, basis) =
                crate::lp::solve_milp_warm(&zm.model, config.milp_gap, config.milp_node_limit, warm.as_ref())
                    .map_err(|e| ZoneError { zone, kind: ZoneErrorKind::Lp(e) })?;
            (sol, Some(basis))
        }
        solver => (
            solver
                .solve_milp(&zm.model, config.milp_gap, config.milp_node_limit)
                .map_err(|e| ZoneError { zone, kind: ZoneErrorKind::Lp(e) })?,
            None,
        ),
    };
    if !matches!(sol.status, Status::Optimal | Status::IterationLimit) {
        return Err(ZoneError { zone, kind: ZoneErrorKind::Status(sol.status) });
    }
    if cfg!(debug_assertions) {
        for (i, row) in zm.model.rows.iter().enumerate() {
            let act = zm.model.row_activity(i, &sol.primal);
            let viol = match row.sense {
                crate::lp::Sense::Le => act - row.rhs,
                crate::lp::Sense::Ge => row.rhs - act,
                crate::lp::Sense::Eq => (act - row.rhs).abs(),
            };
            if viol > 1e-5 {
                log::warn!("zone {zone}: row {i} violated by {viol:.3e} at reported optimum");
            }
        }
    }
    Ok((zm, sol, basis))
}

struct ZoneError {
    zone: usize,
    kind: ZoneErrorKind,
}

enum ZoneErrorKind {
    Sub(SubproblemError),
    Lp(lp::LpError),
    Status(Status),
}

fn annotate(e: ZoneError, iter: usize) -> CoordError {
    match e.kind {
        ZoneErrorKind::Sub(source) => CoordError::Subproblem { iter, source },
        ZoneErrorKind::Lp(source) => CoordError::Milp { iter, zone: e.zone, source },
        ZoneErrorKind::Status(status) => CoordError::ZoneStatus { iter, zone: e.zone, status },
    }
}

/// One feeder phase: all feeders solve against the accepted transmission
/// exchange; acceptance is judged on the summed surrogate values.
fn dso_phase(st: &mut LoopState, outer: usize) -> Result<ResidualVector, CoordError> {
    let view = st.view;
    let params = &view.case.params;
    let nd = view.case.dsos.len();

    let l_old: f64 = (0..nd)
        .map(|j| {
            // previous accepted feeder point, re-priced at current duals,
            // against the current transmission exchange
            let mut probe = st.prev_dso.clone();
            probe.pt_p = st.point.pt_p.clone();
            probe.pt_q = st.point.pt_q.clone();
            eval_surrogate(view, &probe, &st.duals, Side::Dso(j))
        })
        .sum();

    let jobs: Vec<usize> = (0..nd).collect();
    let duals = st.duals.clone();
    let point_ref = &st.point;
    let results = map_maybe_parallel(jobs, st.config.parallel_dsos, |j| {
        let obj = DsoObjectives::from_duals(view, j, &duals, point_ref);
        let dm = build_dso(view, j, &obj);
        solve_dso(&dm, false).map(|s| (j, s))
    });
    let mut candidate = st.point.clone();
    for res in results {
        let (j, solved) = res.map_err(|e| CoordError::Subproblem { iter: outer, source: e })?;
        solved.apply_to(&mut candidate, j);
    }
    st.phases += 1;

    let l_new: f64 = (0..nd).map(|j| eval_surrogate(view, &candidate, &st.duals, Side::Dso(j))).sum();
    // The feeder solution always becomes the latest iterate (the next
    // transmission build runs against the most recent exchange values);
    // the surrogate condition only gates the multiplier update.
    let accept_update = check_surrogate_condition(l_new, l_old);
    if accept_update {
        st.dso_fail_streak = 0;
    } else {
        st.dso_fail_streak += 1;
    }
    st.prev_dso = candidate.clone();
    st.point = candidate;
    let residual = assemble_residual(view, &st.point);
    let norm_new = residual.norm2();
    if accept_update && norm_new > 0.0 {
        st.k += 1;
        st.latest_alpha = update_alpha(st.k, params.m, params.r);
        let s = update_stepsize(st.duals.s, st.latest_alpha, st.norm_prev, norm_new);
        st.duals = step_multipliers(&st.duals, &residual, s);
        st.norm_prev = norm_new;
    }
    st.push_trace(Phase::Dso, norm_new, l_new);
    Ok(residual)
}

/// Baseline: the transmission system alone (no interface, residual
/// without the mismatch block) plus every feeder in standalone
/// self-dispatch. Returns combined costs for comparison.
pub fn run_uncoordinated(case: &GridCase, config: &RunConfig) -> Result<RunResult, CoordError> {
    let findings = crate::model::validate_case(case);
    if !findings.is_empty() {
        return Err(CoordError::InvalidCase(findings));
    }
    // transmission side: the same loop on a case with the feeders removed
    let mut tso_case = case.clone();
    tso_case.dsos.clear();
    for b in tso_case.tso_buses.iter_mut() {
        b.is_root = false;
    }
    let tso_view = CaseView::new(&tso_case, config.zones)?;
    let mut result = run_on_view(&tso_view, config, false)?;

    // feeders standalone, in parallel
    let view = CaseView::new(case, config.zones)?;
    let nd = case.dsos.len();
    let jobs: Vec<usize> = (0..nd).collect();
    let solved = map_maybe_parallel(jobs, config.parallel_dsos, |j| {
        let dm = build_dso(&view, j, &DsoObjectives::standalone(view.nt));
        solve_dso(&dm, false).map(|s| (j, s))
    });

    let mut dso_costs = vec![0.0; nd];
    if let Some((_, best)) = result.best.take().map(|p| (0.0, p)) {
        // widen the best point back to the full case shape
        let mut full = OperatingPoint::flat_start(case);
        full.commit = best.commit;
        full.gen_p = best.gen_p;
        full.gen_q = best.gen_q;
        full.v_re = best.v_re;
        full.v_im = best.v_im;
        full.flow_p = best.flow_p;
        full.flow_q = best.flow_q;
        full.v_pen = best.v_pen;
        full.feasible = best.feasible;
        for res in solved {
            let (j, s) = res.map_err(|e| CoordError::Subproblem { iter: 0, source: e })?;
            s.apply_to(&mut full, j);
            dso_costs[j] = dso_generation_cost(&view, &full, j);
        }
        let social = social_cost(&view, &full);
        result.social_cost = Some(social);
        result.total_cost = result.tso_cost.map(|t| t + dso_costs.iter().sum::<f64>());
        result.dso_costs = dso_costs;
        result.best = Some(full);
    } else {
        for res in solved {
            let (j, s) = res.map_err(|e| CoordError::Subproblem { iter: 0, source: e })?;
            let mut full = OperatingPoint::flat_start(case);
            s.apply_to(&mut full, j);
            dso_costs[j] = dso_generation_cost(&view, &full, j);
        }
        result.dso_costs = dso_costs;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_at_one_is_one_minus_inv_m() {
        for m in [2.0, 10.0, 30.0] {
            for r in [0.05, 0.5, 2.0] {
                let a = update_alpha(1, m, r);
                assert_eq!(a, 1.0 - 1.0 / m, "m {m} r {r}");
            }
        }
        assert_eq!(update_alpha(1, 2.0, 1.0), 0.5);
    }

    #[test]
    fn alpha_increases_and_stays_in_unit_interval() {
        let mut prev = 0.0;
        for k in 1..=10_000 {
            let a = update_alpha(k, 30.0, 0.05);
            assert!(a > 0.0 && a < 1.0, "k {k}: {a}");
            assert!(a >= prev, "alpha must be nondecreasing");
            prev = a;
        }
    }

    #[test]
    fn stepsize_identity() {
        let s = update_stepsize(0.01, 0.5, 2.0, 1.0);
        assert!((s - 0.01).abs() < 1e-15);
        let s2 = update_stepsize(0.01, 0.5, 1.0, 1.0);
        assert!((s2 - 0.005).abs() < 1e-15);
        // constant residual norm: s_k = s_0 * prod alpha_j
        let mut s = 0.01;
        let mut expected = 0.01;
        for k in 1..=5 {
            let a = update_alpha(k, 2.0, 1.0);
            s = update_stepsize(s, a, 3.0, 3.0);
            expected *= a;
        }
        assert!((s - expected).abs() <= 1e-15 * expected.abs());
    }

    #[test]
    fn multiplier_step_and_projection() {
        use crate::subproblems::Grid2;
        let mut duals = MultiplierState {
            lambda_p: Grid2::zeros(1, 2),
            lambda_q: Grid2::zeros(1, 2),
            psi_p: Grid2::zeros(1, 1),
            psi_q: Grid2::zeros(1, 1),
            lambda_pen: Grid2::zeros(1, 2),
            s: 0.01,
            c: 10.0,
            c_p: 1e-4,
            k: 0,
        };
        duals.lambda_pen.set(0, 1, 0.005);
        let mut r = ResidualVector {
            balance_p: Grid2::zeros(1, 2),
            balance_q: Grid2::zeros(1, 2),
            delta_p: Grid2::zeros(1, 1),
            delta_q: Grid2::zeros(1, 1),
            pen: Grid2::zeros(1, 2),
        };
        r.balance_p.set(0, 0, 2.0);
        r.balance_p.set(0, 1, -1.0);
        r.pen.set(0, 1, -1.0);
        let next = step_multipliers(&duals, &r, 0.01);
        assert_eq!(next.lambda_p.get(0, 0), 0.02);
        assert_eq!(next.lambda_p.get(0, 1), -0.01);
        assert_eq!(next.lambda_pen.get(0, 1), 0.0, "projected to zero");
        // zero residual leaves everything unchanged
        let zero = ResidualVector {
            balance_p: Grid2::zeros(1, 2),
            balance_q: Grid2::zeros(1, 2),
            delta_p: Grid2::zeros(1, 1),
            delta_q: Grid2::zeros(1, 1),
            pen: Grid2::zeros(1, 2),
        };
        let same = step_multipliers(&next, &zero, 0.5);
        assert_eq!(same.lambda_p, next.lambda_p);
        assert_eq!(same.psi_p, next.psi_p);
    }

    #[test]
    fn penalty_schedule() {
        let c = update_penalty(10.0, PenaltyPhase::Growing, 1.025);
        assert!((c - 10.25).abs() < 1e-12);
        assert!((update_penalty(10.25, PenaltyPhase::Shrinking, 1.025) - 10.0).abs() < 1e-12);
        let cp = update_penalty(1e-4, PenaltyPhase::Growing, 1.01);
        assert!((cp - 1.01e-4).abs() < 1e-18);
    }

    #[test]
    fn audit_rejects_cold_start_on_loaded_system() {
        let case = crate::subproblems::tests::single_bus_case();
        let point = OperatingPoint::flat_start(&case);
        let (ok, report) = feasibility_audit(&case, &point, 1e-6);
        assert!(!ok);
        assert!(report.iter().any(|e| e.constraint.contains("balance")));
    }

    #[test]
    fn audit_flags_flow_mismatch() {
        let case = crate::subproblems::tso::tests::four_bus_case(1);
        let view = CaseView::new(&case, None).unwrap();
        let mut point = OperatingPoint::flat_start(&case);
        // make flows exact, then break one by 0.5 MW
        for (l, lv) in view.lines.iter().enumerate() {
            let vs = (point.v_re.get(0, lv.from_pos), point.v_im.get(0, lv.from_pos));
            let vr = (point.v_re.get(0, lv.to_pos), point.v_im.get(0, lv.to_pos));
            let (tp, tq) = true_flow(lv.g_mw, lv.b_mw, vs, vr);
            point.flow_p.set(0, l, tp);
            point.flow_q.set(0, l, tq);
        }
        point.flow_p.set(0, 0, point.flow_p.get(0, 0) + 0.5);
        let (ok, report) = feasibility_audit(&case, &point, 1e-6);
        assert!(!ok);
        assert!(
            report.iter().any(|e| e.constraint.contains("AC flow mismatch line 1")),
            "report: {report:?}"
        );
    }
}
