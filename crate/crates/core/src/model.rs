//! Domain types for a TSO-DSO planning instance, validation, and derived
//! electrical quantities.
//!
//! Conventions: dispatch quantities (loads, generation, flows, interface
//! exchange) are MW / MVAr; electrical line data is per-unit on the case
//! base power. Transmission voltages are rectangular pairs in p.u.;
//! distribution voltages are squared magnitudes (the branch-flow model's
//! `v`), kept as a distinct representation so the two never mix silently.
//! Interface exchange is positive when power flows from the DSO to the
//! TSO.

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("zero-impedance line: r^2 + x^2 must be positive")]
    ZeroImpedance,
    #[error("requested {k} zones for {n} buses")]
    ZoneCount { k: usize, n: usize },
    #[error("transmission graph is not connected (bus {0} unreachable)")]
    Disconnected(usize),
}

/// A formatted invariant violation from [`validate_case`]; callers treat
/// any non-empty list as fatal.
pub type ValidationError = String;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Horizon {
    pub num_periods: usize,
    /// Length of one period in hours.
    pub period_hours: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsoBus {
    pub id: usize,
    pub v_min: f64,
    pub v_max: f64,
    /// MW per period.
    pub load_p: Vec<f64>,
    /// MVAr per period.
    pub load_q: Vec<f64>,
    pub is_root: bool,
    /// Zone label; `None` until assigned explicitly or by [`auto_zone`].
    pub zone: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsoLine {
    pub id: usize,
    pub from: usize,
    pub to: usize,
    /// Series resistance / reactance, p.u.
    pub r: f64,
    pub x: f64,
    /// Coupling conductance / susceptance, p.u. (g = r/(r^2+x^2),
    /// b = -x/(r^2+x^2)).
    pub g: f64,
    pub b: f64,
    /// MVA.
    pub flow_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsoUnit {
    pub id: usize,
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    /// MW per period of ramping headroom.
    pub ramp_p: f64,
    pub ramp_q: f64,
    /// $/MWh and $/MVArh per period.
    pub cost_p: Vec<f64>,
    pub cost_q: Vec<f64>,
    pub initial_commit: bool,
    pub initial_p: f64,
    pub initial_q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsoBus {
    pub id: usize,
    /// Squared voltage bounds, p.u.^2.
    pub v2_min: f64,
    pub v2_max: f64,
    pub load_p: Vec<f64>,
    pub load_q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsoLine {
    pub id: usize,
    /// Sending (parent) bus.
    pub from: usize,
    /// Receiving (child) bus.
    pub to: usize,
    /// Series resistance / reactance, p.u.
    pub r: f64,
    pub x: f64,
    /// Shunt conductance / susceptance, p.u. (zero allowed).
    pub g_shunt: f64,
    pub b_shunt: f64,
    /// Apparent power limit, MVA.
    pub s_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsoUnit {
    pub id: usize,
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub cost_p: Vec<f64>,
    pub cost_q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsoNetwork {
    pub id: usize,
    /// The TSO root bus this feeder hangs off.
    pub root_bus: usize,
    /// The feeder-head bus on the DSO side, where the interface exchange
    /// enters the local balance.
    pub head_bus: usize,
    pub buses: Vec<DsoBus>,
    pub lines: Vec<DsoLine>,
    pub units: Vec<DsoUnit>,
    /// Interface exchange bids, $/MWh and $/MVArh per period.
    pub bid_p: Vec<f64>,
    pub bid_q: Vec<f64>,
    /// Interface apparent-power limits seen from each side, MVA.
    pub pq_limit_tso: f64,
    pub pq_limit_dso: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaInit {
    Zero,
    GenerationCosts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgoParams {
    /// Initial stepsize.
    pub s0: f64,
    /// Initial penalty on relaxed-constraint violations.
    pub c0: f64,
    /// Initial penalty on the proximal terms.
    pub cp0: f64,
    /// Penalty growth factor (> 1).
    pub beta: f64,
    /// Proximal penalty growth factor (> 1).
    pub beta_p: f64,
    /// Stepsize parameter M (> 1).
    pub m: f64,
    /// Stepsize parameter r (> 0).
    pub r: f64,
    /// Residual tolerance.
    pub eps: f64,
    /// Proximal tolerance.
    pub eps_p: f64,
    pub max_iter: usize,
    /// Seconds.
    pub time_limit: f64,
    pub lambda_init: LambdaInit,
}

impl Default for AlgoParams {
    fn default() -> Self {
        AlgoParams {
            s0: 0.01,
            c0: 10.0,
            cp0: 1e-4,
            beta: 1.025,
            beta_p: 1.01,
            m: 30.0,
            r: 0.05,
            eps: 1e-6,
            eps_p: 1e-6,
            max_iter: 1000,
            time_limit: 600.0,
            lambda_init: LambdaInit::Zero,
        }
    }
}

/// Optional warm start shipped with a case: rectangular transmission
/// voltages per bus, applied to every period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct WarmStart {
    pub tso_voltages: Vec<WarmVoltage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmVoltage {
    pub bus: usize,
    pub re: f64,
    pub im: f64,
}

/// Immutable parsed problem instance. Validated once, then safely
/// shareable across concurrent workers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCase {
    pub name: String,
    pub base_mva: f64,
    pub horizon: Horizon,
    pub tso_buses: Vec<TsoBus>,
    pub tso_lines: Vec<TsoLine>,
    pub tso_units: Vec<TsoUnit>,
    pub dsos: Vec<DsoNetwork>,
    pub params: AlgoParams,
    pub warm_start: Option<WarmStart>,
}

impl GridCase {
    pub fn periods(&self) -> usize {
        self.horizon.num_periods
    }

    pub fn bus_position(&self, id: usize) -> Option<usize> {
        self.tso_buses.iter().position(|b| b.id == id)
    }

    /// Number of zones implied by the per-bus labels (0 when unassigned).
    pub fn zone_count(&self) -> usize {
        self.tso_buses.iter().filter_map(|b| b.zone).max().map_or(0, |z| z + 1)
    }

    /// Default zone count when neither the case nor the caller chooses.
    pub fn default_zone_count(&self) -> usize {
        self.tso_buses.len().div_ceil(40).max(1)
    }
}

/// Coupling admittance of a series impedance: g = r/(r^2+x^2),
/// b = -x/(r^2+x^2).
pub fn derive_admittance(r: f64, x: f64) -> Result<(f64, f64), ModelError> {
    let denom = r * r + x * x;
    if denom <= 0.0 || !denom.is_finite() {
        return Err(ModelError::ZeroImpedance);
    }
    Ok((r / denom, -x / denom))
}

/// Inverse of [`derive_admittance`], used by round-trip checks.
pub fn admittance_to_impedance(g: f64, b: f64) -> Result<(f64, f64), ModelError> {
    let denom = g * g + b * b;
    if denom <= 0.0 || !denom.is_finite() {
        return Err(ModelError::ZeroImpedance);
    }
    Ok((g / denom, -b / denom))
}

/// Check every structural invariant of the instance. Pure: identical
/// input yields the identical findings list. Empty means valid.
pub fn validate_case(case: &GridCase) -> Vec<ValidationError> {
    let mut out = Vec::new();
    let t = case.horizon.num_periods;
    if t < 1 {
        out.push("horizon: num_periods must be at least 1".to_string());
    }
    if !(case.horizon.period_hours > 0.0) {
        out.push("horizon: period_hours must be positive".to_string());
    }
    if !(case.base_mva > 0.0) {
        out.push("meta: base_mva must be positive".to_string());
    }

    for b in &case.tso_buses {
        if !(b.v_min > 0.0 && b.v_min < b.v_max) {
            out.push(format!("bus {}: voltage bounds must satisfy 0 < v_min < v_max", b.id));
        }
        if b.load_p.len() != t || b.load_q.len() != t {
            out.push(format!("bus {}: load arrays must have {t} periods", b.id));
        }
        if b.load_p.iter().chain(&b.load_q).any(|v| !v.is_finite()) {
            out.push(format!("bus {}: loads must be finite", b.id));
        }
    }
    // duplicate ids
    for (i, b) in case.tso_buses.iter().enumerate() {
        if case.tso_buses[..i].iter().any(|o| o.id == b.id) {
            out.push(format!("bus {}: duplicate id", b.id));
        }
    }

    for l in &case.tso_lines {
        if l.from == l.to {
            out.push(format!("line {}: from == to", l.id));
        }
        for end in [l.from, l.to] {
            if case.bus_position(end).is_none() {
                out.push(format!("line {}: endpoint bus {} does not exist", l.id, end));
            }
        }
        if !(l.flow_limit > 0.0) {
            out.push(format!("line {}: flow_limit must be positive", l.id));
        }
        match derive_admittance(l.r, l.x) {
            Ok((g, b)) => {
                if (g - l.g).abs() > 1e-9 || (b - l.b).abs() > 1e-9 {
                    out.push(format!(
                        "line {}: (g, b) inconsistent with (r, x) beyond 1e-9",
                        l.id
                    ));
                }
            }
            Err(_) => out.push(format!("line {}: zero impedance", l.id)),
        }
    }

    for u in &case.tso_units {
        if case.bus_position(u.bus).is_none() {
            out.push(format!("unit {}: bus {} does not exist", u.id, u.bus));
        }
        if u.p_min > u.p_max || u.q_min > u.q_max {
            out.push(format!("unit {}: generation bounds crossed", u.id));
        }
        if u.ramp_p < 0.0 || u.ramp_q < 0.0 {
            out.push(format!("unit {}: ramp rates must be nonnegative", u.id));
        }
        if u.cost_p.len() != t || u.cost_q.len() != t {
            out.push(format!("unit {}: cost arrays must have {t} periods", u.id));
        }
        if u.cost_p.iter().chain(&u.cost_q).any(|c| *c < 0.0 || !c.is_finite()) {
            out.push(format!("unit {}: costs must be nonnegative", u.id));
        }
    }

    // root bus <-> DSO pairing
    for b in case.tso_buses.iter().filter(|b| b.is_root) {
        let attached = case.dsos.iter().filter(|d| d.root_bus == b.id).count();
        if attached != 1 {
            out.push(format!("root bus {}: expected exactly one attached dso, found {attached}", b.id));
        }
    }
    for d in &case.dsos {
        match case.bus_position(d.root_bus) {
            None => out.push(format!("dso {}: root bus {} does not exist", d.id, d.root_bus)),
            Some(p) => {
                if !case.tso_buses[p].is_root {
                    out.push(format!("dso {}: bus {} is not marked as a root bus", d.id, d.root_bus));
                }
            }
        }
        validate_dso(d, t, &mut out);
    }

    // zone labels: all assigned or none
    let assigned = case.tso_buses.iter().filter(|b| b.zone.is_some()).count();
    if assigned != 0 && assigned != case.tso_buses.len() {
        for b in case.tso_buses.iter().filter(|b| b.zone.is_none()) {
            out.push(format!("bus {} unassigned", b.id));
        }
    }

    validate_params(&case.params, &mut out);
    out
}

fn validate_dso(d: &DsoNetwork, t: usize, out: &mut Vec<String>) {
    let n = d.buses.len();
    let pos = |id: usize| d.buses.iter().position(|b| b.id == id);
    if pos(d.head_bus).is_none() {
        out.push(format!("dso {}: head bus {} does not exist", d.id, d.head_bus));
        return;
    }
    for b in &d.buses {
        if !(b.v2_min < b.v2_max) {
            out.push(format!("dso {} bus {}: squared voltage bounds crossed", d.id, b.id));
        }
        if b.load_p.len() != t || b.load_q.len() != t {
            out.push(format!("dso {} bus {}: load arrays must have {t} periods", d.id, b.id));
        }
    }
    for u in &d.units {
        if pos(u.bus).is_none() {
            out.push(format!("dso {} unit {}: bus {} does not exist", d.id, u.id, u.bus));
        }
        if u.p_min > u.p_max || u.q_min > u.q_max {
            out.push(format!("dso {} unit {}: generation bounds crossed", d.id, u.id));
        }
        if u.cost_p.len() != t || u.cost_q.len() != t {
            out.push(format!("dso {} unit {}: cost arrays must have {t} periods", d.id, u.id));
        }
    }
    for l in &d.lines {
        if !(l.s_limit > 0.0) {
            out.push(format!("dso {} line {}: s_limit must be positive", d.id, l.id));
        }
        for end in [l.from, l.to] {
            if pos(end).is_none() {
                out.push(format!("dso {} line {}: endpoint bus {} does not exist", d.id, l.id, end));
            }
        }
    }
    if d.bid_p.len() != t || d.bid_q.len() != t {
        out.push(format!("dso {}: bid arrays must have {t} periods", d.id));
    }
    if !(d.pq_limit_tso > 0.0 && d.pq_limit_dso > 0.0) {
        out.push(format!("dso {}: interface pq limits must be positive", d.id));
    }

    // radiality: |lines| = |buses| - 1, connected, and every non-head bus
    // has exactly one parent (its incoming line)
    if d.lines.len() + 1 != n {
        out.push(format!("dso {}: line graph not a tree", d.id));
        return;
    }
    let mut parent_count = vec![0usize; n];
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut ok = true;
    for l in &d.lines {
        let (Some(f), Some(to)) = (pos(l.from), pos(l.to)) else {
            ok = false;
            continue;
        };
        parent_count[to] += 1;
        adj[f].push(to);
        adj[to].push(f);
    }
    if !ok {
        return;
    }
    let head = pos(d.head_bus).unwrap();
    if parent_count[head] != 0 {
        out.push(format!("dso {}: head bus {} must have no parent line", d.id, d.head_bus));
    }
    for (i, b) in d.buses.iter().enumerate() {
        if i != head && parent_count[i] != 1 {
            out.push(format!("dso {} bus {}: expected exactly one parent line", d.id, b.id));
        }
    }
    // connectivity
    let mut seen = vec![false; n];
    let mut stack = vec![head];
    seen[head] = true;
    while let Some(u) = stack.pop() {
        for &w in &adj[u] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    if seen.iter().any(|s| !s) {
        out.push(format!("dso {}: line graph not a tree", d.id));
    }
}

fn validate_params(p: &AlgoParams, out: &mut Vec<String>) {
    let positives = [
        ("algo.s0", p.s0),
        ("algo.c0", p.c0),
        ("algo.cp0", p.cp0),
        ("algo.r", p.r),
        ("algo.eps", p.eps),
        ("algo.eps_p", p.eps_p),
        ("algo.time_limit", p.time_limit),
    ];
    for (name, v) in positives {
        if !(v > 0.0) {
            out.push(format!("{name} must be positive"));
        }
    }
    if !(p.beta > 1.0) {
        out.push("algo.beta must exceed 1".to_string());
    }
    if !(p.beta_p > 1.0) {
        out.push("algo.beta_p must exceed 1".to_string());
    }
    if !(p.m > 1.0) {
        out.push("algo.m must exceed 1".to_string());
    }
    if p.max_iter == 0 {
        out.push("algo.max_iter must be positive".to_string());
    }
}

/// Deterministic partition of the transmission graph into `k` connected,
/// size-balanced zones: BFS growth from the `k` highest-degree buses
/// (ties broken by lowest id), always expanding the currently smallest
/// zone by its lowest-id unclaimed neighbor.
pub fn auto_zone(buses: &[TsoBus], lines: &[TsoLine], k: usize) -> Result<Vec<usize>, ModelError> {
    let n = buses.len();
    if k == 0 || k > n {
        return Err(ModelError::ZoneCount { k, n });
    }
    let pos = |id: usize| buses.iter().position(|b| b.id == id).expect("validated endpoint");
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for l in lines {
        let (f, t) = (pos(l.from), pos(l.to));
        adj[f].push(t);
        adj[t].push(f);
    }
    // seeds: highest degree, ties by lowest bus id
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        adj[b].len().cmp(&adj[a].len()).then_with(|| buses[a].id.cmp(&buses[b].id))
    });
    let mut zone = vec![usize::MAX; n];
    let mut sizes = vec![0usize; k];
    for (z, &seed) in order.iter().take(k).enumerate() {
        zone[seed] = z;
        sizes[z] = 1;
    }
    let mut remaining = n - k;
    while remaining > 0 {
        // zones by (size, index); first that can expand wins
        let mut zorder: Vec<usize> = (0..k).collect();
        zorder.sort_by_key(|&z| (sizes[z], z));
        let mut grew = false;
        for &z in &zorder {
            // lowest-id unclaimed bus adjacent to zone z
            let mut cand: Option<usize> = None;
            for u in 0..n {
                if zone[u] != z {
                    continue;
                }
                for &w in &adj[u] {
                    if zone[w] == usize::MAX
                        && cand.map_or(true, |c| buses[w].id < buses[c].id)
                    {
                        cand = Some(w);
                    }
                }
            }
            if let Some(w) = cand {
                zone[w] = z;
                sizes[z] += 1;
                remaining -= 1;
                grew = true;
                break;
            }
        }
        if !grew {
            let orphan = (0..n).find(|&u| zone[u] == usize::MAX).unwrap();
            return Err(ModelError::Disconnected(buses[orphan].id));
        }
    }
    Ok(zone)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn bus(id: usize, t: usize) -> TsoBus {
        TsoBus {
            id,
            v_min: 0.9,
            v_max: 1.1,
            load_p: vec![0.0; t],
            load_q: vec![0.0; t],
            is_root: false,
            zone: None,
        }
    }

    fn line(id: usize, from: usize, to: usize) -> TsoLine {
        let (g, b) = derive_admittance(0.01, 0.1).unwrap();
        TsoLine { id, from, to, r: 0.01, x: 0.1, g, b, flow_limit: 100.0 }
    }

    #[test]
    fn admittance_examples() {
        let (g, b) = derive_admittance(0.0, 0.1).unwrap();
        assert!(g == 0.0 && (b + 10.0).abs() < 1e-12);
        let (g, b) = derive_admittance(0.1, 0.0).unwrap();
        assert!((g - 10.0).abs() < 1e-12 && b == 0.0);
        let (g, b) = derive_admittance(0.01, 0.1).unwrap();
        assert!((g - 0.990099009900990).abs() < 1e-12);
        assert!((b + 9.90099009900990).abs() < 1e-12);
        assert!(derive_admittance(0.0, 0.0).is_err());
    }

    #[test]
    fn admittance_roundtrip() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let r = rng.gen_range(0.0..0.3);
            let x = rng.gen_range(0.01..0.5);
            let (g, b) = derive_admittance(r, x).unwrap();
            let (r2, x2) = admittance_to_impedance(g, b).unwrap();
            assert!((r - r2).abs() <= 1e-9 && (x - x2).abs() <= 1e-9);
        }
    }

    fn four_bus_case() -> GridCase {
        let t = 1;
        let mut buses: Vec<TsoBus> = (1..=4).map(|id| bus(id, t)).collect();
        buses[1].is_root = true;
        GridCase {
            name: "t".into(),
            base_mva: 100.0,
            horizon: Horizon { num_periods: t, period_hours: 1.0 },
            tso_buses: buses,
            tso_lines: vec![line(1, 1, 2), line(2, 2, 3), line(3, 3, 4), line(4, 4, 1)],
            tso_units: vec![],
            dsos: vec![DsoNetwork {
                id: 1,
                root_bus: 2,
                head_bus: 1,
                buses: vec![
                    DsoBus { id: 1, v2_min: 0.81, v2_max: 1.21, load_p: vec![0.0], load_q: vec![0.0] },
                    DsoBus { id: 2, v2_min: 0.81, v2_max: 1.21, load_p: vec![1.0], load_q: vec![0.0] },
                ],
                lines: vec![DsoLine {
                    id: 1,
                    from: 1,
                    to: 2,
                    r: 0.01,
                    x: 0.02,
                    g_shunt: 0.0,
                    b_shunt: 0.0,
                    s_limit: 10.0,
                }],
                units: vec![],
                bid_p: vec![22.0],
                bid_q: vec![57.0],
                pq_limit_tso: 50.0,
                pq_limit_dso: 50.0,
            }],
            params: AlgoParams::default(),
            warm_start: None,
        }
    }

    #[test]
    fn well_formed_case_validates_clean() {
        assert!(validate_case(&four_bus_case()).is_empty());
    }

    #[test]
    fn validation_is_pure() {
        let case = four_bus_case();
        assert_eq!(validate_case(&case), validate_case(&case));
    }

    #[test]
    fn dso_cycle_is_flagged() {
        let mut case = four_bus_case();
        // second line closes a cycle between the two feeder buses
        case.dsos[0].lines.push(DsoLine {
            id: 2,
            from: 2,
            to: 1,
            r: 0.01,
            x: 0.02,
            g_shunt: 0.0,
            b_shunt: 0.0,
            s_limit: 10.0,
        });
        let findings = validate_case(&case);
        assert!(
            findings.iter().any(|f| f.contains("dso 1: line graph not a tree")),
            "findings: {findings:?}"
        );
    }

    #[test]
    fn partial_zone_assignment_is_flagged() {
        let mut case = four_bus_case();
        for b in case.tso_buses.iter_mut() {
            b.zone = Some(0);
        }
        case.tso_buses[2].zone = None; // bus id 3
        let findings = validate_case(&case);
        assert!(findings.iter().any(|f| f == "bus 3 unassigned"), "findings: {findings:?}");
    }

    #[test]
    fn beta_invariant_message() {
        let mut case = four_bus_case();
        case.params.beta = 0.9;
        let findings = validate_case(&case);
        assert!(findings.iter().any(|f| f == "algo.beta must exceed 1"));
    }

    #[test]
    fn auto_zone_single_zone() {
        let case = four_bus_case();
        let z = auto_zone(&case.tso_buses, &case.tso_lines, 1).unwrap();
        assert!(z.iter().all(|&v| v == 0));
    }

    #[test]
    fn auto_zone_path_graph_splits_in_half() {
        let t = 1;
        let buses: Vec<TsoBus> = (1..=4).map(|id| bus(id, t)).collect();
        let lines = vec![line(1, 1, 2), line(2, 2, 3), line(3, 3, 4)];
        let z = auto_zone(&buses, &lines, 2).unwrap();
        assert_eq!(z, vec![0, 0, 1, 1]);
    }

    #[test]
    fn auto_zone_rejects_oversized_k() {
        let case = four_bus_case();
        assert!(auto_zone(&case.tso_buses, &case.tso_lines, 5).is_err());
    }

    #[test]
    fn auto_zone_is_connected_partition() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        // random connected graph: spanning tree plus extra edges
        let n = 60;
        let t = 1;
        let buses: Vec<TsoBus> = (1..=n).map(|id| bus(id, t)).collect();
        let mut lines = Vec::new();
        let mut lid = 0;
        for i in 1..n {
            lid += 1;
            lines.push(line(lid, rng.gen_range(1..=i), i + 1));
        }
        for _ in 0..30 {
            lid += 1;
            let a = rng.gen_range(1..=n);
            let b = rng.gen_range(1..=n);
            if a != b {
                lines.push(line(lid, a, b));
            }
        }
        for k in [2usize, 3, 5] {
            let z = auto_zone(&buses, &lines, k).unwrap();
            assert_eq!(z.len(), n);
            assert!(z.iter().all(|&v| v < k));
            // every zone non-empty and connected
            for zi in 0..k {
                let members: Vec<usize> = (0..n).filter(|&i| z[i] == zi).collect();
                assert!(!members.is_empty());
                let mut seen = vec![false; n];
                let mut stack = vec![members[0]];
                seen[members[0]] = true;
                let mut count = 1;
                while let Some(u) = stack.pop() {
                    for l in &lines {
                        let (f, to) = (l.from - 1, l.to - 1);
                        for (a, b) in [(f, to), (to, f)] {
                            if a == u && z[b] == zi && !seen[b] {
                                seen[b] = true;
                                count += 1;
                                stack.push(b);
                            }
                        }
                    }
                }
                assert_eq!(count, members.len(), "zone {zi} disconnected");
            }
        }
    }
}
