//! Case ingestion and artifact emission.
//!
//! Cases are JSON documents with top-level keys `meta`, `tso`, `dsos`,
//! `bids`, `algo` and optional `warm_start` (see `docs/case_format.md`
//! for the annotated schema). Physical quantities are MW / MVAr; line
//! data is p.u. on `meta.base_mva`. Per-period fields accept a scalar
//! (broadcast over the horizon) or an array of length `num_periods`.
//! Unknown keys are rejected.
//!
//! Emitted artifacts: solution JSON, the iteration trace CSV, companion
//! interface-price CSV, and LP text exports of any [`LpModel`].

pub mod lp_format;

use std::collections::HashMap;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::lp::LpModel;
use crate::model::{
    derive_admittance, validate_case, AlgoParams, DsoBus, DsoLine, DsoNetwork, DsoUnit, GridCase,
    Horizon, TsoBus, TsoLine, TsoUnit, WarmStart,
};
use crate::subproblems::{CaseView, MultiplierState, OperatingPoint};

#[derive(Debug, thiserror::Error)]
pub enum CaseIoError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("syntax error at line {line}, column {column}: {msg}")]
    Syntax { line: usize, column: usize, msg: String },
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("case is invalid:\n{}", .0.join("\n"))]
    Invalid(Vec<String>),
    #[error("solution not feasible")]
    NotFeasible,
}

fn io_err(path: &Path, source: std::io::Error) -> CaseIoError {
    CaseIoError::Io { path: path.display().to_string(), source }
}

// ---------------------------------------------------------------------------
// schema

/// Scalar-or-array field broadcast over the horizon.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum PerPeriod {
    Scalar(f64),
    Series(Vec<f64>),
}

impl PerPeriod {
    fn broadcast(&self, t: usize, what: &str) -> Result<Vec<f64>, CaseIoError> {
        match self {
            PerPeriod::Scalar(v) => Ok(vec![*v; t]),
            PerPeriod::Series(v) if v.len() == t => Ok(v.clone()),
            PerPeriod::Series(v) => Err(CaseIoError::Schema(format!(
                "{what}: expected {t} periods, found {}",
                v.len()
            ))),
        }
    }
}

fn per_period_zero() -> PerPeriod {
    PerPeriod::Scalar(0.0)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseFile {
    meta: MetaSection,
    tso: TsoSection,
    #[serde(default)]
    dsos: Vec<DsoSection>,
    #[serde(default)]
    bids: Vec<BidSection>,
    #[serde(default)]
    algo: Option<AlgoParams>,
    #[serde(default)]
    warm_start: Option<WarmStart>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaSection {
    name: String,
    base_mva: f64,
    horizon: HorizonSection,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HorizonSection {
    num_periods: usize,
    #[serde(default = "one")]
    period_hours: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TsoSection {
    buses: Vec<BusSection>,
    lines: Vec<LineSection>,
    #[serde(default)]
    units: Vec<UnitSection>,
    /// Optional explicit zoning: list of bus-id lists.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    zones: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BusSection {
    id: usize,
    v_min: f64,
    v_max: f64,
    #[serde(default = "per_period_zero")]
    load_p: PerPeriod,
    #[serde(default = "per_period_zero")]
    load_q: PerPeriod,
    #[serde(default)]
    is_root: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LineSection {
    id: usize,
    from: usize,
    to: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    b: Option<f64>,
    flow_limit: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UnitSection {
    id: usize,
    bus: usize,
    p_min: f64,
    p_max: f64,
    q_min: f64,
    q_max: f64,
    ramp_p: f64,
    ramp_q: f64,
    cost_p: PerPeriod,
    #[serde(default = "per_period_zero")]
    cost_q: PerPeriod,
    #[serde(default)]
    initial_commit: bool,
    #[serde(default)]
    initial_p: f64,
    #[serde(default)]
    initial_q: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum LoadSign {
    /// Loads enter the feeder balances with the printed (positive) sign.
    #[default]
    Paper,
    /// Negate feeder loads at parse for data using the opposite convention.
    Negated,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DsoSection {
    id: usize,
    root_bus: usize,
    /// Feeder-head bus; defaults to the first listed bus.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    head_bus: Option<usize>,
    buses: Vec<DsoBusSection>,
    lines: Vec<DsoLineSection>,
    #[serde(default)]
    units: Vec<DsoUnitSection>,
    pq_limit_tso: f64,
    pq_limit_dso: f64,
    #[serde(default)]
    load_sign: LoadSign,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DsoBusSection {
    id: usize,
    v2_min: f64,
    v2_max: f64,
    #[serde(default = "per_period_zero")]
    load_p: PerPeriod,
    #[serde(default = "per_period_zero")]
    load_q: PerPeriod,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DsoLineSection {
    id: usize,
    from: usize,
    to: usize,
    r: f64,
    x: f64,
    #[serde(default)]
    g_shunt: f64,
    #[serde(default)]
    b_shunt: f64,
    s_limit: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DsoUnitSection {
    id: usize,
    bus: usize,
    p_min: f64,
    p_max: f64,
    q_min: f64,
    q_max: f64,
    cost_p: PerPeriod,
    #[serde(default = "per_period_zero")]
    cost_q: PerPeriod,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BidSection {
    dso: usize,
    bid_p: PerPeriod,
    bid_q: PerPeriod,
}

// ---------------------------------------------------------------------------
// parse

/// Parse and fully validate a case file. Loads and costs are broadcast
/// over the horizon, line admittances derived where only (r, x) is given,
/// and every structural invariant checked; any finding is fatal.
pub fn parse_case(path: impl AsRef<Path>) -> Result<GridCase, CaseIoError> {
    let path = path.as_ref();
    let body = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_case_str(&body)
}

pub fn parse_case_str(body: &str) -> Result<GridCase, CaseIoError> {
    let file: CaseFile = serde_json::from_str(body).map_err(|e| {
        if e.is_syntax() || e.is_eof() {
            CaseIoError::Syntax { line: e.line(), column: e.column(), msg: e.to_string() }
        } else {
            CaseIoError::Schema(e.to_string())
        }
    })?;
    let case = convert(file)?;
    let findings = validate_case(&case);
    if !findings.is_empty() {
        return Err(CaseIoError::Invalid(findings));
    }
    Ok(case)
}

fn convert(file: CaseFile) -> Result<GridCase, CaseIoError> {
    let t = file.meta.horizon.num_periods;
    if t == 0 {
        return Err(CaseIoError::Schema("meta.horizon.num_periods must be at least 1".into()));
    }

    // explicit zone lists translate to per-bus labels; missing buses are
    // caught by validation ("bus N unassigned")
    let mut zone_of: HashMap<usize, usize> = HashMap::new();
    if let Some(zs) = &file.tso.zones {
        for (zi, members) in zs.iter().enumerate() {
            for &bid in members {
                if zone_of.insert(bid, zi).is_some() {
                    return Err(CaseIoError::Schema(format!(
                        "tso.zones: bus {bid} appears in more than one zone"
                    )));
                }
            }
        }
    }

    let mut tso_buses = Vec::with_capacity(file.tso.buses.len());
    for b in &file.tso.buses {
        tso_buses.push(TsoBus {
            id: b.id,
            v_min: b.v_min,
            v_max: b.v_max,
            load_p: b.load_p.broadcast(t, &format!("bus {} load_p", b.id))?,
            load_q: b.load_q.broadcast(t, &format!("bus {} load_q", b.id))?,
            is_root: b.is_root,
            zone: if file.tso.zones.is_some() { zone_of.get(&b.id).copied() } else { None },
        });
    }
    if let Some(zs) = &file.tso.zones {
        let known: Vec<usize> = file.tso.buses.iter().map(|b| b.id).collect();
        for members in zs {
            for bid in members {
                if !known.contains(bid) {
                    return Err(CaseIoError::Schema(format!("tso.zones references unknown bus {bid}")));
                }
            }
        }
    }

    let mut tso_lines = Vec::with_capacity(file.tso.lines.len());
    for l in &file.tso.lines {
        let (r, x, g, b) = resolve_line_params(l)?;
        tso_lines.push(TsoLine { id: l.id, from: l.from, to: l.to, r, x, g, b, flow_limit: l.flow_limit });
    }

    let mut tso_units = Vec::with_capacity(file.tso.units.len());
    for u in &file.tso.units {
        tso_units.push(TsoUnit {
            id: u.id,
            bus: u.bus,
            p_min: u.p_min,
            p_max: u.p_max,
            q_min: u.q_min,
            q_max: u.q_max,
            ramp_p: u.ramp_p,
            ramp_q: u.ramp_q,
            cost_p: u.cost_p.broadcast(t, &format!("unit {} cost_p", u.id))?,
            cost_q: u.cost_q.broadcast(t, &format!("unit {} cost_q", u.id))?,
            initial_commit: u.initial_commit,
            initial_p: u.initial_p,
            initial_q: u.initial_q,
        });
    }

    let mut bids: HashMap<usize, (Vec<f64>, Vec<f64>)> = HashMap::new();
    for b in &file.bids {
        let parsed = (
            b.bid_p.broadcast(t, &format!("bids for dso {} bid_p", b.dso))?,
            b.bid_q.broadcast(t, &format!("bids for dso {} bid_q", b.dso))?,
        );
        if bids.insert(b.dso, parsed).is_some() {
            return Err(CaseIoError::Schema(format!("bids: duplicate entry for dso {}", b.dso)));
        }
    }

    let mut dsos = Vec::with_capacity(file.dsos.len());
    for d in &file.dsos {
        let (bid_p, bid_q) = bids.remove(&d.id).ok_or_else(|| {
            CaseIoError::Schema(format!("bids: missing entry for dso {}", d.id))
        })?;
        let sign = if d.load_sign == LoadSign::Negated { -1.0 } else { 1.0 };
        let buses = d
            .buses
            .iter()
            .map(|b| -> Result<DsoBus, CaseIoError> {
                Ok(DsoBus {
                    id: b.id,
                    v2_min: b.v2_min,
                    v2_max: b.v2_max,
                    load_p: b
                        .load_p
                        .broadcast(t, &format!("dso {} bus {} load_p", d.id, b.id))?
                        .iter()
                        .map(|v| sign * v)
                        .collect(),
                    load_q: b
                        .load_q
                        .broadcast(t, &format!("dso {} bus {} load_q", d.id, b.id))?
                        .iter()
                        .map(|v| sign * v)
                        .collect(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let lines = d
            .lines
            .iter()
            .map(|l| DsoLine {
                id: l.id,
                from: l.from,
                to: l.to,
                r: l.r,
                x: l.x,
                g_shunt: l.g_shunt,
                b_shunt: l.b_shunt,
                s_limit: l.s_limit,
            })
            .collect();
        let units = d
            .units
            .iter()
            .map(|u| -> Result<DsoUnit, CaseIoError> {
                Ok(DsoUnit {
                    id: u.id,
                    bus: u.bus,
                    p_min: u.p_min,
                    p_max: u.p_max,
                    q_min: u.q_min,
                    q_max: u.q_max,
                    cost_p: u.cost_p.broadcast(t, &format!("dso {} unit {} cost_p", d.id, u.id))?,
                    cost_q: u.cost_q.broadcast(t, &format!("dso {} unit {} cost_q", d.id, u.id))?,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let head = d.head_bus.unwrap_or_else(|| d.buses.first().map(|b| b.id).unwrap_or(0));
        dsos.push(DsoNetwork {
            id: d.id,
            root_bus: d.root_bus,
            head_bus: head,
            buses,
            lines,
            units,
            bid_p,
            bid_q,
            pq_limit_tso: d.pq_limit_tso,
            pq_limit_dso: d.pq_limit_dso,
        });
    }
    if let Some(orphan) = bids.keys().next() {
        return Err(CaseIoError::Schema(format!("bids: entry for unknown dso {orphan}")));
    }

    Ok(GridCase {
        name: file.meta.name,
        base_mva: file.meta.base_mva,
        horizon: Horizon { num_periods: t, period_hours: file.meta.horizon.period_hours },
        tso_buses,
        tso_lines,
        tso_units,
        dsos,
        params: file.algo.unwrap_or_default(),
        warm_start: file.warm_start,
    })
}

fn resolve_line_params(l: &LineSection) -> Result<(f64, f64, f64, f64), CaseIoError> {
    match (l.r, l.x, l.g, l.b) {
        (Some(r), Some(x), g, b) => {
            let (dg, db) = derive_admittance(r, x)
                .map_err(|e| CaseIoError::Schema(format!("line {}: {e}", l.id)))?;
            Ok((r, x, g.unwrap_or(dg), b.unwrap_or(db)))
        }
        (None, None, Some(g), Some(b)) => {
            let (r, x) = crate::model::admittance_to_impedance(g, b)
                .map_err(|e| CaseIoError::Schema(format!("line {}: {e}", l.id)))?;
            Ok((r, x, g, b))
        }
        _ => Err(CaseIoError::Schema(format!(
            "line {}: provide (r, x) and/or (g, b)",
            l.id
        ))),
    }
}

// ---------------------------------------------------------------------------
// case writer (round-trip support)

/// Serialize a parsed case back into the file schema. Parsing the output
/// reproduces the input `GridCase` field for field.
pub fn write_case(case: &GridCase, path: impl AsRef<Path>) -> Result<(), CaseIoError> {
    let path = path.as_ref();
    let body = case_to_string(case);
    std::fs::write(path, body).map_err(|e| io_err(path, e))
}

pub fn case_to_string(case: &GridCase) -> String {
    let file = CaseFile {
        meta: MetaSection {
            name: case.name.clone(),
            base_mva: case.base_mva,
            horizon: HorizonSection {
                num_periods: case.horizon.num_periods,
                period_hours: case.horizon.period_hours,
            },
        },
        tso: TsoSection {
            buses: case
                .tso_buses
                .iter()
                .map(|b| BusSection {
                    id: b.id,
                    v_min: b.v_min,
                    v_max: b.v_max,
                    load_p: PerPeriod::Series(b.load_p.clone()),
                    load_q: PerPeriod::Series(b.load_q.clone()),
                    is_root: b.is_root,
                })
                .collect(),
            lines: case
                .tso_lines
                .iter()
                .map(|l| LineSection {
                    id: l.id,
                    from: l.from,
                    to: l.to,
                    r: Some(l.r),
                    x: Some(l.x),
                    g: Some(l.g),
                    b: Some(l.b),
                    flow_limit: l.flow_limit,
                })
                .collect(),
            units: case
                .tso_units
                .iter()
                .map(|u| UnitSection {
                    id: u.id,
                    bus: u.bus,
                    p_min: u.p_min,
                    p_max: u.p_max,
                    q_min: u.q_min,
                    q_max: u.q_max,
                    ramp_p: u.ramp_p,
                    ramp_q: u.ramp_q,
                    cost_p: PerPeriod::Series(u.cost_p.clone()),
                    cost_q: PerPeriod::Series(u.cost_q.clone()),
                    initial_commit: u.initial_commit,
                    initial_p: u.initial_p,
                    initial_q: u.initial_q,
                })
                .collect(),
            zones: zones_section(case),
        },
        dsos: case
            .dsos
            .iter()
            .map(|d| DsoSection {
                id: d.id,
                root_bus: d.root_bus,
                head_bus: Some(d.head_bus),
                buses: d
                    .buses
                    .iter()
                    .map(|b| DsoBusSection {
                        id: b.id,
                        v2_min: b.v2_min,
                        v2_max: b.v2_max,
                        load_p: PerPeriod::Series(b.load_p.clone()),
                        load_q: PerPeriod::Series(b.load_q.clone()),
                    })
                    .collect(),
                lines: d
                    .lines
                    .iter()
                    .map(|l| DsoLineSection {
                        id: l.id,
                        from: l.from,
                        to: l.to,
                        r: l.r,
                        x: l.x,
                        g_shunt: l.g_shunt,
                        b_shunt: l.b_shunt,
                        s_limit: l.s_limit,
                    })
                    .collect(),
                units: d
                    .units
                    .iter()
                    .map(|u| DsoUnitSection {
                        id: u.id,
                        bus: u.bus,
                        p_min: u.p_min,
                        p_max: u.p_max,
                        q_min: u.q_min,
                        q_max: u.q_max,
                        cost_p: PerPeriod::Series(u.cost_p.clone()),
                        cost_q: PerPeriod::Series(u.cost_q.clone()),
                    })
                    .collect(),
                pq_limit_tso: d.pq_limit_tso,
                pq_limit_dso: d.pq_limit_dso,
                load_sign: LoadSign::Paper,
            })
            .collect(),
        bids: case
            .dsos
            .iter()
            .map(|d| BidSection {
                dso: d.id,
                bid_p: PerPeriod::Series(d.bid_p.clone()),
                bid_q: PerPeriod::Series(d.bid_q.clone()),
            })
            .collect(),
        algo: Some(case.params.clone()),
        warm_start: case.warm_start.clone(),
    };
    serde_json::to_string_pretty(&file).expect("case serialization cannot fail")
}

fn zones_section(case: &GridCase) -> Option<Vec<Vec<usize>>> {
    if case.tso_buses.iter().any(|b| b.zone.is_none()) {
        return None;
    }
    let k = case.zone_count();
    let mut zs = vec![Vec::new(); k];
    for b in &case.tso_buses {
        zs[b.zone.unwrap()].push(b.id);
    }
    Some(zs)
}

// ---------------------------------------------------------------------------
// trace

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Tso,
    Dso,
    Feasibility,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Tso => "tso",
            Phase::Dso => "dso",
            Phase::Feasibility => "feasibility",
        })
    }
}

/// One row of the convergence trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub phase: Phase,
    pub s: f64,
    pub alpha: f64,
    pub c: f64,
    pub c_p: f64,
    pub residual_norm2: f64,
    pub proximal_norm1: f64,
    pub surrogate_value: f64,
    /// Blank until the first feasible point.
    pub feasible_cost_total: Option<f64>,
    pub wall_ms: u64,
}

pub const TRACE_HEADER: &str =
    "iter,phase,s,alpha,c,c_p,residual_norm2,proximal_norm1,surrogate_value,feasible_cost_total,wall_ms";

/// 17-significant-digit decimal rendering; exact zero prints as `0`.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else {
        format!("{x:.16e}")
    }
}

pub fn write_trace(rows: &[TraceRow], path: impl AsRef<Path>) -> Result<(), CaseIoError> {
    let path = path.as_ref();
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| io_err(path, e))?);
    let res: std::io::Result<()> = (|| {
        writeln!(f, "{TRACE_HEADER}")?;
        for r in rows {
            writeln!(
                f,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.iter,
                r.phase,
                fmt_f64(r.s),
                fmt_f64(r.alpha),
                fmt_f64(r.c),
                fmt_f64(r.c_p),
                fmt_f64(r.residual_norm2),
                fmt_f64(r.proximal_norm1),
                fmt_f64(r.surrogate_value),
                r.feasible_cost_total.map(fmt_f64).unwrap_or_default(),
                r.wall_ms
            )?;
        }
        f.flush()
    })();
    res.map_err(|e| io_err(path, e))
}

/// Re-read a trace written by [`write_trace`]; numeric values round-trip
/// exactly.
pub fn read_trace(path: impl AsRef<Path>) -> Result<Vec<TraceRow>, CaseIoError> {
    let path = path.as_ref();
    let body = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in body.lines().enumerate() {
        if i == 0 {
            if line != TRACE_HEADER {
                return Err(CaseIoError::Schema(format!("unexpected trace header `{line}`")));
            }
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 11 {
            return Err(CaseIoError::Schema(format!("trace line {} has {} columns", i + 1, cols.len())));
        }
        let num = |s: &str| -> Result<f64, CaseIoError> {
            s.parse().map_err(|e| CaseIoError::Schema(format!("trace line {}: {e}", i + 1)))
        };
        rows.push(TraceRow {
            iter: cols[0].parse().map_err(|e| CaseIoError::Schema(format!("trace line {}: {e}", i + 1)))?,
            phase: match cols[1] {
                "tso" => Phase::Tso,
                "dso" => Phase::Dso,
                "feasibility" => Phase::Feasibility,
                other => return Err(CaseIoError::Schema(format!("unknown phase `{other}`"))),
            },
            s: num(cols[2])?,
            alpha: num(cols[3])?,
            c: num(cols[4])?,
            c_p: num(cols[5])?,
            residual_norm2: num(cols[6])?,
            proximal_norm1: num(cols[7])?,
            surrogate_value: num(cols[8])?,
            feasible_cost_total: if cols[9].is_empty() { None } else { Some(num(cols[9])?) },
            wall_ms: cols[10].parse().map_err(|e| CaseIoError::Schema(format!("trace line {}: {e}", i + 1)))?,
        });
    }
    Ok(rows)
}

/// Interface-price snapshot row for the companion prices CSV
/// (per root bus, every tenth iteration and at termination).
#[derive(Debug, Clone, PartialEq)]
pub struct PriceRow {
    pub iter: usize,
    pub dso: usize,
    pub root_bus: usize,
    /// lambda_p + psi_p at the root, $/MWh.
    pub price_p: f64,
    /// lambda_q + psi_q at the root, $/MVArh.
    pub price_q: f64,
}

pub const PRICES_HEADER: &str = "iter,dso,root_bus,price_p,price_q";

pub fn write_prices(rows: &[PriceRow], path: impl AsRef<Path>) -> Result<(), CaseIoError> {
    let path = path.as_ref();
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| io_err(path, e))?);
    let res: std::io::Result<()> = (|| {
        writeln!(f, "{PRICES_HEADER}")?;
        for r in rows {
            writeln!(f, "{},{},{},{},{}", r.iter, r.dso, r.root_bus, fmt_f64(r.price_p), fmt_f64(r.price_q))?;
        }
        f.flush()
    })();
    res.map_err(|e| io_err(path, e))
}

// ---------------------------------------------------------------------------
// solution writer

/// Write the converged operating point with duals and the objective
/// breakdown. Refuses points that have not passed the feasibility audit.
pub fn write_solution(
    case: &GridCase,
    point: &OperatingPoint,
    duals: &MultiplierState,
    path: impl AsRef<Path>,
) -> Result<(), CaseIoError> {
    let path = path.as_ref();
    if !point.feasible {
        return Err(CaseIoError::NotFeasible);
    }
    let view = CaseView::new(case, None).map_err(|e| CaseIoError::Schema(e.to_string()))?;
    let t_count = case.periods();

    let tso_cost = crate::subproblems::tso_objective(&view, point);
    let dso_costs: Vec<f64> = (0..case.dsos.len())
        .map(|j| crate::subproblems::dso_objective(&view, point, duals, j))
        .collect();
    let social = crate::subproblems::social_cost(&view, point);

    let mut periods = Vec::with_capacity(t_count);
    for t in 0..t_count {
        let commitments: Vec<serde_json::Value> = case
            .tso_units
            .iter()
            .enumerate()
            .map(|(u, unit)| {
                serde_json::json!({
                    "unit": unit.id,
                    "on": point.commit.get(t, u) > 0.5,
                    "p": point.gen_p.get(t, u),
                    "q": point.gen_q.get(t, u),
                })
            })
            .collect();
        let voltages: Vec<serde_json::Value> = case
            .tso_buses
            .iter()
            .enumerate()
            .map(|(b, bus)| {
                serde_json::json!({
                    "bus": bus.id,
                    "re": point.v_re.get(t, b),
                    "im": point.v_im.get(t, b),
                    "magnitude": (point.v_re.get(t, b).powi(2) + point.v_im.get(t, b).powi(2)).sqrt(),
                })
            })
            .collect();
        let flows: Vec<serde_json::Value> = case
            .tso_lines
            .iter()
            .enumerate()
            .map(|(l, line)| {
                serde_json::json!({
                    "line": line.id,
                    "p": point.flow_p.get(t, l),
                    "q": point.flow_q.get(t, l),
                })
            })
            .collect();
        let interface: Vec<serde_json::Value> = case
            .dsos
            .iter()
            .enumerate()
            .map(|(j, d)| {
                serde_json::json!({
                    "dso": d.id,
                    "p_tso": point.pt_p.get(t, j),
                    "q_tso": point.pt_q.get(t, j),
                    "p_dso": point.pd_p.get(t, j),
                    "q_dso": point.pd_q.get(t, j),
                })
            })
            .collect();
        let dso_states: Vec<serde_json::Value> = case
            .dsos
            .iter()
            .enumerate()
            .map(|(j, d)| {
                let dp = &point.dso[j];
                serde_json::json!({
                    "dso": d.id,
                    "generation": d.units.iter().enumerate().map(|(u, unit)| serde_json::json!({
                        "unit": unit.id, "p": dp.gen_p.get(t, u), "q": dp.gen_q.get(t, u),
                    })).collect::<Vec<_>>(),
                    "v2": d.buses.iter().enumerate().map(|(b, bus)| serde_json::json!({
                        "bus": bus.id, "value": dp.v2.get(t, b),
                    })).collect::<Vec<_>>(),
                    "current2": d.lines.iter().enumerate().map(|(l, line)| serde_json::json!({
                        "line": line.id, "value": dp.a2.get(t, l),
                    })).collect::<Vec<_>>(),
                    "flows": d.lines.iter().enumerate().map(|(l, line)| serde_json::json!({
                        "line": line.id, "p": dp.flow_p.get(t, l), "q": dp.flow_q.get(t, l),
                    })).collect::<Vec<_>>(),
                })
            })
            .collect();
        periods.push(serde_json::json!({
            "t": t,
            "units": commitments,
            "tso_voltages": voltages,
            "tso_flows": flows,
            "interface": interface,
            "dso": dso_states,
        }));
    }

    let prices: Vec<serde_json::Value> = case
        .dsos
        .iter()
        .enumerate()
        .map(|(j, d)| {
            let root = view.root_pos[j];
            let per_period: Vec<serde_json::Value> = (0..t_count)
                .map(|t| {
                    serde_json::json!({
                        "t": t,
                        "price_p": duals.lambda_p.get(t, root) + duals.psi_p.get(t, j),
                        "price_q": duals.lambda_q.get(t, root) + duals.psi_q.get(t, j),
                    })
                })
                .collect();
            serde_json::json!({ "dso": d.id, "root_bus": d.root_bus, "per_period": per_period })
        })
        .collect();

    let doc = serde_json::json!({
        "case": case.name,
        "feasible": true,
        "objective": {
            "tso_cost": tso_cost,
            "dso_costs": case.dsos.iter().zip(&dso_costs).map(|(d, c)| serde_json::json!({
                "dso": d.id, "cost": c,
            })).collect::<Vec<_>>(),
            "total": tso_cost + dso_costs.iter().sum::<f64>(),
            "social_cost": social,
        },
        "interface_prices": prices,
        "periods": periods,
    });
    let body = serde_json::to_string_pretty(&doc).expect("solution serialization cannot fail");
    std::fs::write(path, body).map_err(|e| io_err(path, e))
}

/// Write an [`LpModel`] in LP text format (see [`lp_format`]).
pub fn export_lp(model: &LpModel, path: impl AsRef<Path>) -> Result<(), CaseIoError> {
    let path = path.as_ref();
    std::fs::write(path, lp_format::write_lp_string(model)).map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt_f64_contract() {
        assert_eq!(fmt_f64(0.0), "0");
        assert_eq!(fmt_f64(-0.0), "0");
        let x = 1.0250000000000001_f64;
        let s = fmt_f64(x);
        assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits());
    }

    #[test]
    fn minimal_case_parses() {
        let body = r#"{
            "meta": {"name": "mini", "base_mva": 100.0, "horizon": {"num_periods": 1}},
            "tso": {
                "buses": [
                    {"id": 1, "v_min": 0.9, "v_max": 1.1, "load_p": 50.0},
                    {"id": 2, "v_min": 0.9, "v_max": 1.1}
                ],
                "lines": [{"id": 1, "from": 1, "to": 2, "r": 0.01, "x": 0.1, "flow_limit": 100.0}],
                "units": [{"id": 1, "bus": 2, "p_min": 0.0, "p_max": 100.0, "q_min": -50.0,
                           "q_max": 50.0, "ramp_p": 100.0, "ramp_q": 100.0, "cost_p": 10.0}]
            }
        }"#;
        let case = parse_case_str(body).unwrap();
        assert_eq!(case.periods(), 1);
        assert_eq!(case.tso_buses[0].load_p, vec![50.0]);
        assert!(case.dsos.is_empty());
        let (g, b) = (case.tso_lines[0].g, case.tso_lines[0].b);
        assert!((g - 0.990099009900990).abs() < 1e-12);
        assert!((b + 9.90099009900990).abs() < 1e-12);
    }

    #[test]
    fn bad_beta_is_rejected_with_message() {
        let body = r#"{
            "meta": {"name": "m", "base_mva": 100.0, "horizon": {"num_periods": 1}},
            "tso": {"buses": [{"id": 1, "v_min": 0.9, "v_max": 1.1}], "lines": [], "units": []},
            "algo": {"s0": 0.01, "c0": 10.0, "cp0": 1e-4, "beta": 0.9, "beta_p": 1.01,
                     "m": 30.0, "r": 0.05, "eps": 1e-6, "eps_p": 1e-6, "max_iter": 100,
                     "time_limit": 60.0, "lambda_init": "zero"}
        }"#;
        match parse_case_str(body) {
            Err(CaseIoError::Invalid(findings)) => {
                assert!(findings.iter().any(|f| f == "algo.beta must exceed 1"), "{findings:?}");
            }
            other => panic!("expected invalid case, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let body = r#"{
            "meta": {"name": "m", "base_mva": 100.0, "horizon": {"num_periods": 1}},
            "tso": {"buses": [{"id": 1, "v_min": 0.9, "v_max": 1.1, "mystery": 3}], "lines": []}
        }"#;
        assert!(matches!(parse_case_str(body), Err(CaseIoError::Schema(_))));
    }

    #[test]
    fn syntax_errors_carry_position() {
        match parse_case_str("{ \"meta\": ") {
            Err(CaseIoError::Syntax { line, .. }) => assert!(line >= 1),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn trace_roundtrip_exact() {
        let rows = vec![
            TraceRow {
                iter: 1,
                phase: Phase::Tso,
                s: 0.01,
                alpha: 0.5,
                c: 10.0,
                c_p: 1e-4,
                residual_norm2: 123.456789012345678,
                proximal_norm1: 0.0,
                surrogate_value: -7.25,
                feasible_cost_total: None,
                wall_ms: 12,
            },
            TraceRow {
                iter: 2,
                phase: Phase::Feasibility,
                s: 0.009_999_999_999_3,
                alpha: 0.51,
                c: 10.25,
                c_p: 1.01e-4,
                residual_norm2: 0.0,
                proximal_norm1: 1e-18,
                surrogate_value: 1234.5,
                feasible_cost_total: Some(9876.5432),
                wall_ms: 20,
            },
        ];
        let dir = std::env::temp_dir().join(format!("gridcoord_trace_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.csv");
        write_trace(&rows, &path).unwrap();
        let body = std::fs::read_to_string(&path).unwrap();
        assert_eq!(body.lines().count(), 3, "header + 2 rows");
        assert!(body.lines().nth(2).unwrap().contains(",0,"), "exact zero renders as 0");
        let back = read_trace(&path).unwrap();
        assert_eq!(back.len(), rows.len());
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!(a.s.to_bits(), b.s.to_bits());
            assert_eq!(a.residual_norm2.to_bits(), b.residual_norm2.to_bits());
            assert_eq!(a.proximal_norm1.to_bits(), b.proximal_norm1.to_bits());
            assert_eq!(a.feasible_cost_total.map(f64::to_bits), b.feasible_cost_total.map(f64::to_bits));
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn empty_trace_is_header_only() {
        let dir = std::env::temp_dir().join(format!("gridcoord_trace_e_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("e.csv");
        write_trace(&[], &path).unwrap();
        let body = std::fs::read_to_string(&path).unwrap();
        assert_eq!(body.trim(), TRACE_HEADER);
        std::fs::remove_dir_all(&dir).ok();
    }
}
