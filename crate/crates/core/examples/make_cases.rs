//! Regenerates the bundled cases under `cases/`.
//!
//! All electrical data here is reconstructed: the feeder impedances and
//! the large meshed topology are synthetic stand-ins at the scale of the
//! published systems, chosen so the bundled studies exercise the solver
//! the same way (interface pricing, voltage recovery, zonal scale).
//!
//! Run from the workspace root: `cargo run --example make_cases`.

use gridcoord::case_io;
use gridcoord::model::*;

fn broadcast(v: f64, t: usize) -> Vec<f64> {
    vec![v; t]
}

fn tso_line(id: usize, from: usize, to: usize, r: f64, x: f64, limit: f64) -> TsoLine {
    let (g, b) = derive_admittance(r, x).expect("nonzero impedance");
    // The rectangular coupling flows carry a |b| |v|^2 baseline even at a
    // flat profile, so ratings must sit above it for the flat start to be
    // representable; `limit` acts as a dispatch-headroom floor.
    let baseline = (g * g + b * b).sqrt() * 100.0 * 1.21;
    TsoLine { id, from, to, r, x, g, b, flow_limit: limit.max(baseline * 1.15 + 50.0) }
}

/// A small radial feeder with cheap dispatchable units near the leaves.
/// `scale` multiplies loads and generation capacity.
fn feeder(
    id: usize,
    root_bus: usize,
    t: usize,
    scale: f64,
    gen_cost: f64,
    bid_p: f64,
    bid_q: f64,
    pq_limit: f64,
) -> DsoNetwork {
    // head -> 2 -> {3 -> 4, 5 -> 6 -> 7, 8}
    let parents = [(2usize, 1usize), (3, 2), (4, 3), (5, 2), (6, 5), (7, 6), (8, 2)];
    let buses = (1..=8)
        .map(|b| DsoBus {
            id: b,
            v2_min: 0.81,
            v2_max: 1.21,
            load_p: broadcast(if b == 4 || b == 7 { 2.0 * scale } else { 0.0 }, t),
            load_q: broadcast(if b == 4 || b == 7 { 0.4 * scale } else { 0.0 }, t),
        })
        .collect();
    let lines = parents
        .iter()
        .enumerate()
        .map(|(i, &(child, parent))| DsoLine {
            id: i + 1,
            from: parent,
            to: child,
            r: 0.008,
            x: 0.012,
            g_shunt: 0.0,
            b_shunt: 0.0,
            s_limit: 180.0 * scale,
        })
        .collect();
    let units = [(1usize, 4usize), (2, 6), (3, 7), (4, 8)]
        .iter()
        .map(|&(uid, bus)| DsoUnit {
            id: uid,
            bus,
            p_min: 0.0,
            p_max: 40.0 * scale,
            q_min: -20.0 * scale,
            q_max: 20.0 * scale,
            cost_p: broadcast(gen_cost, t),
            cost_q: broadcast(1.0, t),
        })
        .collect();
    DsoNetwork {
        id,
        root_bus,
        head_bus: 1,
        buses,
        lines,
        units,
        bid_p: broadcast(bid_p, t),
        bid_q: broadcast(bid_q, t),
        pq_limit_tso: pq_limit,
        pq_limit_dso: pq_limit,
    }
}

/// Simple TSO-DSO pricing study: 4 transmission buses in a ring, two
/// thermal units, one feeder with slack capacity bidding (22, 57).
fn case1() -> GridCase {
    let t = 1;
    let mut buses: Vec<TsoBus> = (1..=4)
        .map(|id| TsoBus {
            id,
            v_min: 0.9,
            v_max: 1.1,
            load_p: broadcast(0.0, t),
            load_q: broadcast(0.0, t),
            is_root: id == 2,
            zone: Some(0),
        })
        .collect();
    buses[2].load_p = broadcast(100.0, t); // bus 3
    buses[2].load_q = broadcast(25.0, t);
    buses[0].load_p = broadcast(30.0, t); // bus 1
    buses[0].load_q = broadcast(8.0, t);
    // identical line parameters keep the coupling-flow baselines
    // symmetric around the ring
    let lines = vec![
        tso_line(1, 1, 2, 0.004, 0.07, 400.0),
        tso_line(2, 2, 3, 0.004, 0.07, 400.0),
        tso_line(3, 3, 4, 0.004, 0.07, 400.0),
        tso_line(4, 4, 1, 0.004, 0.07, 400.0),
    ];
    let units = vec![
        TsoUnit {
            id: 1,
            bus: 1,
            p_min: 0.0,
            p_max: 150.0,
            q_min: -40.0,
            q_max: 40.0,
            ramp_p: 400.0,
            ramp_q: 400.0,
            cost_p: broadcast(40.0, t),
            cost_q: broadcast(5.0, t),
            initial_commit: false,
            initial_p: 0.0,
            initial_q: 0.0,
        },
        TsoUnit {
            id: 2,
            bus: 4,
            p_min: 0.0,
            p_max: 150.0,
            q_min: -40.0,
            q_max: 40.0,
            ramp_p: 400.0,
            ramp_q: 400.0,
            cost_p: broadcast(35.0, t),
            cost_q: broadcast(5.0, t),
            initial_commit: false,
            initial_p: 0.0,
            initial_q: 0.0,
        },
    ];
    GridCase {
        name: "case1_4bus".into(),
        base_mva: 100.0,
        horizon: Horizon { num_periods: t, period_hours: 1.0 },
        tso_buses: buses,
        tso_lines: lines,
        tso_units: units,
        dsos: vec![feeder(1, 2, t, 1.0, 8.0, 22.0, 57.0, 250.0)],
        params: AlgoParams {
            s0: 0.02,
            c0: 10.0,
            cp0: 1e-4,
            beta: 1.01,
            beta_p: 1.01,
            m: 100.0,
            r: 0.05,
            eps: 1e-6,
            eps_p: 1e-6,
            max_iter: 300,
            time_limit: 120.0,
            lambda_init: LambdaInit::Zero,
        },
        warm_start: None,
    }
}

/// Voltage recovery study: 9-bus meshed system, two buses warm-started
/// inside the lower-voltage circle.
fn case2() -> GridCase {
    let t = 1;
    let loads: &[(usize, f64, f64)] = &[(5, 125.0, 50.0), (7, 100.0, 35.0), (9, 90.0, 30.0)];
    let buses: Vec<TsoBus> = (1..=9)
        .map(|id| {
            let (lp, lq) = loads
                .iter()
                .find(|&&(b, _, _)| b == id)
                .map(|&(_, p, q)| (p, q))
                .unwrap_or((0.0, 0.0));
            TsoBus {
                id,
                v_min: 0.9,
                v_max: 1.1,
                load_p: broadcast(lp, t),
                load_q: broadcast(lq, t),
                is_root: false,
                zone: Some(0),
            }
        })
        .collect();
    let lines = vec![
        tso_line(1, 1, 4, 0.002, 0.0576, 350.0),
        tso_line(2, 4, 5, 0.017, 0.092, 350.0),
        tso_line(3, 5, 6, 0.039, 0.17, 350.0),
        tso_line(4, 3, 6, 0.002, 0.0586, 350.0),
        tso_line(5, 6, 7, 0.0119, 0.1008, 350.0),
        tso_line(6, 7, 8, 0.0085, 0.072, 350.0),
        tso_line(7, 8, 2, 0.002, 0.0625, 350.0),
        tso_line(8, 8, 9, 0.032, 0.161, 350.0),
        tso_line(9, 9, 4, 0.01, 0.085, 350.0),
    ];
    let units = [(1usize, 1usize, 20.0), (2, 2, 30.0), (3, 3, 25.0)]
        .iter()
        .map(|&(uid, bus, cost)| TsoUnit {
            id: uid,
            bus,
            p_min: 0.0,
            p_max: 300.0,
            q_min: -300.0,
            q_max: 300.0,
            ramp_p: 900.0,
            ramp_q: 900.0,
            cost_p: broadcast(cost, t),
            cost_q: broadcast(3.0, t),
            initial_commit: false,
            initial_p: 0.0,
            initial_q: 0.0,
        })
        .collect();
    GridCase {
        name: "case2_9bus".into(),
        base_mva: 100.0,
        horizon: Horizon { num_periods: t, period_hours: 1.0 },
        tso_buses: buses,
        tso_lines: lines,
        tso_units: units,
        dsos: vec![],
        params: AlgoParams {
            s0: 0.01,
            c0: 10.0,
            cp0: 1e-4,
            beta: 1.025,
            beta_p: 1.01,
            m: 30.0,
            r: 0.05,
            eps: 1e-6,
            eps_p: 1e-6,
            max_iter: 400,
            time_limit: 120.0,
            lambda_init: LambdaInit::Zero,
        },
        // buses 2 and 5 start inside the inner circle
        warm_start: Some(WarmStart {
            tso_voltages: vec![
                WarmVoltage { bus: 2, re: 0.5, im: 0.0 },
                WarmVoltage { bus: 5, re: 0.5, im: 0.0 },
            ],
        }),
    }
}

/// Scaled topology study: synthetic 118-bus meshed grid, 4 feeders,
/// 4 periods, 3 zones. Loads follow a mild daily shape.
fn case3() -> GridCase {
    let t = 4;
    let n = 118;
    let shape = [0.9, 1.0, 1.1, 0.95];
    // deterministic pseudo-random stream for reconstructed data
    let mut state = 0x9e3779b97f4a7c15u64;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };

    let roots = [20usize, 45, 70, 95];
    let mut buses = Vec::with_capacity(n);
    for id in 1..=n {
        let heavy = next() < 0.45;
        let base = if heavy { 8.0 + 30.0 * next() } else { 0.0 };
        let qf = 0.2 + 0.15 * next();
        buses.push(TsoBus {
            id,
            v_min: 0.9,
            v_max: 1.1,
            load_p: shape.iter().map(|s| base * s).collect(),
            load_q: shape.iter().map(|s| base * qf * s).collect(),
            is_root: roots.contains(&id),
            zone: None, // zoned automatically at run time
        });
    }

    // backbone path plus deterministic chords: meshed, connected,
    // average degree close to the published system's
    let mut lines = Vec::new();
    let mut lid = 0usize;
    let mut push_line = |lines: &mut Vec<TsoLine>, lid: &mut usize, a: usize, b: usize, r: f64, x: f64| {
        *lid += 1;
        lines.push(tso_line(*lid, a, b, r, x, 350.0));
    };
    for i in 1..n {
        let r = 0.002 + 0.003 * next();
        push_line(&mut lines, &mut lid, i, i + 1, r, 0.05 + 0.06 * next());
    }
    for start in (1..n - 7).step_by(3) {
        let r = 0.002 + 0.003 * next();
        push_line(&mut lines, &mut lid, start, start + 7, r, 0.06 + 0.06 * next());
    }
    for start in (2..n - 13).step_by(7) {
        let r = 0.002 + 0.003 * next();
        push_line(&mut lines, &mut lid, start, start + 13, r, 0.06 + 0.06 * next());
    }
    for &(a, b) in &[(1usize, 60usize), (30, 90), (60, 118), (10, 110)] {
        push_line(&mut lines, &mut lid, a, b, 0.003, 0.08);
    }

    // a dozen units spread along the backbone
    let unit_buses = [3usize, 12, 24, 33, 42, 54, 61, 73, 82, 94, 103, 112];
    let units = unit_buses
        .iter()
        .enumerate()
        .map(|(i, &bus)| {
            let cap = 220.0 + 160.0 * next();
            TsoUnit {
                id: i + 1,
                bus,
                p_min: 0.1 * cap,
                p_max: cap,
                q_min: -0.6 * cap,
                q_max: 0.6 * cap,
                ramp_p: 0.8 * cap,
                ramp_q: 1.6 * cap,
                cost_p: broadcast(28.0 + 24.0 * next(), t),
                cost_q: broadcast(2.0 + 2.0 * next(), t),
                initial_commit: false,
                initial_p: 0.0,
                initial_q: 0.0,
            }
        })
        .collect();

    let dsos = roots
        .iter()
        .enumerate()
        .map(|(j, &root)| feeder(j + 1, root, t, 1.5, 9.0 + 2.0 * j as f64, 20.0 + 2.0 * j as f64, 40.0, 150.0))
        .collect();

    GridCase {
        name: "case3_118bus".into(),
        base_mva: 100.0,
        horizon: Horizon { num_periods: t, period_hours: 1.0 },
        tso_buses: buses,
        tso_lines: lines,
        tso_units: units,
        dsos,
        params: AlgoParams {
            s0: 0.035,
            c0: 25.0,
            cp0: 1e-3,
            beta: 1.05,
            beta_p: 1.05,
            m: 30.0,
            r: 0.05,
            eps: 1e-2,
            eps_p: 1e-2,
            max_iter: 250,
            time_limit: 850.0,
            lambda_init: LambdaInit::GenerationCosts,
        },
        warm_start: None,
    }
}

/// Minimal two-bus case for the documentation walkthrough.
fn tiny() -> GridCase {
    let t = 1;
    GridCase {
        name: "tiny_2bus".into(),
        base_mva: 100.0,
        horizon: Horizon { num_periods: t, period_hours: 1.0 },
        tso_buses: vec![
            TsoBus {
                id: 1,
                v_min: 0.9,
                v_max: 1.1,
                load_p: broadcast(50.0, t),
                load_q: broadcast(10.0, t),
                is_root: false,
                zone: Some(0),
            },
            TsoBus {
                id: 2,
                v_min: 0.9,
                v_max: 1.1,
                load_p: broadcast(0.0, t),
                load_q: broadcast(0.0, t),
                is_root: false,
                zone: Some(0),
            },
        ],
        tso_lines: vec![tso_line(1, 2, 1, 0.01, 0.08, 150.0)],
        tso_units: vec![TsoUnit {
            id: 1,
            bus: 2,
            p_min: 0.0,
            p_max: 120.0,
            q_min: -60.0,
            q_max: 60.0,
            ramp_p: 300.0,
            ramp_q: 300.0,
            cost_p: broadcast(25.0, t),
            cost_q: broadcast(2.0, t),
            initial_commit: false,
            initial_p: 0.0,
            initial_q: 0.0,
        }],
        dsos: vec![],
        params: AlgoParams { max_iter: 200, ..AlgoParams::default() },
        warm_start: None,
    }
}

fn main() {
    let out = std::path::Path::new("cases");
    std::fs::create_dir_all(out).expect("create cases dir");
    for case in [case1(), case2(), case3(), tiny()] {
        let findings = validate_case(&case);
        assert!(findings.is_empty(), "{}: {findings:?}", case.name);
        let path = out.join(format!("{}.json", case.name));
        case_io::write_case(&case, &path).expect("write case");
        println!("wrote {}", path.display());
    }
}
