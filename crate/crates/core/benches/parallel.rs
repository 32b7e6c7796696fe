//! Parallel vs sequential throughput of the data-parallel inner stages:
//! the feeder phase, the commitment-pattern oracle, and the dense basis
//! factorization that dominates large zonal solves.
//!
//! Build with the default `parallel` feature; each benchmark runs the
//! same work through the rayon path and the sequential fallback.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use gridcoord::exec::map_maybe_parallel;
use gridcoord::model::{
    AlgoParams, DsoBus, DsoLine, DsoNetwork, DsoUnit, GridCase, Horizon, TsoBus, TsoUnit,
};
use gridcoord::oracle::enumerate_uc;
use gridcoord::subproblems::{build_dso, solve_dso, CaseView, DsoObjectives};

fn bench_case(n_dsos: usize, feeder_buses: usize) -> GridCase {
    let t = 2;
    let mut buses: Vec<TsoBus> = (1..=n_dsos)
        .map(|id| TsoBus {
            id,
            v_min: 0.9,
            v_max: 1.1,
            load_p: vec![5.0; t],
            load_q: vec![1.0; t],
            is_root: true,
            zone: Some(0),
        })
        .collect();
    buses.push(TsoBus {
        id: n_dsos + 1,
        v_min: 0.9,
        v_max: 1.1,
        load_p: vec![0.0; t],
        load_q: vec![0.0; t],
        is_root: false,
        zone: Some(0),
    });
    let lines = (1..=n_dsos)
        .map(|id| {
            let (g, b) = gridcoord::model::derive_admittance(0.01, 0.08).unwrap();
            gridcoord::model::TsoLine {
                id,
                from: id,
                to: n_dsos + 1,
                r: 0.01,
                x: 0.08,
                g,
                b,
                flow_limit: 120.0,
            }
        })
        .collect();
    let dsos = (0..n_dsos)
        .map(|j| {
            let buses: Vec<DsoBus> = (1..=feeder_buses)
                .map(|id| DsoBus {
                    id,
                    v2_min: 0.81,
                    v2_max: 1.21,
                    load_p: vec![if id > 1 { 1.5 } else { 0.0 }; t],
                    load_q: vec![0.2; t],
                })
                .collect();
            let lines: Vec<DsoLine> = (2..=feeder_buses)
                .map(|id| DsoLine {
                    id: id - 1,
                    from: id - 1,
                    to: id,
                    r: 0.02,
                    x: 0.05,
                    g_shunt: 0.0,
                    b_shunt: 0.0,
                    s_limit: 40.0,
                })
                .collect();
            DsoNetwork {
                id: j + 1,
                root_bus: j + 1,
                head_bus: 1,
                buses,
                lines,
                units: vec![DsoUnit {
                    id: 1,
                    bus: feeder_buses,
                    p_min: 0.0,
                    p_max: 15.0,
                    q_min: -5.0,
                    q_max: 5.0,
                    cost_p: vec![8.0; t],
                    cost_q: vec![0.0; t],
                }],
                bid_p: vec![22.0; t],
                bid_q: vec![35.0; t],
                pq_limit_tso: 60.0,
                pq_limit_dso: 60.0,
            }
        })
        .collect();
    GridCase {
        name: "bench".into(),
        base_mva: 100.0,
        horizon: Horizon { num_periods: t, period_hours: 1.0 },
        tso_buses: buses,
        tso_lines: lines,
        tso_units: vec![TsoUnit {
            id: 1,
            bus: n_dsos + 1,
            p_min: 0.0,
            p_max: 300.0,
            q_min: -100.0,
            q_max: 100.0,
            ramp_p: 300.0,
            ramp_q: 200.0,
            cost_p: vec![40.0; t],
            cost_q: vec![1.0; t],
            initial_commit: false,
            initial_p: 0.0,
            initial_q: 0.0,
        }],
        dsos,
        params: AlgoParams::default(),
        warm_start: None,
    }
}

fn feeder_phase(c: &mut Criterion) {
    let case = bench_case(8, 12);
    let view = CaseView::new(&case, None).unwrap();
    let mut group = c.benchmark_group("feeder_phase");
    for parallel in [false, true] {
        let label = if parallel { "parallel" } else { "sequential" };
        group.bench_with_input(BenchmarkId::from_parameter(label), &parallel, |bench, &par| {
            bench.iter(|| {
                let jobs: Vec<usize> = (0..case.dsos.len()).collect();
                let out = map_maybe_parallel(jobs, par, |j| {
                    let dm = build_dso(&view, j, &DsoObjectives::standalone(view.nt));
                    solve_dso(&dm, false).unwrap().pd_p[0]
                });
                criterion::black_box(out)
            });
        });
    }
    group.finish();
}

fn oracle_enumeration(c: &mut Criterion) {
    // 10 commitment patterns -> 1024 fixed-point solves per pass; the
    // oracle parallelizes over patterns internally when the feature is on.
    let mut case = bench_case(1, 6);
    case.tso_units = (0..5)
        .map(|i| TsoUnit {
            id: i + 1,
            bus: 2,
            p_min: 0.0,
            p_max: 40.0,
            q_min: -20.0,
            q_max: 20.0,
            ramp_p: 40.0,
            ramp_q: 40.0,
            cost_p: vec![20.0 + 5.0 * i as f64; 2],
            cost_q: vec![0.0; 2],
            initial_commit: false,
            initial_p: 0.0,
            initial_q: 0.0,
        })
        .collect();
    let mut group = c.benchmark_group("oracle_enumeration");
    group.sample_size(10);
    group.bench_function("default_mode", |bench| {
        bench.iter(|| criterion::black_box(enumerate_uc(&case).unwrap().best_cost));
    });
    group.finish();
}

fn dense_factorization(c: &mut Criterion) {
    use gridcoord::lp::{LpModel, Sense, VarKind};
    // a chained LP big enough for the blocked factorization to matter
    let n = 600;
    let mut m = LpModel::new();
    for j in 0..n {
        m.add_var(format!("x{j}"), 0.0, 10.0, ((j % 7) as f64) - 3.0, VarKind::Continuous);
    }
    for i in 0..n - 1 {
        m.add_row(vec![(i, 1.0), (i + 1, 0.5)], Sense::Le, 4.0);
        m.add_row(vec![(i, -0.25), (i + 1, 1.0)], Sense::Ge, -3.0);
    }
    let mut group = c.benchmark_group("simplex_solve");
    group.sample_size(10);
    group.bench_function("chained_lp", |bench| {
        bench.iter(|| criterion::black_box(gridcoord::lp::solve_lp(&m).unwrap().objective));
    });
    group.finish();
}

criterion_group!(benches, feeder_phase, oracle_enumeration, dense_factorization);
criterion_main!(benches);
