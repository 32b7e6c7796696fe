//! Scratch driver for watching a run converge.

use gridcoord::coordinator::{run, RunConfig};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GRIDCOORD_LOG", "warn")).init();
    if std::env::args().nth(1).as_deref() == Some("sweep") {
        sweep();
        return;
    }
    if std::env::args().nth(1).as_deref() == Some("oracle") {
        let path = std::env::args().nth(2).unwrap_or_else(|| "cases/case1_4bus.json".into());
        let case = gridcoord::case_io::parse_case(&path).expect("parse");
        let out = gridcoord::oracle::enumerate_uc(&case).expect("oracle");
        println!(
            "patterns {} feasible {} best {:?} commitment {:?}",
            out.patterns_total, out.patterns_feasible, out.best_cost, out.best_commitment
        );
        return;
    }
    let path = std::env::args().nth(1).unwrap_or_else(|| "cases/case1_4bus.json".into());
    let case = gridcoord::case_io::parse_case(&path).expect("parse");
    let mut config = RunConfig::default();
    if let Some(mi) = std::env::args().nth(2) {
        config.max_iter = Some(mi.parse().unwrap());
    }
    let started = std::time::Instant::now();
    let out = run(&case, &config).expect("run");
    println!(
        "termination {:?} in {} iterations, {:.2}s, k={} phases={}",
        out.termination,
        out.iterations,
        started.elapsed().as_secs_f64(),
        out.k_accepted,
        out.phases_total
    );
    println!("tso_cost {:?} total {:?} social {:?}", out.tso_cost, out.total_cost, out.social_cost);
    for row in out.prices.iter().rev().take(4) {
        println!("price iter {} dso {} p {:.4} q {:.4}", row.iter, row.dso, row.price_p, row.price_q);
    }
    let case2 = gridcoord::case_io::parse_case(&path).unwrap();
    let t0 = 0;
    for (b, bus) in case2.tso_buses.iter().enumerate() {
        let (re, im) = (out.last.v_re.get(t0, b), out.last.v_im.get(t0, b));
        println!(
            "bus {}: |v|={:.4} ({:.4},{:.4}) vpen={:.4}",
            bus.id,
            (re * re + im * im).sqrt(),
            re,
            im,
            out.last.v_pen.get(t0, b)
        );
    }
    for (j, _) in case2.dsos.iter().enumerate() {
        println!(
            "dso {j}: pt=({:.3},{:.3}) pd=({:.3},{:.3})",
            out.last.pt_p.get(t0, j),
            out.last.pt_q.get(t0, j),
            out.last.pd_p.get(t0, j),
            out.last.pd_q.get(t0, j)
        );
    }
    // rebuild the zone model anchored at the final point and evaluate it
    {
        use gridcoord::subproblems::*;
        let view = CaseView::new(&case2, None).unwrap();
        let duals = &out.final_duals;
        let zm = build_tso_zonal(&view, 0, &out.last, duals, (&out.last.pd_p, &out.last.pd_q), &BuildOpts::default()).unwrap();
        // assemble values of the point for the model's variables
        let mut vals = vec![f64::NAN; zm.model.n_vars()];
        let sol_like = |name: &str| -> Option<f64> {
            for (b, bus) in case2.tso_buses.iter().enumerate() {
                for t in 0..view.nt {
                    if name == format!("vre_b{}_t{t}", bus.id) { return Some(out.last.v_re.get(t, b)); }
                    if name == format!("vim_b{}_t{t}", bus.id) { return Some(out.last.v_im.get(t, b)); }
                    if name == format!("vpen_b{}_t{t}", bus.id) { return Some(out.last.v_pen.get(t, b)); }
                }
            }
            for (l, line) in case2.tso_lines.iter().enumerate() {
                for t in 0..view.nt {
                    if name == format!("fp_l{}_t{t}", line.id) { return Some(out.last.flow_p.get(t, l)); }
                    if name == format!("fq_l{}_t{t}", line.id) { return Some(out.last.flow_q.get(t, l)); }
                }
            }
            None
        };
        for j in 0..zm.model.n_vars() {
            if let Some(v) = sol_like(gridcoord::lp::name_of(&zm.model, j)) { vals[j] = v; }
        }
        for i in 0..zm.model.n_rows() {
            let (coeffs, sense, rhs) = gridcoord::lp::row_of(&zm.model, i);
            if coeffs.iter().any(|&(v, _)| vals[v].is_nan()) { continue; }
            let act: f64 = coeffs.iter().map(|&(v, c)| c * vals[v]).sum();
            let viol = match sense {
                gridcoord::lp::Sense::Le => act - rhs,
                gridcoord::lp::Sense::Ge => rhs - act,
                gridcoord::lp::Sense::Eq => (act - rhs).abs(),
            };
            if viol > 1e-6 {
                println!("REBUILT row {i} violated by {viol:.4e}");
            }
        }
        println!("rebuilt-model check done");
    }
    for row in out.trace.iter().rev().take(6) {
        println!(
            "trace {} {:?} |R|={:.3e} s={:.3e} c={:.3} cp={:.3e} prox={:.3e} L={:.3}",
            row.iter, row.phase, row.residual_norm2, row.s, row.c, row.c_p, row.proximal_norm1, row.surrogate_value
        );
    }
}

#[allow(dead_code)]
fn unused() {}


fn sweep() {
    let base = gridcoord::case_io::parse_case("cases/case1_4bus.json").expect("parse");
    for &c0 in &[5.0, 10.0, 20.0, 30.0] {
        for &s0 in &[0.01, 0.02, 0.05] {
            for &beta in &[1.005, 1.01, 1.025] {
                for &m in &[30.0, 100.0] {
                    let mut case = base.clone();
                    case.params.c0 = c0;
                    case.params.s0 = s0;
                    case.params.beta = beta;
                    case.params.m = m;
                    case.params.max_iter = 250;
                    let config = gridcoord::coordinator::RunConfig::default();
                    match gridcoord::coordinator::run(&case, &config) {
                        Ok(out) => {
                            let (pp, pq) = out
                                .prices
                                .last()
                                .map(|r| (r.price_p, r.price_q))
                                .unwrap_or((f64::NAN, f64::NAN));
                            let feas = out.best.is_some();
                            println!(
                                "c0={c0:<5} s0={s0:<5} beta={beta:<6} M={m:<4} -> term={:?} iters={} feasible={feas} prices=({pp:.2},{pq:.2})",
                                out.termination, out.iterations
                            );
                        }
                        Err(e) => println!("c0={c0} s0={s0} beta={beta} M={m} -> ERROR {e}"),
                    }
                }
            }
        }
    }
}
