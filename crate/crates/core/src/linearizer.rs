//! Dynamic linearization devices for the coordination loop.
//!
//! The transmission subproblems stay linear through four devices, all
//! anchored at the previous accepted iterate:
//!
//! - bilinear AC branch flows are replaced by the average of the two
//!   one-sided linearizations (fix sending-end voltages, fix
//!   receiving-end voltages, take the mean), which is exact whenever the
//!   solution sits at the anchor;
//! - two-norm caps (voltage ceiling, line MVA, interface PQ) are squared
//!   and point-linearized at the anchor;
//! - the lower voltage bound becomes a soft constraint with a penalized
//!   slack so iterates inside the inner circle stay feasible;
//! - absolute-value objective terms expand through the standard
//!   epigraph construction.
//!
//! Distribution feeders keep their convex quadratic rows (rotated cone,
//! apparent-power disks) and are solved by supporting-hyperplane cuts;
//! [`soc_supporting_cut`] produces the gradient cut and
//! [`cone_boundary_point`] backtracks a violated iterate onto the cone
//! surface, where the gradient cut is a genuine supporting hyperplane.

use crate::lp::Sense;

/// Tolerance below which a quadratic violation is not worth cutting.
pub const CUT_TOL: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum LinearizeError {
    #[error("anchor value is not finite")]
    NonFiniteAnchor,
    #[error("cone arguments must be nonnegative (v = {v}, a = {a})")]
    NegativeConeArg { v: f64, a: f64 },
}

/// Linear expression over named model variables plus a constant.
#[derive(Debug, Clone, Default)]
pub struct LinExpr {
    pub coeffs: Vec<(String, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn var(name: impl Into<String>) -> Self {
        LinExpr { coeffs: vec![(name.into(), 1.0)], constant: 0.0 }
    }

    pub fn constant(c: f64) -> Self {
        LinExpr { coeffs: Vec::new(), constant: c }
    }

    pub fn term(mut self, name: impl Into<String>, c: f64) -> Self {
        self.coeffs.push((name.into(), c));
        self
    }

    pub fn offset(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn value(&self, lookup: impl Fn(&str) -> f64) -> f64 {
        self.constant + self.coeffs.iter().map(|(n, c)| c * lookup(n)).sum::<f64>()
    }
}

/// One linear constraint over named variables.
#[derive(Debug, Clone)]
pub struct LinearCut {
    pub coeffs: Vec<(String, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl LinearCut {
    /// Activity minus rhs with the given variable values (positive =
    /// violated for `<=` cuts).
    pub fn violation(&self, lookup: impl Fn(&str) -> f64) -> f64 {
        let act: f64 = self.coeffs.iter().map(|(n, c)| c * lookup(n)).sum();
        match self.sense {
            Sense::Le => act - self.rhs,
            Sense::Ge => self.rhs - act,
            Sense::Eq => (act - self.rhs).abs(),
        }
    }
}

/// Variable names for one branch-flow linearization.
#[derive(Debug, Clone)]
pub struct FlowVars {
    pub f_p: String,
    pub f_q: String,
    pub vs_re: String,
    pub vs_im: String,
    pub vr_re: String,
    pub vr_im: String,
}

/// Averaged fixed-partner linearization of the rectangular AC branch
/// flows. `g`/`b` are the line coupling admittances (already on the MW
/// scale used by the model), `anchor_s`/`anchor_r` the previous-iterate
/// voltages at the sending and receiving ends. Returns the equality cuts
/// defining the active and reactive flow variables.
pub fn linearize_flow(
    g: f64,
    b: f64,
    anchor_s: (f64, f64),
    anchor_r: (f64, f64),
    vars: &FlowVars,
) -> Result<(LinearCut, LinearCut), LinearizeError> {
    let (a1, a2) = anchor_s;
    let (b1, b2) = anchor_r;
    if !(a1.is_finite() && a2.is_finite() && b1.is_finite() && b2.is_finite()) {
        return Err(LinearizeError::NonFiniteAnchor);
    }
    // active power: f_p = 1/2 a.M.(vr)' + 1/2 vs.M.(anchor_r)', M = [[g,-b],[b,g]]
    let p_cut = LinearCut {
        coeffs: vec![
            (vars.f_p.clone(), 1.0),
            (vars.vr_re.clone(), -0.5 * (a1 * g + a2 * b)),
            (vars.vr_im.clone(), -0.5 * (a2 * g - a1 * b)),
            (vars.vs_re.clone(), -0.5 * (g * b1 - b * b2)),
            (vars.vs_im.clone(), -0.5 * (b * b1 + g * b2)),
        ],
        sense: Sense::Eq,
        rhs: 0.0,
    };
    // reactive power: same construction with M = [[-b,-g],[g,-b]]
    let q_cut = LinearCut {
        coeffs: vec![
            (vars.f_q.clone(), 1.0),
            (vars.vr_re.clone(), -0.5 * (a2 * g - a1 * b)),
            (vars.vr_im.clone(), 0.5 * (a1 * g + a2 * b)),
            (vars.vs_re.clone(), 0.5 * (b * b1 + g * b2)),
            (vars.vs_im.clone(), -0.5 * (g * b1 - b * b2)),
        ],
        sense: Sense::Eq,
        rhs: 0.0,
    };
    Ok((p_cut, q_cut))
}

/// True bilinear branch flows at a voltage pair (the nonlinear model the
/// cuts above approximate).
pub fn true_flow(g: f64, b: f64, vs: (f64, f64), vr: (f64, f64)) -> (f64, f64) {
    let cosish = vs.0 * vr.0 + vs.1 * vr.1;
    let sinish = vs.1 * vr.0 - vs.0 * vr.1;
    (g * cosish + b * sinish, -b * cosish + g * sinish)
}

/// Point linearization of a squared two-norm cap: the quadratic
/// `sum x_d^2 <= bound^2` becomes `sum anchor_d * x_d <= bound^2`.
/// Not globally valid; the coordination loop re-anchors every accepted
/// iterate instead.
pub fn linearize_quadratic_cap(anchor: &[f64], names: &[String], bound: f64) -> LinearCut {
    debug_assert_eq!(anchor.len(), names.len());
    debug_assert!(bound > 0.0);
    LinearCut {
        coeffs: names.iter().cloned().zip(anchor.iter().copied()).collect(),
        sense: Sense::Le,
        rhs: bound * bound,
    }
}

/// Soft lower voltage bound with a penalized slack:
/// `vmin^2 - vpen <= anchor_re * v_re + anchor_im * v_im`.
/// Returns the cut together with the slack name it references, which the
/// caller registers for flexible penalization.
pub fn soft_lower_voltage(
    v_min: f64,
    anchor: (f64, f64),
    v_re: &str,
    v_im: &str,
    v_pen: &str,
) -> (LinearCut, String) {
    let cut = LinearCut {
        coeffs: vec![
            (v_re.to_string(), -anchor.0),
            (v_im.to_string(), -anchor.1),
            (v_pen.to_string(), -1.0),
        ],
        sense: Sense::Le,
        rhs: -v_min * v_min,
    };
    (cut, v_pen.to_string())
}

/// Standard epigraph expansion of an l1 objective term: for each
/// expression e an auxiliary u with u >= e and u >= -e; minimizing the
/// sum of the u's yields the norm. Auxiliaries are named
/// `{prefix}_{index}`.
pub fn l1_epigraph(prefix: &str, terms: &[LinExpr]) -> (Vec<String>, Vec<LinearCut>) {
    let mut aux = Vec::with_capacity(terms.len());
    let mut cuts = Vec::with_capacity(2 * terms.len());
    for (i, e) in terms.iter().enumerate() {
        let u = format!("{prefix}_{i}");
        let mut up = e.coeffs.clone();
        up.push((u.clone(), -1.0));
        cuts.push(LinearCut { coeffs: up, sense: Sense::Le, rhs: -e.constant });
        let mut dn: Vec<(String, f64)> = e.coeffs.iter().map(|(n, c)| (n.clone(), -c)).collect();
        dn.push((u.clone(), -1.0));
        cuts.push(LinearCut { coeffs: dn, sense: Sense::Le, rhs: e.constant });
        aux.push(u);
    }
    (aux, cuts)
}

/// Linear slots the cone cut is expressed over: each of p, q, v, a may be
/// any affine expression of model variables (constants allowed, e.g. a
/// fixed radius for an apparent-power disk).
#[derive(Debug, Clone)]
pub struct ConeSlots {
    pub p: LinExpr,
    pub q: LinExpr,
    pub v: LinExpr,
    pub a: LinExpr,
}

/// Gradient cut of `h = p^2 + q^2 - v*a` at `point = (p, q, v, a)`:
/// `h0 + 2p dp + 2q dq - a dv - v da <= 0`. Returns `None` when the point
/// satisfies the cone within [`CUT_TOL`].
pub fn soc_supporting_cut(
    point: (f64, f64, f64, f64),
    slots: &ConeSlots,
) -> Result<Option<LinearCut>, LinearizeError> {
    let (p, q, v, a) = point;
    if v < 0.0 || a < 0.0 {
        return Err(LinearizeError::NegativeConeArg { v, a });
    }
    let h0 = p * p + q * q - v * a;
    if h0 <= CUT_TOL {
        return Ok(None);
    }
    Ok(Some(cone_cut_at(point, slots)))
}

/// The gradient cut at an arbitrary anchor, with no violation check.
/// It is a genuine supporting hyperplane of the rotated cone exactly when
/// the anchor lies on the cone surface (see [`cone_boundary_point`]);
/// the feeder solve loop anchors there before cutting.
pub fn cone_cut_at(point: (f64, f64, f64, f64), slots: &ConeSlots) -> LinearCut {
    let (p, q, v, a) = point;
    let h0 = p * p + q * q - v * a;
    // 2p*P + 2q*Q - a*V - v*A <= h0, constants folded into the rhs
    let mut coeffs: Vec<(String, f64)> = Vec::new();
    let mut rhs = h0;
    let push = |expr: &LinExpr, w: f64, coeffs: &mut Vec<(String, f64)>, rhs: &mut f64| {
        for (n, c) in &expr.coeffs {
            coeffs.push((n.clone(), w * c));
        }
        *rhs -= w * expr.constant;
    };
    push(&slots.p, 2.0 * p, &mut coeffs, &mut rhs);
    push(&slots.q, 2.0 * q, &mut coeffs, &mut rhs);
    push(&slots.v, -a, &mut coeffs, &mut rhs);
    push(&slots.a, -v, &mut coeffs, &mut rhs);
    coeffs.retain(|&(_, c)| c != 0.0);
    LinearCut { coeffs, sense: Sense::Le, rhs }
}

/// Backtrack a cone-violating point onto the cone surface along the
/// segment toward an interior reference with the same voltage, zero flow
/// and enough current headroom. Gradient cuts anchored on the surface
/// never exclude cone-feasible points.
pub fn cone_boundary_point(p: f64, q: f64, v: f64, a: f64) -> (f64, f64, f64, f64) {
    let pq2 = p * p + q * q;
    if pq2 <= 0.0 {
        return (p, q, v, a);
    }
    let zv = v.max(0.5);
    let za = a.max(0.0) + pq2 / zv + 1.0;
    // along the segment: p(t) = t p, q(t) = t q, v(t) = zv + t (v - zv),
    // a(t) = za + t (a - za); solve h(t) = 0 for the root in (0, 1].
    let ca = pq2 - (v - zv) * (a - za);
    let cb = -(zv * (a - za) + za * (v - zv));
    let cc = -zv * za;
    let t = if ca.abs() < 1e-14 {
        (-cc / cb).clamp(0.0, 1.0)
    } else {
        let disc = (cb * cb - 4.0 * ca * cc).max(0.0).sqrt();
        let t1 = (-cb + disc) / (2.0 * ca);
        let t2 = (-cb - disc) / (2.0 * ca);
        let mut t = f64::INFINITY;
        for cand in [t1, t2] {
            if cand > 0.0 && cand <= 1.0 + 1e-12 && cand < t {
                t = cand;
            }
        }
        if t.is_finite() {
            t.min(1.0)
        } else {
            1.0
        }
    };
    (t * p, t * q, zv + t * (v - zv), za + t * (a - za))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn names() -> FlowVars {
        FlowVars {
            f_p: "fp".into(),
            f_q: "fq".into(),
            vs_re: "vsre".into(),
            vs_im: "vsim".into(),
            vr_re: "vrre".into(),
            vr_im: "vrim".into(),
        }
    }

    fn eval(cut: &LinearCut, vals: &HashMap<&str, f64>) -> f64 {
        cut.coeffs.iter().map(|(n, c)| c * vals[n.as_str()]).sum()
    }

    #[test]
    fn flow_zero_at_flat_anchor() {
        let (pc, _) = linearize_flow(0.0, -10.0, (1.0, 0.0), (1.0, 0.0), &names()).unwrap();
        // at v = anchor the cut defines f_p = 0
        let vals: HashMap<&str, f64> =
            [("fp", 0.0), ("vsre", 1.0), ("vsim", 0.0), ("vrre", 1.0), ("vrim", 0.0)].into();
        assert!(eval(&pc, &vals).abs() < 1e-12);
        let (tp, _) = true_flow(0.0, -10.0, (1.0, 0.0), (1.0, 0.0));
        assert_eq!(tp, 0.0);
    }

    #[test]
    fn flow_with_angle_difference() {
        // theta ~ 0.1 rad at the receiving end, pure susceptance line
        let vr = (0.995, 0.0998);
        let (tp, _) = true_flow(0.0, -10.0, (1.0, 0.0), vr);
        assert!((tp - 0.998).abs() < 1e-9, "got {tp}");
    }

    #[test]
    fn flow_cut_exact_at_anchor_randomized() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let vars = names();
        for _ in 0..1000 {
            let g = rng.gen_range(-30.0..30.0);
            let b = rng.gen_range(-30.0..30.0);
            let vs = (rng.gen_range(0.9..1.1), rng.gen_range(-0.2..0.2));
            let vr = (rng.gen_range(0.9..1.1), rng.gen_range(-0.2..0.2));
            let (tp, tq) = true_flow(g, b, vs, vr);
            let (pc, qc) = linearize_flow(g, b, vs, vr, &vars).unwrap();
            let vals: HashMap<&str, f64> = [
                ("fp", tp),
                ("fq", tq),
                ("vsre", vs.0),
                ("vsim", vs.1),
                ("vrre", vr.0),
                ("vrim", vr.1),
            ]
            .into();
            assert!(eval(&pc, &vals).abs() <= 1e-12, "p cut not exact at anchor");
            assert!(eval(&qc, &vals).abs() <= 1e-12, "q cut not exact at anchor");
        }
    }

    #[test]
    fn quadratic_cap_examples() {
        let cut = linearize_quadratic_cap(&[0.9, 0.1], &["x1".to_string(), "x2".to_string()], 1.1);
        assert_eq!(cut.coeffs[0].1, 0.9);
        assert_eq!(cut.coeffs[1].1, 0.1);
        assert!((cut.rhs - 1.21).abs() < 1e-15);

        // anchor on the circle satisfies its own cut with equality
        let on = linearize_quadratic_cap(&[3.0, 4.0], &["a".to_string(), "b".to_string()], 5.0);
        let act = 3.0 * 3.0 + 4.0 * 4.0;
        assert_eq!(act, on.rhs);
        // an exterior test point may still satisfy the cut: (5, 0) gives 15 <= 25;
        // the loop re-anchors rather than relying on global validity
        assert!(3.0 * 5.0 + 4.0 * 0.0 <= on.rhs);
    }

    #[test]
    fn soft_lower_voltage_examples() {
        let (cut, slack) = soft_lower_voltage(0.9, (1.0, 0.0), "vre", "vim", "vpen");
        assert_eq!(slack, "vpen");
        // at v = (1, 0) and vpen = 0 the cut holds: -(1.0) - 0 <= -0.81
        let vals: HashMap<&str, f64> = [("vre", 1.0), ("vim", 0.0), ("vpen", 0.0)].into();
        assert!(eval(&cut, &vals) <= cut.rhs + 1e-12);
        // anchored inside the inner circle the slack must cover the gap
        let (cut2, _) = soft_lower_voltage(0.9, (0.5, 0.0), "vre", "vim", "vpen");
        // at v = anchor: -0.25 - vpen <= -0.81 -> vpen >= 0.56
        let need = 0.81 - 0.25;
        let vals2: HashMap<&str, f64> = [("vre", 0.5), ("vim", 0.0), ("vpen", need)].into();
        assert!(eval(&cut2, &vals2) <= cut2.rhs + 1e-12);
        let vals3: HashMap<&str, f64> = [("vre", 0.5), ("vim", 0.0), ("vpen", need - 1e-6)].into();
        assert!(eval(&cut2, &vals3) > cut2.rhs);
        // vmin = 0 is vacuous with vpen = 0
        let (cut3, _) = soft_lower_voltage(0.0, (1.0, 0.0), "vre", "vim", "vpen");
        let vals4: HashMap<&str, f64> = [("vre", 1.0), ("vim", 0.0), ("vpen", 0.0)].into();
        assert!(eval(&cut3, &vals4) <= cut3.rhs + 1e-12);
    }

    #[test]
    fn cone_cut_matches_hand_gradient() {
        let slots = ConeSlots {
            p: LinExpr::var("p"),
            q: LinExpr::var("q"),
            v: LinExpr::var("v"),
            a: LinExpr::var("a"),
        };
        let cut = soc_supporting_cut((3.0, 4.0, 1.0, 20.0), &slots).unwrap().unwrap();
        // 6p + 8q - 20v - a <= 5
        let m: HashMap<&str, f64> = cut.coeffs.iter().map(|(n, c)| (n.as_str(), *c)).collect();
        assert_eq!(m["p"], 6.0);
        assert_eq!(m["q"], 8.0);
        assert_eq!(m["v"], -20.0);
        assert_eq!(m["a"], -1.0);
        assert!((cut.rhs - 5.0).abs() < 1e-12);

        assert!(soc_supporting_cut((0.0, 0.0, 1.0, 1.0), &slots).unwrap().is_none());
        assert!(soc_supporting_cut((1.0, 0.0, -0.1, 1.0), &slots).is_err());
    }

    #[test]
    fn boundary_points_sit_on_the_cone() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..500 {
            let p = rng.gen_range(-8.0..8.0);
            let q = rng.gen_range(-8.0..8.0);
            let v = rng.gen_range(0.8..1.3);
            if p * p + q * q < 1e-9 {
                continue;
            }
            let a = rng.gen_range(0.0..(p * p + q * q) / v); // guaranteed violated or on edge
            let (bp, bq, bv, ba) = cone_boundary_point(p, q, v, a);
            let h = bp * bp + bq * bq - bv * ba;
            assert!(h.abs() <= 1e-8 * (1.0 + bp * bp + bq * bq), "h = {h}");
        }
    }

    #[test]
    fn boundary_anchored_cuts_never_exclude_cone_points() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(33);
        let slots = ConeSlots {
            p: LinExpr::var("p"),
            q: LinExpr::var("q"),
            v: LinExpr::var("v"),
            a: LinExpr::var("a"),
        };
        let mut cuts = 0;
        for _ in 0..400 {
            // violated iterate inside realistic feeder boxes
            let p = rng.gen_range(-6.0..6.0);
            let q = rng.gen_range(-6.0..6.0);
            let v = rng.gen_range(0.81..1.21);
            let a = rng.gen_range(0.0..2.0);
            if p * p + q * q <= v * a + CUT_TOL {
                continue;
            }
            let anchor = cone_boundary_point(p, q, v, a);
            let cut = cone_cut_at(anchor, &slots);
            cuts += 1;
            for _ in 0..50 {
                // sample feasible points in the nonnegative box
                let tv = rng.gen_range(0.81..1.21);
                let ta = rng.gen_range(0.0..3.0);
                let rad = f64::sqrt(tv * ta);
                let ang: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let frac: f64 = rng.gen_range(0.0..1.0);
                let tp = frac * rad * ang.cos();
                let tq = frac * rad * ang.sin();
                let vals: HashMap<&str, f64> = [("p", tp), ("q", tq), ("v", tv), ("a", ta)].into();
                let act = eval(&cut, &vals);
                assert!(
                    act <= cut.rhs + 1e-7,
                    "boundary cut excluded a feasible point: act {act} rhs {}",
                    cut.rhs
                );
            }
        }
        assert!(cuts > 50, "sampler generated too few cuts ({cuts})");
    }
}
