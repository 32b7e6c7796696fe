//! Deterministic best-first branch and bound over the binary variables.
//!
//! Nodes are evaluated eagerly on a single live simplex instance: a node
//! switch only swaps the binary bound fixings and continues pivoting from
//! whatever basis is current, so no refactorization is forced by the tree
//! search itself. Branching picks the most fractional binary (ties to the
//! lowest variable index); node ties in the best-first heap break on the
//! lower node id. Commitment-style models with no cost on the binaries
//! usually close at the root thanks to the round-up incumbent heuristic.

use std::collections::BinaryHeap;

use super::simplex::{package, pivot_budget, Instance};
use super::{LpError, LpModel, MilpSolution, Status, INT_TOL};

struct Node {
    fixings: Vec<(u32, u8)>,
    lp_obj: f64,
    branch: u32,
    id: u64,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // BinaryHeap is a max-heap; invert so the pop order is
        // (lowest bound, lowest id).
        other
            .lp_obj
            .total_cmp(&self.lp_obj)
            .then_with(|| other.id.cmp(&self.id))
    }
}

/// Best-first branch and bound on the model's binary variables.
///
/// `gap_tol` is the relative optimality gap; `node_limit` caps evaluated
/// nodes, returning [`Status::IterationLimit`] with the incumbent when hit.
pub fn solve_milp(model: &LpModel, gap_tol: f64, node_limit: usize) -> Result<MilpSolution, LpError> {
    solve_milp_warm(model, gap_tol, node_limit, None).map(|(s, _)| s)
}

/// Branch and bound with a warm root basis; returns the final basis
/// (binaries fixed at the incumbent) for reuse on a re-built model of the
/// same shape.
pub fn solve_milp_warm(
    model: &LpModel,
    gap_tol: f64,
    node_limit: usize,
    warm: Option<&super::BasisSnapshot>,
) -> Result<(MilpSolution, super::BasisSnapshot), LpError> {
    let binaries: Vec<u32> = model.binary_ids().iter().map(|&i| i as u32).collect();
    let orig_bounds: Vec<(f64, f64)> = binaries.iter().map(|&b| model.bounds(b as usize)).collect();
    let mut inst = Instance::from_model(model, crate::exec::parallel_available())?;
    if let Some(b) = warm {
        inst.load_basis(b);
    }
    let budget = pivot_budget(model);

    let apply = |inst: &mut Instance, fixings: &[(u32, u8)]| {
        for (&b, &(lb, ub)) in binaries.iter().zip(&orig_bounds) {
            inst.set_col_bounds(b as usize, lb, ub);
        }
        for &(b, bit) in fixings {
            inst.set_col_bounds(b as usize, bit as f64, bit as f64);
        }
    };

    let frac_branch = |inst: &Instance| -> Option<(u32, f64)> {
        let mut best: Option<(u32, f64)> = None;
        for &b in &binaries {
            let x = inst.col_value(b as usize);
            let frac = (x - x.round()).abs();
            if frac > INT_TOL {
                let score = (x - 0.5).abs();
                if best.map_or(true, |(_, s)| score < s) {
                    best = Some((b, score));
                }
            }
        }
        best
    };

    // Root relaxation.
    let mut node_count = 1usize;
    let root_status = inst.solve(budget)?;
    match root_status {
        Status::Infeasible => {
            return Ok((package(&inst, model, Status::Infeasible, node_count), inst.snapshot()))
        }
        Status::Unbounded => {
            return Ok((package(&inst, model, Status::Unbounded, node_count), inst.snapshot()))
        }
        _ => {}
    }
    let root_obj = inst.primal_objective();

    let mut incumbent: Option<(f64, Vec<u8>)> = None;
    let record_incumbent = |inst: &Instance, incumbent: &mut Option<(f64, Vec<u8>)>| {
        let obj = inst.primal_objective();
        if incumbent.as_ref().map_or(true, |(best, _)| obj < *best) {
            let bits = binaries
                .iter()
                .map(|&b| if inst.col_value(b as usize) >= 0.5 { 1u8 } else { 0u8 })
                .collect();
            *incumbent = Some((obj, bits));
        }
    };

    let mut heap: BinaryHeap<Node> = BinaryHeap::new();
    let mut next_id = 0u64;

    match frac_branch(&inst) {
        None => record_incumbent(&inst, &mut incumbent),
        Some((branch, _)) => {
            // Round-up heuristic: fractional commitments become 1, which can
            // only widen the generation boxes; validity is re-checked by the
            // fixed LP solve.
            let rounded: Vec<(u32, u8)> = binaries
                .iter()
                .map(|&b| {
                    let x = inst.col_value(b as usize);
                    (b, if x > INT_TOL { 1u8 } else { 0u8 })
                })
                .collect();
            apply(&mut inst, &rounded);
            if inst.solve(budget)? == Status::Optimal {
                record_incumbent(&inst, &mut incumbent);
            }
            heap.push(Node { fixings: Vec::new(), lp_obj: root_obj, branch, id: next_id });
            next_id += 1;
        }
    }

    let mut limit_hit = false;
    while let Some(node) = heap.pop() {
        if let Some((best, _)) = &incumbent {
            let gap = (best - node.lp_obj) / best.abs().max(1.0);
            if gap <= gap_tol {
                break; // bound proves the incumbent within tolerance
            }
        }
        if node_count >= node_limit {
            limit_hit = true;
            break;
        }
        for bit in [0u8, 1u8] {
            let mut fixings = node.fixings.clone();
            fixings.push((node.branch, bit));
            apply(&mut inst, &fixings);
            node_count += 1;
            match inst.solve(budget)? {
                Status::Infeasible => continue,
                Status::Optimal => {}
                other => {
                    return Err(LpError::Numerical(format!(
                        "unexpected child node status {other:?} under a bounded root"
                    )))
                }
            }
            let obj = inst.primal_objective();
            if let Some((best, _)) = &incumbent {
                if obj >= *best - 1e-12 * (1.0 + best.abs()) {
                    continue; // dominated
                }
            }
            match frac_branch(&inst) {
                None => record_incumbent(&inst, &mut incumbent),
                Some((branch, _)) => {
                    heap.push(Node { fixings, lp_obj: obj, branch, id: next_id });
                    next_id += 1;
                }
            }
        }
    }

    let Some((_, bits)) = incumbent else {
        let status = if limit_hit { Status::IterationLimit } else { Status::Infeasible };
        return Ok((package(&inst, model, status, node_count), inst.snapshot()));
    };

    // Final re-solve with the binaries fixed at the incumbent: reported
    // duals and the continuous part come from this LP.
    let fixings: Vec<(u32, u8)> = binaries.iter().copied().zip(bits).collect();
    apply(&mut inst, &fixings);
    let final_status = inst.solve(budget)?;
    if final_status != Status::Optimal {
        return Err(LpError::Numerical("incumbent re-solve lost feasibility".into()));
    }
    let status = if limit_hit { Status::IterationLimit } else { Status::Optimal };
    Ok((package(&inst, model, status, node_count), inst.snapshot()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{Sense, VarKind};

    #[test]
    fn binary_floor_rounds_up() {
        let mut m = LpModel::new();
        let x = m.add_var("x", 0.0, 1.0, 1.0, VarKind::Binary);
        m.add_row(vec![(x, 1.0)], Sense::Ge, 0.5);
        let s = solve_milp(&m, 1e-6, 1000).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.primal[x] - 1.0).abs() < 1e-6);
        assert!((s.objective - 1.0).abs() < 1e-9);
    }

    #[test]
    fn two_unit_commitment_toy() {
        // load 100, caps 80/80, marginal costs 10/20: commit both, 80 + 20.
        let mut m = LpModel::new();
        let x1 = m.add_var("x1", 0.0, 1.0, 0.0, VarKind::Binary);
        let x2 = m.add_var("x2", 0.0, 1.0, 0.0, VarKind::Binary);
        let g1 = m.add_var("g1", 0.0, f64::INFINITY, 10.0, VarKind::Continuous);
        let g2 = m.add_var("g2", 0.0, f64::INFINITY, 20.0, VarKind::Continuous);
        m.add_row(vec![(g1, 1.0), (x1, -80.0)], Sense::Le, 0.0);
        m.add_row(vec![(g2, 1.0), (x2, -80.0)], Sense::Le, 0.0);
        m.add_row(vec![(g1, 1.0), (g2, 1.0)], Sense::Eq, 100.0);
        let s = solve_milp(&m, 1e-6, 1000).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.objective - 1200.0).abs() < 1e-6);
        assert!((s.primal[g1] - 80.0).abs() < 1e-6);
        assert!((s.primal[g2] - 20.0).abs() < 1e-6);
        assert!(s.primal[x1] > 0.5 && s.primal[x2] > 0.5);
    }

    #[test]
    fn infeasible_milp() {
        let mut m = LpModel::new();
        let x = m.add_var("x", 0.0, 1.0, 1.0, VarKind::Binary);
        m.add_row(vec![(x, 1.0)], Sense::Ge, 1.5);
        assert_eq!(solve_milp(&m, 1e-6, 100).unwrap().status, Status::Infeasible);
    }

    #[test]
    fn milp_bound_never_beats_relaxation() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let nb = rng.gen_range(1..6);
            let mut m = LpModel::new();
            let xs: Vec<usize> = (0..nb)
                .map(|j| m.add_var(format!("b{j}"), 0.0, 1.0, rng.gen_range(-4.0..4.0), VarKind::Binary))
                .collect();
            let y = m.add_var("y", 0.0, 3.0, rng.gen_range(-2.0..0.0), VarKind::Continuous);
            let mut coeffs: Vec<(usize, f64)> = xs.iter().map(|&x| (x, rng.gen_range(0.2..2.0))).collect();
            coeffs.push((y, 1.0));
            m.add_row(coeffs, Sense::Le, rng.gen_range(1.0..4.0));
            let lp = crate::lp::solve_lp(&m).unwrap();
            let mip = solve_milp(&m, 1e-9, 10_000).unwrap();
            if lp.status == Status::Optimal && mip.status == Status::Optimal {
                assert!(mip.objective >= lp.objective - 1e-7 * (1.0 + lp.objective.abs()));
            }
        }
    }

    #[test]
    fn determinism_bitwise() {
        let mut m = LpModel::new();
        let xs: Vec<usize> =
            (0..8).map(|j| m.add_var(format!("b{j}"), 0.0, 1.0, (j as f64) - 3.5, VarKind::Binary)).collect();
        let coeffs: Vec<(usize, f64)> = xs.iter().enumerate().map(|(k, &x)| (x, 1.0 + k as f64)).collect();
        m.add_row(coeffs, Sense::Ge, 11.0);
        let a = solve_milp(&m, 1e-9, 10_000).unwrap();
        let b = solve_milp(&m, 1e-9, 10_000).unwrap();
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
        for (p, q) in a.primal.iter().zip(&b.primal) {
            assert_eq!(p.to_bits(), q.to_bits());
        }
    }
}
