//! LP text format writer (CPLEX-style), used for solver interop and the
//! external-solver escape hatch. Variable names come straight from the
//! model, so exports are stable across runs.

use std::fmt::Write as _;

use crate::lp::{LpModel, Sense};

fn num(x: f64) -> String {
    // shortest representation that round-trips f64
    format!("{x}")
}

fn write_terms(out: &mut String, coeffs: &[(usize, f64)], model: &LpModel) {
    let mut first = true;
    for &(v, c) in coeffs {
        if c == 0.0 {
            continue;
        }
        if first {
            if c < 0.0 {
                out.push_str("- ");
            }
            first = false;
        } else if c < 0.0 {
            out.push_str(" - ");
        } else {
            out.push_str(" + ");
        }
        let a = c.abs();
        if a != 1.0 {
            let _ = write!(out, "{} ", num(a));
        }
        out.push_str(model.var_name(v));
    }
    if first {
        out.push('0');
    }
}

/// Render the model as LP format text with Minimize / Subject To /
/// Bounds / Binaries sections (a General section would follow the same
/// pattern; this model only carries binary marks).
pub fn write_lp_string(model: &LpModel) -> String {
    let mut out = String::new();
    out.push_str("\\ gridcoord LP export\n");
    out.push_str("Minimize\n obj: ");
    let obj_terms: Vec<(usize, f64)> = (0..model.n_vars())
        .map(|j| (j, model.vars[j].obj))
        .filter(|&(_, c)| c != 0.0)
        .collect();
    write_terms(&mut out, &obj_terms, model);
    out.push('\n');
    out.push_str("Subject To\n");
    for (i, row) in model.rows.iter().enumerate() {
        let _ = write!(out, " c{i}: ");
        write_terms(&mut out, &row.coeffs, model);
        let op = match row.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        let _ = writeln!(out, " {} {}", op, num(row.rhs));
    }
    out.push_str("Bounds\n");
    for j in 0..model.n_vars() {
        let v = &model.vars[j];
        let name = model.var_name(j);
        let line = match (v.lb.is_finite(), v.ub.is_finite()) {
            (true, true) if v.lb == v.ub => format!(" {name} = {}", num(v.lb)),
            (true, true) => format!(" {} <= {name} <= {}", num(v.lb), num(v.ub)),
            (true, false) => format!(" {name} >= {}", num(v.lb)),
            (false, true) => format!(" -inf <= {name} <= {}", num(v.ub)),
            (false, false) => format!(" {name} free"),
        };
        out.push_str(&line);
        out.push('\n');
    }
    let binaries: Vec<usize> = model.binary_ids();
    if !binaries.is_empty() {
        out.push_str("Binaries\n");
        for b in binaries {
            let _ = writeln!(out, " {}", model.var_name(b));
        }
    }
    out.push_str("End\n");
    out
}
