//! External MILP command escape hatch.
//!
//! When configured, the model is written to a temporary file in LP text
//! format and a user-supplied command is invoked as
//! `<command> <model.lp> <solution.txt>`. The command writes the primal
//! solution as plain text, one `variable_name value` pair per line
//! (unknown names are an error, missing variables default to 0), and
//! signals the status through its exit code: 0 optimal, 1 infeasible,
//! 2 unbounded. Duals are not transported; the embedded solver remains
//! the source of dual information.

use std::path::PathBuf;
use std::process::Command;
use std::sync::atomic::{AtomicU64, Ordering};

use super::{LpError, LpModel, MilpSolution, Status};

static TEMP_SEQ: AtomicU64 = AtomicU64::new(0);

/// A user-supplied MILP command (program plus leading arguments,
/// whitespace separated).
#[derive(Debug, Clone)]
pub struct ExternalSolver {
    pub command: String,
}

impl ExternalSolver {
    pub fn new(command: impl Into<String>) -> Self {
        Self { command: command.into() }
    }

    fn temp_pair(&self) -> (PathBuf, PathBuf) {
        let seq = TEMP_SEQ.fetch_add(1, Ordering::Relaxed);
        let pid = std::process::id();
        let dir = std::env::temp_dir();
        (
            dir.join(format!("gridcoord_{pid}_{seq}.lp")),
            dir.join(format!("gridcoord_{pid}_{seq}.sol")),
        )
    }

    pub fn solve(&self, model: &LpModel) -> Result<MilpSolution, LpError> {
        model.validate()?;
        let (lp_path, sol_path) = self.temp_pair();
        let text = crate::case_io::lp_format::write_lp_string(model);
        std::fs::write(&lp_path, text).map_err(|e| LpError::External(format!("write lp: {e}")))?;

        let mut parts = self.command.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| LpError::External("empty external solver command".into()))?;
        let output = Command::new(program)
            .args(parts)
            .arg(&lp_path)
            .arg(&sol_path)
            .output()
            .map_err(|e| LpError::External(format!("spawn `{program}`: {e}")))?;

        let status = match output.status.code() {
            Some(0) => Status::Optimal,
            Some(1) => Status::Infeasible,
            Some(2) => Status::Unbounded,
            code => {
                let stderr = String::from_utf8_lossy(&output.stderr);
                let _ = std::fs::remove_file(&lp_path);
                let _ = std::fs::remove_file(&sol_path);
                return Err(LpError::External(format!(
                    "command exited with {code:?}: {}",
                    stderr.trim()
                )));
            }
        };

        let mut primal = vec![0.0; model.n_vars()];
        if status == Status::Optimal {
            let body = std::fs::read_to_string(&sol_path)
                .map_err(|e| LpError::External(format!("read solution: {e}")))?;
            for (ln, line) in body.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let mut it = line.split_whitespace();
                let (Some(name), Some(val)) = (it.next(), it.next()) else {
                    return Err(LpError::External(format!("solution line {} malformed", ln + 1)));
                };
                let id = model
                    .var_id(name)
                    .ok_or_else(|| LpError::UnknownVariable(name.to_string()))?;
                primal[id] = val
                    .parse::<f64>()
                    .map_err(|e| LpError::External(format!("solution line {}: {e}", ln + 1)))?;
            }
        }
        let _ = std::fs::remove_file(&lp_path);
        let _ = std::fs::remove_file(&sol_path);

        let objective = if status == Status::Optimal {
            model.objective_value(&primal)
        } else {
            f64::NAN
        };
        Ok(MilpSolution {
            status,
            objective,
            primal,
            duals: vec![0.0; model.n_rows()],
            node_count: 0,
            simplex_iterations: 0,
        })
    }
}
