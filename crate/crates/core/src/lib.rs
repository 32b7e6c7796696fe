//! Coordinated operational planning for one transmission system operator
//! (TSO) and multiple distribution system operators (DSOs).
//!
//! The solver decomposes the multi-period TSO-DSO planning problem into
//! zonal transmission subproblems and per-feeder distribution subproblems,
//! relaxes the coupling constraints (nodal balances and interface power
//! exchange), and coordinates the pieces with a surrogate Lagrangian
//! relaxation loop. Nonlinear AC power flow at the transmission level is
//! handled by dynamic linearization anchored at the previous accepted
//! iterate, with l1-proximal terms that pull re-linearized solutions onto
//! the true nonlinear manifold. Distribution feeders use the second-order
//! cone branch-flow model, solved by supporting-hyperplane cuts on top of
//! the embedded LP/MILP core.
//!
//! Crate layout:
//! - [`model`] — validated problem instances and derived electrical data
//! - [`case_io`] — JSON case format, solution/trace writers, LP export
//! - [`lp`] — sparse LP/MILP container, simplex, branch and bound
//! - [`linearizer`] — the dynamic linearization devices
//! - [`subproblems`] — zonal TSO and DSO model assembly, surrogate values
//! - [`coordinator`] — the multiplier/stepsize/penalty coordination loop
//! - [`oracle`] — brute-force references and the Monte Carlo harness

pub mod case_io;
pub mod coordinator;
pub mod exec;
pub mod linearizer;
pub mod lp;
pub mod model;
pub mod oracle;
pub mod subproblems;

pub use coordinator::{run, run_uncoordinated, RunConfig, RunResult};
pub use model::{GridCase, ValidationError};
