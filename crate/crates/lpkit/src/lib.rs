//! Linear and mixed-integer programming for desk-scale models.
//!
//! [`solve_lp`] runs a bounded-variable revised simplex; [`solve_mip`] wraps it
//! in best-first branch and bound. Duals follow `d = c - A'y`, so a binding
//! `>=` row of a minimization has a nonnegative dual.

mod mip;
mod model;
mod mps;
mod simplex;

pub use mip::{solve_mip, solve_mip_with, BuiltinSolver, Heuristic, MilpSolver, MipOptions, MipSolution, MipStatus};
pub use model::{LinearProgram, RowSense};
pub use mps::write_mps;
pub use simplex::{Basis, LpStatus};

use simplex::{Engine, Prepared};

/// Primal feasibility tolerance.
pub const FEAS_TOL: f64 = 1e-7;
/// Reduced-cost optimality tolerance.
pub const OPT_TOL: f64 = 1e-7;
/// Distance from the nearest integer below which a value counts as integral.
pub const INT_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub basis: Option<Basis>,
}

impl LpSolution {
    fn failed(status: LpStatus, lp: &LinearProgram, iterations: usize) -> Self {
        LpSolution {
            status,
            x: vec![0.0; lp.num_vars()],
            duals: vec![0.0; lp.num_rows()],
            reduced_costs: vec![0.0; lp.num_vars()],
            objective: f64::NAN,
            iterations,
            basis: None,
        }
    }

    /// `b'y` plus the bound terms `l_j d_j` / `u_j d_j` of nonbasic columns.
    pub fn dual_objective(&self, lp: &LinearProgram) -> f64 {
        let mut v = lp.objective_offset + lp.rhs.iter().zip(&self.duals).map(|(b, y)| b * y).sum::<f64>();
        for j in 0..lp.num_vars() {
            let d = self.reduced_costs[j];
            if d > 0.0 && lp.lower[j].is_finite() {
                v += d * lp.lower[j];
            } else if d < 0.0 && lp.upper[j].is_finite() {
                v += d * lp.upper[j];
            }
        }
        v
    }
}

/// Solves the continuous relaxation (integrality marks are ignored).
pub fn solve_lp(lp: &LinearProgram) -> LpSolution {
    solve_lp_from(lp, None)
}

/// As [`solve_lp`], starting from `basis` when it fits the model.
pub fn solve_lp_from(lp: &LinearProgram, basis: Option<&Basis>) -> LpSolution {
    if lp.validate().is_err() {
        return LpSolution::failed(LpStatus::Invalid, lp, 0);
    }
    let prepared = Prepared::new(lp);
    let mut engine = Engine::new(&prepared);
    if let Some(b) = basis {
        engine.load_basis(b);
    }
    let status = engine.run();
    if status != LpStatus::Optimal {
        return LpSolution::failed(status, lp, engine.iterations);
    }
    LpSolution {
        status,
        x: engine.x().to_vec(),
        duals: engine.row_duals(),
        reduced_costs: engine.reduced_costs(),
        objective: engine.objective() + lp.objective_offset,
        iterations: engine.iterations,
        basis: Some(engine.basis()),
    }
}
