//! GP solvers for the 2D Poisson equation and the 1D viscous Burgers
//! equation.

mod burgers;
mod poisson;
mod reference;

pub use burgers::{
    step_observations, StepLog,
    backward_euler_operators, burgers_linearized_operator, burgers_march, burgers_step, initial_state, BurgersHistory,
    BurgersRecord, BurgersRun, StepOutput, TimeStepState, VISCOSITY,
};
pub use poisson::{
    cut_line, poisson_observations, poisson_solve, test_grid, CutLine, FabricatedSolution, PoissonNoise,
    PoissonProblem, PoissonSolution,
};
pub use reference::{burgers_reference, burgers_reference_with, REFERENCE_NODES};

use crate::error::{check_dim, Error, Result};

/// `‖approx − exact‖₂ / ‖exact‖₂`.
pub fn relative_l2_error(approx: &[f64], exact: &[f64]) -> Result<f64> {
    check_dim(exact.len(), approx.len())?;
    let norm = exact.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::Input("reference solution has zero norm".into()));
    }
    let diff = approx
        .iter()
        .zip(exact)
        .map(|(a, e)| (a - e) * (a - e))
        .sum::<f64>()
        .sqrt();
    Ok(diff / norm)
}
