//! Regularized primal-dual OPF: configuration, projections, the gradient
//! operator, the centralized iteration, and convergence constants.

mod config;
mod constants;
mod problem;
mod projection;
mod solver;
pub mod update;

pub use config::{Mode, SolverConfig, VoltageLimits};
pub use constants::{estimate_constants, ConvergenceConstants};
pub use problem::{IterateState, OpfProblem, Tangent};
pub use projection::project_feasible;
pub(crate) use solver::stepsize_warnings;
pub use solver::{
    drive, primal_dual_step, solve_centralized, CentralEngine, Engine, SolveResult, SolveWarning, Status,
    TrajectoryRow,
};
