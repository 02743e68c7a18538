//! The local constrained least-squares problem and its correctors.

pub mod filter;
pub mod landscape;
pub mod linalg;
pub mod objective;
pub mod problem;
pub mod solver;

pub use filter::FilterState;
pub use landscape::{landscape_scan, local_minima, LandscapePoint, LandscapeSpec, UnphysicalPolicy};
pub use objective::{phi, residual};
pub use problem::{assemble, complete_state, ActiveSetState, NlpProblem, ProgressVariableSpec, Residuals};
pub use solver::{
    ggn_solve, newton_kkt_solve, restore_feasibility, soc_step, solve, solve_clls, solve_with_active,
    IterationLog, KktSolution, Method, SolverOptions, Status,
};
