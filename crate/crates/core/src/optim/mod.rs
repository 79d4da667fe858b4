//! Linear modelling layer and the MILP solver used by both stages.

mod model;
mod polygon;
mod solver;

pub use model::{Constraint, Integrality, LinearModel, ObjectiveSense, Sense, VarId, Variable};
pub use polygon::{add_polygon_ball, polygon_contains, polygon_faces, HalfPlane};
pub use solver::{
    solve_lp, solve_milp, solve_milp_with, MilpOptions, MilpSolution, SolveStatus, SolverStats,
    DEFAULT_GAP, FEASIBILITY_TOL, INTEGRALITY_TOL,
};
