//! Small dense numerical kernels: a two-phase simplex LP solver and the
//! Euclidean projections used by the projected ascent steps.

mod projection;
mod simplex;

pub use projection::{
    project_l1_ball, project_simplex, project_tv_ball, project_tv_ball_dykstra, TvProjection,
};
pub use simplex::{solve_lp, LinearProgram, LpSolution, LpStatus, PIVOT_TOL};
