//! Optimization primitives: a dense LP solver and concave maximization over
//! the probability simplex.

pub mod concave;
pub mod lp;

pub use concave::{maximize_concave, ConcaveMax, ConcaveOptions};
pub use lp::{solve_lp, LinearProgram, LpBuilder, LpSolution, SolveStatus, VarBound};
