//! Small MILP toolkit: model container, sparse LU, bounded simplex,
//! presolve, branch-and-bound, brute-force oracle and MPS I/O.

pub mod branch;
pub mod brute;
pub(crate) mod lu;
pub mod model;
pub mod mps;
pub mod presolve;
pub mod simplex;

pub use branch::{solve_lp, solve_milp, BbOptions, Completion};
pub use brute::brute_force;
pub use model::{Constraint, FillGroup, Model, Sense, Solution, Status, VarKind, Variable};
pub use mps::{read_mps, write_mps};
