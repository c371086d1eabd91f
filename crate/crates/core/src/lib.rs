//! Convex-nonconvex regularization with minimization-induced penalties
//! enhanced by generalized Moreau envelopes.

pub mod design;
pub mod error;
pub mod linalg;
pub mod prox;
pub mod seeds;
pub mod solver;

pub use design::{PMetric, StepParams};
pub use error::{Error, Result};
pub use linalg::{DenseMatrix, Vector};
pub use seeds::{NeighborGraph, SeedFunction};
pub use solver::{Constraint, ProblemSpec, Solution, SolveOptions, SolverState};
