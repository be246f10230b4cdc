//! Convolution-smoothed quantile regression with iteratively reweighted
//! l1 (folded-concave) regularization.
//!
//! The crate is organized around a few interchangeable families:
//! smoothing [`kernels`], [`penalties`], weighted-l1 [`solver`]s and the
//! benchmark [`simulation::methods`], each selectable by name at runtime.

pub mod error;
pub mod irw;
pub mod kernels;
pub mod model_selection;
pub mod objective;
pub mod penalties;
pub mod simulation;
pub mod solver;

pub use error::{Error, Result};
pub use kernels::{KernelId, SmoothSpec};
pub use objective::{Dataset, FitResult};
pub use penalties::{PenaltyFamily, PenaltySpec, WeightVector};
pub use solver::{Solver, SolverRegistry, SolverSettings};
