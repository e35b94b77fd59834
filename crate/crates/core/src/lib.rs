//! Numerical toolkit for generalized Langevin equations with memory:
//! kernel families and perturbations, weighted Schur norms, Volterra
//! integro-differential comparison equations, Euler-Maruyama simulation of
//! coupled first- and second-order dynamics, and decay-rate analysis.

pub mod analysis;
pub mod error;
pub mod experiment;
pub mod gle_sim;
pub mod grid;
pub mod kernel;
pub mod linalg;
pub mod quad;
pub mod rng;
pub mod volterra;

pub use error::{AnalysisError, ExperimentError, GridError, KernelError, SimError, VolterraError};
pub use grid::{GridFunction, TimeGrid};
pub use kernel::{Kernel, PerturbationFamily, PotentialSpec, WeightFunction};
pub use linalg::Matrix;

/// Formats a float with 17 significant digits, the precision used by every
/// CSV writer in the crate.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}
