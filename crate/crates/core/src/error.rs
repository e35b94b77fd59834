use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("time step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("horizon must be positive and finite, got {0}")]
    InvalidHorizon(f64),
    #[error("a grid needs at least 2 steps, got {0}")]
    TooFewSteps(usize),
    #[error("expected {expected} samples, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("non-finite sample at index {index}")]
    NonFinite { index: usize },
    #[error("grid mismatch: (dt, n) = {left:?} vs {right:?}")]
    Mismatch {
        left: (f64, usize),
        right: (f64, usize),
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("kernel evaluated outside 0 <= s <= t (t = {t}, s = {s})")]
    Domain { t: f64, s: f64 },
    #[error("invalid kernel parameter: {0}")]
    InvalidParameter(String),
    #[error("kernel dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("operation needs a scalar kernel, got dimension {0}")]
    NotScalar(usize),
    #[error("{family} perturbation is not defined for a {base} base kernel")]
    UnsupportedPerturbation {
        family: &'static str,
        base: &'static str,
    },
    #[error("Laplace transform diverges at mu = {mu}: {reason}")]
    Divergent { mu: f64, reason: String },
    #[error("quadrature failed to converge: {0}")]
    Quadrature(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VolterraError {
    #[error("integro-ODE solution diverged at step {step} (t = {time})")]
    Divergence { step: usize, time: f64 },
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("resolvent scheme is singular: 1 - dt * h(0) / 2 = 0")]
    SingularStep,
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("batch {batch} diverged at step {step} (t = {time})")]
    Divergence { batch: usize, step: usize, time: f64 },
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("decay fit needs at least 5 usable points, found {usable}")]
    TooFewPoints { usable: usize },
    #[error("x values have zero variance")]
    DegenerateX,
    #[error("need at least {needed} points, found {found}")]
    NotEnoughData { needed: usize, found: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty ensemble")]
    EmptyEnsemble,
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Volterra(#[from] VolterraError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

impl ExperimentError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }
}
