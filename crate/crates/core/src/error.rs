use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad input: configuration, shapes, model invariants.
    Validation,
    /// A numerical routine failed on otherwise valid input.
    Numerical,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("not absolutely continuous: alpha[{index}] > 0 but beta[{index}] = 0")]
    AbsoluteContinuity { index: usize },

    #[error("invalid rate matrix: {0}")]
    InvalidRateMatrix(String),

    #[error("chain is reducible or degenerate: {0}")]
    Reducible(String),

    #[error("rate matrix is not reversible w.r.t. the metric weights (max detailed-balance residual {residual:e}); use the euler prior instead")]
    NonReversible { residual: f64 },

    #[error("step size {lambda} violates stability bound: lambda * max|Q_ii| = {product} >= 1")]
    Unstable { lambda: f64, product: f64 },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("step failure: {0}")]
    StepFailure(String),

    #[error("iterative solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("constrained minimizer is not interior (min entry {min_entry:e}); step size too large")]
    NotInterior { min_entry: f64 },

    #[error("time grid error: {0}")]
    Grid(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("at step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{phase} phase: {source}")]
    Phase {
        phase: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_step(step: usize, source: Error) -> Self {
        Error::AtStep {
            step,
            source: Box::new(source),
        }
    }

    pub(crate) fn in_phase(phase: &'static str, source: Error) -> Self {
        Error::Phase {
            phase,
            source: Box::new(source),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Dimension { .. }
            | Error::Domain(_)
            | Error::AbsoluteContinuity { .. }
            | Error::InvalidRateMatrix(_)
            | Error::Reducible(_)
            | Error::NonReversible { .. }
            | Error::Unstable { .. }
            | Error::Grid(_)
            | Error::Config(_) => ErrorKind::Validation,
            Error::Singular(_)
            | Error::StepFailure(_)
            | Error::NonConvergence { .. }
            | Error::NotInterior { .. } => ErrorKind::Numerical,
            Error::Io(_) => ErrorKind::Io,
            Error::AtStep { source, .. } | Error::Phase { source, .. } => source.kind(),
        }
    }
}
