use thiserror::Error;

/// Errors produced by the rotation-sensing toolchain.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The input is valid but degenerate (e.g. a cat state whose two branches cancel).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A numerical procedure failed to reach its tolerance.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// No state with the requested isotropy was found.
    #[error("no isotropic state found (best Tr C^-1 = {best_trace_inverse}, isotropy error = {isotropy_error})")]
    NotFound {
        best_trace_inverse: f64,
        isotropy_error: f64,
    },

    /// A Fock-space truncation discards more probability than allowed.
    #[error("truncation error: neglected probability {neglected:e} exceeds budget {budget:e}")]
    Truncation { neglected: f64, budget: f64 },

    /// The Fisher information matrix is singular; use `singular_diagnosis`.
    #[error("singular information matrix (rank {rank} of {dim}); see singular_diagnosis")]
    Singular { rank: usize, dim: usize },

    /// The likelihood does not single out one parameter point.
    #[error("non-identifiable parameters: {0}")]
    NonIdentifiable(String),

    /// Too many estimator failures in a Monte Carlo run.
    #[error("unreliable run: {failures} of {trials} trials failed")]
    Unreliable { failures: usize, trials: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
