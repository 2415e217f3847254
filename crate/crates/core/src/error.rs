use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A Jacobi matrix with a non-positive off-diagonal or non-finite entry.
    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    /// A caller-supplied argument violates a precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A perturbation generator whose l1 norm diverges, requested without the override flag.
    #[error("non-summable perturbation: {0}")]
    NonSummable(String),

    /// An energy lies too close to the spectrum for the resolvent to be trusted.
    #[error("resolvent proximity: energy {energy} is within {distance:e} of the spectrum (tolerance {tol:e})")]
    ResolventProximity { energy: f64, distance: f64, tol: f64 },

    /// Root finding or another iterative routine failed to converge.
    #[error("numerical failure: {message} (bracket [{lo}, {hi}])")]
    NumericalFailure { message: String, lo: f64, hi: f64 },

    /// A truncation window is too small for the requested accuracy.
    #[error("window too small: {message}; suggested size {suggested}")]
    Size { message: String, suggested: usize },

    /// Site 0 is (numerically) a resonance, so the Dirichlet Green's function is undefined.
    #[error("resonance at site 0: |G(0,0)| = {value:e} <= {tol:e}")]
    Resonance { value: f64, tol: f64 },

    /// Configuration file could not be read or failed validation.
    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    /// True for errors caused by numerics rather than by bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::ResolventProximity { .. } | Error::NumericalFailure { .. } | Error::Resonance { .. })
    }
}
