use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("gradient requested at the singular point x = 0")]
    SingularPoint,

    #[error("configuration has infinite energy (coincident points under a singular potential)")]
    InfiniteEnergy,

    #[error("duplicate point at index {first} and {second}")]
    DuplicatePoint { first: usize, second: usize },

    #[error("point {index} lies outside the domain")]
    OutOfDomain { index: usize },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("quadrature did not converge: partial value {partial} with error {error}")]
    QuadratureFailure { partial: f64, error: f64 },

    #[error("quadrature dimension {dim} exceeds the cap {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("Markov chain failed to mix: no accepted move in {sweeps} sweeps")]
    MixingFailure { sweeps: usize },

    #[error("insertion estimator is degenerate: all Boltzmann weights vanish")]
    DegenerateInsertion,

    #[error("grand-canonical particle number exceeded the cap {cap}")]
    ExplosionGuard { cap: usize },

    #[error("coincidence re-draw cap exceeded at step {step}")]
    RedrawCap { step: usize },

    #[error("non-finite coordinate at step {step}")]
    NonFinite { step: usize },

    #[error("non-finite integrand: {0}")]
    NonFiniteIntegrand(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
