//! Finite-volume canonical Gibbs measures for pair potentials, the reflected
//! N-particle gradient diffusion they make invariant, and numerical checks of
//! the identities and bounds that tie the two together.

pub mod configspace;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod gibbs;
pub mod potential;
pub mod quadrature;
pub mod rng;
pub mod stats;

pub use configspace::{BoxDomain, Configuration};
pub use error::{Error, Result};
pub use potential::PairPotentialModel;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/potentials.md")]
    mod potentials {}
    #[doc = include_str!("../../../book/src/sampling.md")]
    mod sampling {}
    #[doc = include_str!("../../../book/src/dynamics.md")]
    mod dynamics {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    mod diagnostics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
