//! Thermodynamic formalism on finitely truncated topological Markov shifts.
//!
//! The crate builds Ruelle transfer operators for locally constant potentials,
//! computes Perron triplets and Perron complements, and evaluates metastable
//! splitting coefficients of perturbed Gibbs measures. A second layer treats
//! piecewise expanding Markov interval maps through their symbolic coding.
//!
//! Module map:
//!
//! * [`shift`]: state spaces, transition matrices, words, components.
//! * [`potential`]: cylinder-weight potentials, perturbed families, pressure.
//! * [`transfer`]: operator assembly, Perron triplets, Gibbs certificates.
//! * [`complement`]: Perron complements and their identities.
//! * [`metastability`]: coupling matrices and splitting coefficients.
//! * [`interval`]: interval maps, geometric potential, Monte Carlo.
//! * [`experiment`]: config-driven pipelines and verification suites.

pub mod complement;
pub mod error;
pub mod experiment;
pub mod instances;
pub mod interval;
pub mod io;
pub mod linalg;
pub mod metastability;
pub mod potential;
pub mod shift;
pub mod transfer;

pub use error::{Error, Result};

#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/shifts.md")]
    pub mod shifts {}
    #[doc = include_str!("../../../book/src/transfer.md")]
    pub mod transfer {}
    #[doc = include_str!("../../../book/src/complements.md")]
    pub mod complements {}
    #[doc = include_str!("../../../book/src/metastability.md")]
    pub mod metastability {}
    #[doc = include_str!("../../../book/src/interval.md")]
    pub mod interval {}
}
