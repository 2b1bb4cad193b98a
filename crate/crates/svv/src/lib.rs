//! Spectral vanishing-viscosity solver for the incompressible Euler
//! equations on the periodic torus, driven by multiplicative noise.
//!
//! The semi-discrete scheme evolves a divergence-free trigonometric
//! polynomial u with modes |k|_inf <= n:
//!
//!   du + P_n(u . grad u) dt = eps * div(Q_n grad u) dt + P_n sigma(u) dW
//!
//! where P_n is the Galerkin (truncation + Leray) projection and Q_n
//! applies the Laplacian only on the upper mode band m < |k|_inf <= n, so
//! the artificial dissipation never touches the large scales. The crate
//! provides the spectral operator algebra, the noise model behind dW, the
//! time integrators, energy/consistency diagnostics, ensemble statistics,
//! and a CLI for running reproducible experiments.
//!
//! Start with [`lattice::FourierLattice`] and the `presets` module; the
//! book under `book/` walks through every subsystem with runnable
//! examples (they double as doc-tests of this crate).

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod ensemble;
pub mod error;
pub mod field;
pub mod lattice;
pub mod noise;
pub mod operators;
pub mod presets;
pub mod rng;
pub mod scheme;
pub mod snapshot;
pub mod transform;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};

// The book's code blocks compile and run with the library's own tests, so
// the guide can never drift from the API it describes.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/fields.md")]
    mod fields {}
    #[doc = include_str!("../../../book/src/projection.md")]
    mod projection {}
    #[doc = include_str!("../../../book/src/viscosity.md")]
    mod viscosity {}
    #[doc = include_str!("../../../book/src/noise.md")]
    mod noise {}
    #[doc = include_str!("../../../book/src/stepping.md")]
    mod stepping {}
    #[doc = include_str!("../../../book/src/ledger.md")]
    mod ledger {}
    #[doc = include_str!("../../../book/src/ensembles.md")]
    mod ensembles {}
    #[doc = include_str!("../../../book/src/ladders.md")]
    mod ladders {}
    #[doc = include_str!("../../../book/src/runtime.md")]
    mod runtime {}
}
