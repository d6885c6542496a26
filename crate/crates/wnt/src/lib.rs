//! Weak-noise toolkit for the KPZ/stochastic-heat lower tail.
//!
//! The crate computes the explicit lower-tail limit shape (lens profile,
//! limit potential, geodesic action), solves the coupled forward
//! Hamilton-Jacobi / backward Fokker-Planck system at finite `lambda` under
//! a point constraint, and cross-checks everything with Feynman-Kac Monte
//! Carlo and a dynamic-programming action oracle.
//!
//! See the `book/` guide at the repository root for a narrative tour; its
//! code listings run as doc-tests of this crate.

#[cfg(doctest)]
mod book;
pub mod cli;
pub mod error;
pub mod feynman_kac;
pub mod geodesics;
pub mod harness;
pub mod limit_shape;
pub mod numerics;
pub mod optimizer;
pub mod pde;

pub use error::{Result, WntError};

#[cfg(test)]
pub(crate) mod test_util {
    use crate::limit_shape::{build_lens_profile, LensProfile};
    use std::sync::OnceLock;

    /// One reference profile shared across test modules; building it is the
    /// expensive part of most setups.
    pub fn profile() -> &'static LensProfile {
        static P: OnceLock<LensProfile> = OnceLock::new();
        P.get_or_init(|| build_lens_profile(512, 1e-8).unwrap())
    }
}
