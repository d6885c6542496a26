//! The guide chapters under `book/src` double as integration checks: every
//! fenced Rust block in them compiles and runs as a doc-test of this module.

#[doc = include_str!("../../../book/src/overview.md")]
pub mod overview {}

#[doc = include_str!("../../../book/src/limit-shape.md")]
pub mod limit_shape {}

#[doc = include_str!("../../../book/src/geodesics.md")]
pub mod geodesics {}

#[doc = include_str!("../../../book/src/solvers.md")]
pub mod solvers {}

#[doc = include_str!("../../../book/src/monte-carlo.md")]
pub mod monte_carlo {}

#[doc = include_str!("../../../book/src/minimization.md")]
pub mod minimization {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
