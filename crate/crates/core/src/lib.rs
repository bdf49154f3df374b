//! Local-geometry constants, coupled diffusions and Monte Carlo checks of
//! log-Harnack type inequalities on model Riemannian manifolds.
//!
//! The guide in `book/` walks through each module with runnable snippets.

// `!(x > 0.0)` style tests are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod coupling;
pub mod diffusion;
pub mod error;
pub mod estimators;
pub mod functions;
pub mod geometry;
pub mod kernels;
pub mod runner;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};

// Compiles and runs the book's snippets as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/local-constants.md")]
    mod local_constants {}
    #[doc = include_str!("../../../book/src/diffusion.md")]
    mod diffusion {}
    #[doc = include_str!("../../../book/src/coupling.md")]
    mod coupling {}
    #[doc = include_str!("../../../book/src/estimators.md")]
    mod estimators {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
    #[doc = include_str!("../../../book/src/running.md")]
    mod running {}
}
