//! Quantum and classical Fisher information matrices for parameterized pure
//! states, with Haar-random measurement bases and Monte Carlo tooling to
//! check the mean, variance and concentration of the random-basis CFIM.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ansatz;
pub mod cli;
pub mod error;
pub mod fisher;
pub mod haar;
pub mod linalg;
pub mod montecarlo;
pub mod output;
pub mod parallel;
pub mod realrep;
pub mod tails;
pub mod validate;

pub use error::{QfimError, Result};
