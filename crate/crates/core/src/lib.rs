//! Testing attribute hierarchies in cognitive diagnosis models.
//!
//! The crate covers the whole pipeline: Q-matrix and hierarchy algebra
//! ([`qmatrix`]), sufficient conditions for testability ([`testability`]),
//! DINA/DINO/GDINA kernels ([`models`]), restricted EM ([`em`]), likelihood
//! ratio tests with bootstrap and analytic references ([`lrt`]) and the
//! Monte-Carlo harness ([`sim`]).

pub mod em;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod lrt;
pub mod models;
pub mod qmatrix;
pub mod sim;
pub mod testability;

pub use error::{Error, Result};
