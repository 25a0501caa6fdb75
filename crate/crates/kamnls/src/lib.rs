//! Finite-truncation KAM machinery for the one-dimensional NLS with Fourier
//! multipliers: weighted sequence spaces, admissible sparse tangential
//! sites, a conserved-monomial Hamiltonian algebra with majorant norms,
//! Diophantine small-divisor machinery, homological-equation inversion, the
//! counter-term KAM iteration with parameter elimination, measure
//! estimation, and synthesis/diagnosis of approximate almost-periodic
//! solutions.
//!
//! Everything operates at an explicit truncation: modes are confined to
//! `|j| <= J` and monomial degrees to `|alpha| + |beta| <= 2D + 2`, so all
//! of the classical bounds become finite, checkable inequalities.

// parameter guards use `!(x > y)` so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod hamops;
pub mod homological;
pub mod kamflow;
pub mod report;
pub mod sites;
pub mod smalldiv;
pub mod spaces;
pub mod synth;

pub use error::{Error, Result};
