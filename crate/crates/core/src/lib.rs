//! CRB-versus-rate tradeoff for point-to-point MIMO integrated sensing and
//! communication.
//!
//! The crate computes the Pareto boundary of the region of simultaneously
//! achievable (Cramér-Rao bound, rate) pairs for a point target (angle CRB)
//! and for an extended target under trace, max-eigenvalue and log-determinant
//! scalarizations of the CRB matrix.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmarks;
pub mod boundary;
pub mod channel;
pub mod cli;
pub mod config;
pub mod corner;
pub mod ellipsoid;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod oracle;
pub mod outcome;
pub mod solver_extended;
pub mod solver_point;

pub use error::{IsacError, Result};
