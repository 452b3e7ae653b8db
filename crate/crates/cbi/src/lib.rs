//! Simulation and conditional least squares inference for supercritical
//! continuous-state branching processes with immigration.
//!
//! The crate covers the full desk-scale workflow:
//!
//! * [`measure`] — finite-activity jump measures with exact moments and
//!   samplers;
//! * [`model`] — admissible parameters, derived constants, limit
//!   covariance shapes and pivot variances;
//! * [`affine`] — branching/immigration mechanisms, the exponent flow and
//!   the characteristic functional (the analytic oracle);
//! * [`simulate`] — exact transition samplers on two sub-families plus a
//!   validated Euler/thinning scheme in general;
//! * [`estimate`] — least squares and weighted least squares drift
//!   estimation with typed non-existence;
//! * [`limits`] — samplers for every limit law of the normalized
//!   estimators;
//! * [`harness`] — reproducible Monte Carlo experiments with
//!   Kolmogorov-Smirnov verdicts;
//! * [`validation`] — the pinned acceptance suites run by the CLI and the
//!   integration tests.

// `!(x > 0.0)` guards are deliberate: they reject NaN along with the
// out-of-domain sign.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod affine;
pub mod error;
pub mod estimate;
pub mod harness;
pub mod limits;
pub mod measure;
pub mod model;
pub mod numeric;
pub mod rng;
pub mod simulate;
pub mod validation;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{CbiError, Result};
