//! Boundary defense workbench.
//!
//! * [`model`]: synthetic data and the victim classifiers.
//! * [`defense`]: the `BD(theta, sigma)` query oracle.
//! * [`attacks`]: soft- and hard-label black-box attacks driven through the oracle.
//! * [`theory`]: closed-form accuracy model with a Monte-Carlo cross-check.
//! * [`harness`]: experiment orchestration, metrics and reports.

// `!(x >= 0.0)` style checks are how NaN gets rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attacks;
pub mod defense;
pub mod error;
pub mod harness;
pub mod model;
pub mod rng;
pub mod theory;

pub use error::{Error, Result};
