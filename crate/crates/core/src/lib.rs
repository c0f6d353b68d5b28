//! Determinantal formulas for Brownian and geometric last passage percolation
//! with general initial data, with Monte Carlo and enumeration cross-checks.

// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod contour;
pub mod continuum_kernels;
pub mod discrete_kernels;
pub mod discrete_model;
pub mod error;
pub mod fredholm;
pub mod harness;
pub mod linalg;
pub mod quadrature;
pub mod rng;
pub mod scaling;
pub mod simulate;
pub mod special;

pub use error::{Error, Result};
