//! Penalized smoothing-spline estimation and multiplier-bootstrap inference
//! for the partially linear single-index model
//!
//! ```text
//! Y = g₀(Xᵀβ₀) + Zᵀγ₀ + ε
//! ```
//!
//! The link `g₀` is represented in a data-adaptive eigenbasis ([`eigen`]),
//! fitted jointly with the index direction and the linear part ([`model`]),
//! and the fit feeds bootstrap confidence bands and tests ([`inference`]).
//! [`simulation`] reproduces the synthetic experiments.

pub mod bspline;
pub mod density;
pub mod eigen;
pub mod error;
pub mod inference;
pub mod json;
pub mod model;
pub mod parallel;
pub mod rng;
pub mod simulation;

pub use density::{estimate_density, DensityEstimate, Interval};
pub use eigen::{apply_m_lambda, build_eigensystem, kernel_eval, EigenSystem, KernelHandle, Sigma0Sq};
pub use error::{Error, Result};
