//! Gaussian splatting with generalized (non-exponential) transmittance.
//!
//! The crate is organized bottom-up:
//!
//! - [`transmittance`]: mother transmittance functions `T(τ)`, their
//!   path-length densities and the per-splat discrete extinction weights.
//! - [`compositor`]: front-to-back compositing of depth-sorted splat samples
//!   with saturation, early termination and overdraw accounting, plus the
//!   classic multiplicative oracle and a Russian-roulette estimator.
//! - [`adjoint`]: path-replay backward passes for the linear, quadratic and
//!   exponential models, and a finite-difference reference.
//! - [`primitives`]: 3D Gaussians, cameras, ray/peak evaluation, per-ray
//!   gathering and full-image rendering.
//! - [`optimizer`]: loss, metrics, bounded Adam, densification and the
//!   inverse-rendering loop.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adjoint;
pub mod compositor;
mod error;
pub mod image;
pub mod optimizer;
pub mod primitives;
pub mod transmittance;

pub use error::{Error, Result};

/// Linear RGB triple.
pub type Rgb = nalgebra::Vector3<f64>;

/// Upper margin kept between any splat opacity and 1.
///
/// Exponential path replay divides by `1 - α`; every opacity produced by the
/// renderer is clamped to `1 - ALPHA_EPS`.
pub const ALPHA_EPS: f64 = 1e-6;

/// Default cap on the number of splats composited along one ray.
pub const DEFAULT_MAX_SPLATS: usize = 128;

/// Default minimum splat opacity kept by the gather step (1/255).
pub const DEFAULT_ALPHA_CUTOFF: f64 = 1.0 / 255.0;
