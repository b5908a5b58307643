//! Cooperative transport of a cable-suspended point-mass payload by `n`
//! quadrotors.
//!
//! The crate is organised bottom-up:
//!
//! - [`quat`]: unit quaternion algebra and rotation matrices
//! - [`dynamics`]: constrained Newton-Euler model, cable tension solver, RK4
//! - [`controller`]: load control, tension allocation, position and attitude control
//! - [`analysis`]: error-state matrices, attractive-ellipsoid certificate search
//! - [`scenario`]: reference trajectories, initial conditions, configuration
//! - [`sim`] / [`log`]: closed-loop runner and the per-step log
//! - [`plot`]: SVG and gnuplot-data figures from a log
//! - [`cli`]: the command-line front end (`simulate`, `certify`, `analyze`)

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod cli;
pub mod controller;
pub mod dynamics;
pub mod error;
pub mod log;
pub mod plot;
pub mod quat;
pub mod scenario;
pub mod sim;

pub use error::{Error, Result};

use nalgebra::Vector3;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;

/// Gravitational acceleration (m/s²).
pub const GRAVITY: f64 = 9.81;

/// World z axis; thrust acts along the body copy of this axis.
#[inline]
pub fn e3() -> Vec3 {
    Vec3::z()
}
