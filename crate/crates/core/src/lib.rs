//! Formation-motion guidance and rotorcraft control for cooperative slung-load transport.
//!
//! The crate is `no_std` (with `alloc`) and holds every algorithmic piece of the
//! simulator:
//!
//! - [`graph`]: rigidity graph, incidence matrix, relative positions and distance errors
//! - [`guidance`]: the distance-disagreement motion law and its feedforward term
//! - [`vehicle`]: rigid-body rotorcraft plant, thrust map and IMU model
//! - [`filter`]: second-order Butterworth low-pass filters
//! - [`indi`]: incremental nonlinear dynamic inversion acceleration tracking
//! - [`payload`]: taut-only rope model and the suspended point mass
//! - [`worst_case`]: tilt, force and gain budget for a given team and payload
//! - [`ideal`]: double-integrator reference model of the formation
//! - [`sim`]: the multi-rate closed loop and its trace
//! - [`metrics`]: trace summaries and response-time estimates
//!
//! IO, configuration files and the command line tool live in the `swarmlift` crate.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod filter;
pub mod graph;
pub mod guidance;
pub mod ideal;
pub mod indi;
pub mod math;
pub mod metrics;
pub mod payload;
pub mod sim;
pub mod vehicle;
pub mod worst_case;

pub use error::{Error, Result};

/// Planar vector in the navigation frame (x, y).
pub type Vec2 = nalgebra::Vector2<f64>;
/// Vector in the navigation frame (x, y, z with z up).
pub type Vec3 = nalgebra::Vector3<f64>;
/// 3x3 matrix.
pub type Mat3 = nalgebra::Matrix3<f64>;

/// Gravitational acceleration [m/s²].
pub const GRAVITY: f64 = 9.81;
