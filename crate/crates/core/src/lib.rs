//! Trajectory representation of stationary quantum states.
//!
//! - [`schrodinger1d`]: Numerov solution pairs and bound-state energies.
//! - [`qshje`]: momentum fields from the quantum stationary Hamilton–Jacobi equation.
//! - [`homech`]: higher-order Lagrangian dynamics in the semiclassical regime.
//! - [`angular`]: the φ-dependent QSHJE in spherical coordinates.
//! - [`biprism`]: Fresnel-diffracted fields for an electron biprism.
//! - [`trajectory`]: lower-slot trajectories and screen-density reconstruction.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod angular;
pub mod biprism;
pub mod error;
pub mod homech;
pub mod numerics;
pub mod qshje;
pub mod schrodinger1d;
pub mod trajectory;

pub use error::{Error, Result};
pub use num_complex::Complex64;
