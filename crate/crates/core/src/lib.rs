//! Numerical certification of the Anosov property for magnetic flows on
//! closed oriented surfaces.
//!
//! The analysis reduces to scalar equations along orbits: the
//! perpendicular Jacobi equation `J¨ + 𝕂 J = 0` and its Riccati form
//! `u̇ + u² + 𝕂 = 0`, where `𝕂 = K − db(iv) + b²` is the magnetic
//! curvature. Stable and unstable Green slopes are built as limits of
//! boundary-value Jacobi fields, and a flow is reported as numerically
//! Anosov when the slopes stay transverse on every sampled orbit.

// `!(x > 0.0)` is the NaN-rejecting form of the domain guards.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anosov;
pub mod config;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod green;
pub mod jacobi;
pub mod ode;
pub mod quadrature;
pub mod riccati;
pub mod run;
pub mod spline;

pub use error::{Error, Result};
