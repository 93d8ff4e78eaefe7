//! Aerodynamic force estimation for a five-body flapping robot with
//! dynamically morphing wings.
//!
//! The crate contains two estimators and everything needed to validate them
//! against forces that are known exactly:
//!
//! - [`so3`]: rotation primitives (skew operator, elementary rotations,
//!   exponential-map stepping).
//! - [`kinematics`]: the body / armwing / wing frame chain, COM positions
//!   and body Jacobians.
//! - [`dynamics`]: mass, Coriolis and gravity terms of the equations of
//!   motion, an RK4 integrator and the tethered (body-clamped) mode that
//!   produces load-cell style reaction wrenches.
//! - [`observer`]: the conjugate-momentum residual observer.
//! - [`mlp`]: a from-scratch multilayer perceptron regressor with Adam.
//! - [`testbed`]: periodic gaits, a quasi-steady drag model and the
//!   condition grid used to synthesize tethered datasets.
//! - [`harness`]: configuration, CSV schemas, metrics and the end-to-end
//!   comparison pipeline.
//!
//! Generalized velocities are always ordered as
//! `[ω_B (body frame), ṗ_B (inertial), θ̇_L (p, m, e, f), θ̇_R (p, m, e, f)]`.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod harness;
pub mod kinematics;
pub mod mlp;
pub mod observer;
pub mod so3;
pub mod testbed;

pub use error::{Error, Result};
