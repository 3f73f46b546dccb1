//! Simulation and verification toolkit for reflected stochastic delay
//! differential equations with jumps (RSDDEJ) on the nonnegative orthant.
//!
//! The state `X` lives in `R_+^d` and solves
//!
//! ```text
//! dX(t) = b(t, X(t), X(t-τ)) dt + σ(t, X(t), X(t-τ)) dW(t)
//!       + ∫ g(t, X(t-), X((t-τ)-), ρ) Ñ(dρ, dt) + dK(t),
//! X(t)  = ξ(t) on [-τ, 0],
//! ```
//!
//! where `K` is the minimal nondecreasing regulator that keeps every
//! coordinate nonnegative. The crate is layered bottom-up:
//!
//! - [`model`]: coefficient interface, the linear family and its
//!   dissipativity constants;
//! - [`randomness`]: counter-based streams, Brownian increments and
//!   finite-intensity Poisson random measures;
//! - [`history`]: grid-exact delayed-state lookup;
//! - [`reflection`]: orthant projection, jump reflection and the running
//!   supremum Skorokhod map;
//! - [`integrator`]: the jump-adapted projected Euler scheme;
//! - [`analysis`]: decay rates, moment and contraction experiments and
//!   empirical segment laws;
//! - [`localtime`]: occupation-time local time and loss-rate estimates;
//! - [`cli`]: JSON configuration, experiment runner and CSV output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod error;
pub mod history;
pub mod integrator;
pub mod localtime;
pub mod model;
pub mod randomness;
pub mod reflection;

pub use error::{Error, Result};
pub use history::{DelayBuffer, InitialSegment};
pub use integrator::{simulate_coupled_pair, simulate_path, PathRecord, SimConfig};
pub use model::{
    build_linear_model, validate_dissipativity, CoefficientSet, Coefficients, DissipativityReport, LinearModel,
    LinearModelParams,
};
pub use randomness::{MarkDistribution, MarkMeasure, RngStream};
