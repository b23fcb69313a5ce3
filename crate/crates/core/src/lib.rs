//! Simulation and response estimation for dissipative stochastic PDEs.
//!
//! The crate is `no_std` (with `alloc`) and contains only pure numerics:
//! pseudo-spectral fields on a periodic square, the stochastic Navier–Stokes
//! and two-layer quasi-geostrophic steppers, Girsanov likelihood-ratio
//! weights, ergodic and response estimators, transport semimetrics, and
//! finite-dimensional systems whose invariant measures and responses are
//! computable exactly. File formats, configuration and the command line live
//! in the `spdr` crate.
//!
//! Every random draw comes from a counter-based stream keyed by
//! `(seed, trajectory, step)`, so results are pure functions of their inputs
//! regardless of how trajectories are scheduled.

#![no_std]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod audit;
pub mod dynamics;
pub mod error;
pub mod exec;
pub mod noise;
pub mod ns;
pub mod observable;
pub mod oracles;
pub mod qg;
pub mod response;
pub mod rng;
pub mod spectral;
pub mod stats;
pub mod transport;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Version of the numerical core, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
