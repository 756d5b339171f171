//! Stochastic slow/fast power-system simulation.
//!
//! The crate integrates a semi-explicit DAE with Weibull-distributed wind
//! inputs, builds concentration tubes around its slow manifold, and checks
//! the resulting exit and deviation statistics by Monte Carlo.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod ensemble;
pub mod error;
pub mod io;
pub mod lyapunov;
pub mod manifold;
pub mod model;
pub mod numerics;
pub mod plot;
pub mod rng;
pub mod scenario;
pub mod solver;
pub mod stats;
pub mod wind;

pub use error::{Error, Result};
pub use model::{SlowFastState, SystemModel};
pub use rng::RngStream;
pub use solver::{simulate, SolverConfig, Trajectory};
