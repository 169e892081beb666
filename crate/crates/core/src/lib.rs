//! Receding-horizon inverse reinforcement learning.
//!
//! Learns a state cost `g(x; θ)` from state-only expert demonstrations by
//! matching, at every step of a receding-horizon loop, the MPPI-optimal
//! control distribution under the current cost against demonstration
//! windows of up to K steps.

// Range checks are written so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod cost;
pub mod demos;
pub mod dynamics;
pub mod envs;
pub mod error;
pub mod eval;
pub mod lqr;
pub mod mppi;
pub mod optim;
pub mod rng;
pub mod smoothing;
pub mod trainer;

pub use error::{Error, Result};
