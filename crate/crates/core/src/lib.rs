//! Minimum-time quadrotor planning and control laboratory.
//!
//! - [`pmm`]: analytical minimum-time point-mass trajectories
//! - [`dynamics`]: rigid-body quadrotor simulator with CTBR inner loop
//! - [`env`]: reward-shaped goal-reaching MDP and its vectorized form
//! - [`curriculum`]: staged spawn ranges with RMSE-based promotion
//! - [`ppo`]: actor-critic networks, GAE and the PPO trainer
//! - [`tracker`]: cascaded trajectory-tracking baseline and comparison harness

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod curriculum;
pub mod dynamics;
pub mod env;
pub mod io;
pub mod math;
pub mod par;
pub mod pmm;
pub mod ppo;
pub mod tracker;

/// Standard gravity (m/s^2).
pub const GRAVITY: f64 = 9.81;
