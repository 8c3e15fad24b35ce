//! Pixel-based state estimation and control for the cart-pole system.
//!
//! The pipeline has four stages, each usable on its own:
//!
//! 1. [`env`] — deterministic cart-pole physics plus a software rasterizer
//!    that draws the scene as 128×128 RGB frames.
//! 2. [`dataset`] — collects frame/action sequences labeled with ground-truth
//!    states, balanced across a discretized state space, and persists them in
//!    a compact binary format.
//! 3. [`predictor`] — a CNN → GRU → FCNN regressor that maps four consecutive
//!    frames and actions to the physical state `[x, ẋ, θ, θ̇]`, trained with
//!    mini-batch Adam on mean squared error.
//! 4. [`rl`] / [`eval`] — a DQN agent trained either on true states or on
//!    predictor estimates computed from rendered frames, plus rollout metrics
//!    (normalized RMSE% / MAE%) and report generation.
//!
//! Everything is seeded and single-threaded: a fixed [`config::RunConfig`]
//! reproduces every artifact byte for byte.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod env;
pub mod error;
pub mod eval;
pub mod nn;
pub mod predictor;
pub mod rl;
pub mod seed;

pub use error::{Error, Result};
