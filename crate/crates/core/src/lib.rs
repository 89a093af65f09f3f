//! Spatiotemporal receding-horizon control for autonomous driving in dense
//! traffic.
//!
//! The planner optimizes the ego vehicle's acceleration and steering over a
//! multiple-shooting horizon with a nonlinear bicycle model, a goal/terminal
//! task cost, and a barrier-based safety cost whose per-step weight decays
//! along the prediction horizon. Two evaluation environments drive it in
//! closed loop: a synthetic multi-lane IDM world ([`sim`]) and recorded
//! trajectory replay ([`replay`]).

pub mod config;
pub mod controller;
pub mod costs;
pub mod dynamics;
pub mod error;
pub mod metrics;
pub mod prediction;
pub mod replay;
pub mod safety;
mod serde_util;
pub mod sim;
pub mod solver;

pub use error::{Error, Result};
