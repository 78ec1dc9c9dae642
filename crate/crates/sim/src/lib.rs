//! Social Force pedestrian models and their calibration against trajectories.
//!
//! [`socialforce`] holds the dynamics (three repulsion variants, obstacles,
//! integrator). [`calibration`] replays observed pedestrians one at a time
//! and fits model parameters with the hybrid optimizer in [`optimize`].
//! [`stats`] provides speed histograms, walking times and the two-sample
//! Kolmogorov-Smirnov test, and [`scenario`] generates synthetic corridor
//! data with a standing person in the middle.

pub mod calibration;
mod error;
pub mod optimize;
pub mod scenario;
pub mod socialforce;
pub mod stats;

pub use error::{Result, SimError};
