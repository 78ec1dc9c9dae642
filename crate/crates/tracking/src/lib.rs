//! Depth-sensor pedestrian trajectory extraction and evaluation.
//!
//! Depth frames are back-projected and mapped into world coordinates
//! ([`geometry`]), people are detected per frame ([`detection`]) and linked
//! over time ([`tracking`]). Trajectories from neighbouring sensors are
//! joined by [`stitching`], scored against ground truth by [`metrics`], and
//! [`synth`] renders synthetic scenes with known truth.

pub mod assignment;
pub mod detection;
mod error;
pub mod geometry;
pub mod metrics;
pub mod pipeline;
pub mod spline;
pub mod stitching;
pub mod synth;
pub mod tracking;

pub use error::{Result, TrackingError};
