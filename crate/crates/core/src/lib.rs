//! Shared domain types for pedestrian trajectory processing.
//!
//! A [`Trajectory`] is an ordered run of timestamped world positions for one
//! pedestrian; a [`TrajectorySet`] groups trajectories produced at one frame
//! rate. Everything here is an immutable value type once constructed.

mod error;
pub mod io;
mod point;
mod trajectory;

pub use error::{CoreError, Result};
pub use point::{Point3, Vec2};
pub use trajectory::{
    resample, Trajectory, TrajectoryId, TrajectoryPoint, TrajectorySet, DEFAULT_FRAME_RATE,
};
