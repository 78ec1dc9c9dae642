//! Per-sensor composition: depth frames to world points, detections and
//! trajectories.

use rayon::prelude::*;

use crowdcal_core::TrajectorySet;

use crate::detection::{detect_frame, BackgroundModel, DetectionConfig};
use crate::geometry::{DepthFrame, SensorView};
use crate::stitching::smooth_spline_with_noise;
use crate::synth::DEFAULT_VIEW_MARGIN_PX;
use crate::tracking::{track_sequence, Frame, TrackerConfig};
use crate::{Result, TrackingError};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub detection: DetectionConfig,
    pub tracking: TrackerConfig,
    /// Detections projecting closer than this to the image border are dropped.
    pub border_margin_px: f64,
    pub seed: u64,
    /// Smooth each track with a cubic spline at the tracker frame rate.
    pub smooth_output: bool,
    /// Assumed position noise (m) setting the smoothing budget.
    pub smoothing_noise: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            detection: DetectionConfig::default(),
            tracking: TrackerConfig::default(),
            border_margin_px: DEFAULT_VIEW_MARGIN_PX,
            seed: 0,
            smooth_output: true,
            smoothing_noise: 0.03,
        }
    }
}

pub(crate) fn mix_seed(seed: u64, sensor_id: u32, t: f64) -> u64 {
    let mut z = seed ^ (u64::from(sensor_id) << 48) ^ t.to_bits().rotate_left(17);
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Detections of every frame, in the frames' order. Frames are processed in
/// parallel; each uses its own seed derived from `cfg.seed`, the sensor and
/// the frame time.
pub fn detect_frames(
    frames: &[DepthFrame],
    view: &SensorView,
    bg: &BackgroundModel,
    cfg: &PipelineConfig,
) -> Result<Vec<Frame>> {
    cfg.detection.validate()?;
    frames
        .par_iter()
        .map(|frame| {
            let points = view.world_points(frame)?;
            let seed = mix_seed(cfg.seed, view.sensor_id, frame.t);
            let detections = detect_frame(&points, bg, &cfg.detection, seed, frame.t, view.sensor_id)
                .into_iter()
                .filter(|d| view.sees(&d.position, cfg.border_margin_px))
                .collect();
            Ok(Frame { t: frame.t, detections })
        })
        .collect()
}

/// Full per-sensor pipeline. Frames must be in increasing time order.
pub fn track_sensor(
    frames: &[DepthFrame],
    view: &SensorView,
    bg: &BackgroundModel,
    cfg: &PipelineConfig,
) -> Result<TrajectorySet> {
    if let Some(w) = frames.windows(2).find(|w| w[1].t <= w[0].t) {
        return Err(TrackingError::TimeOrder { prev: w[0].t, t: w[1].t });
    }
    let detected = detect_frames(frames, view, bg, cfg)?;
    track_detections(&detected, view.sensor_id, cfg)
}

/// Tracking and optional smoothing of per-frame detections, the second half
/// of [`track_sensor`]. Lets callers detect in batches without holding every
/// depth frame in memory.
pub fn track_detections(detected: &[Frame], sensor_id: u32, cfg: &PipelineConfig) -> Result<TrajectorySet> {
    let tracks = track_sequence(detected, sensor_id, &cfg.tracking)?;
    if !cfg.smooth_output {
        return Ok(tracks);
    }
    let rate = tracks.frame_rate();
    let smoothed = tracks
        .iter()
        .map(|t| smooth_spline_with_noise(t, rate, cfg.smoothing_noise))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrajectorySet::new(smoothed, rate)?)
}
