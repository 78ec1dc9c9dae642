//! Config keys of each library config type.

use crowdcal_core::Vec2;
use crowdcal_sim::calibration::{FitConfig, ObjectiveConfig, PenaltyForm};
use crowdcal_sim::socialforce::Obstacle;
use crowdcal_sim::stats::Gate;
use crowdcal_tracking::detection::DetectionConfig;
use crowdcal_tracking::geometry::CameraIntrinsics;
use crowdcal_tracking::pipeline::PipelineConfig;
use crowdcal_tracking::stitching::StitchConfig;
use crowdcal_tracking::tracking::TrackerConfig;

use crate::config::Config;
use crate::error::{input, Result};

pub fn intrinsics(c: &Config) -> Result<CameraIntrinsics> {
    let d = CameraIntrinsics::default();
    let k = CameraIntrinsics {
        focal_length_px: c.f64("camera.focal_length_px", d.focal_length_px)?,
        width: c.get("camera.width", d.width)?,
        height: c.get("camera.height", d.height)?,
        depth_range_min: c.f64("camera.depth_min", d.depth_range_min)?,
        depth_range_max: c.f64("camera.depth_max", d.depth_range_max)?,
    };
    if !(k.focal_length_px > 0.0 && k.width > 0 && k.height > 0) {
        return input("camera: focal length and image size must be positive");
    }
    if !(0.0 <= k.depth_range_min && k.depth_range_min < k.depth_range_max) {
        return input("camera: need 0 <= depth_min < depth_max");
    }
    Ok(k)
}

pub fn pipeline(c: &Config, seed: u64) -> Result<PipelineConfig> {
    let d = PipelineConfig::default();
    let (dd, dt) = (&d.detection, &d.tracking);
    Ok(PipelineConfig {
        detection: DetectionConfig {
            cutoff_low: c.f64("detection.cutoff_low", dd.cutoff_low)?,
            cutoff_high: c.f64("detection.cutoff_high", dd.cutoff_high)?,
            sample_size: c.get("detection.sample_size", dd.sample_size)?,
            linkage_threshold: c.f64("detection.linkage_threshold", dd.linkage_threshold)?,
            min_cluster_points: c.get("detection.min_cluster_points", dd.min_cluster_points)?,
            max_center_distance: c.f64("detection.max_center_distance", dd.max_center_distance)?,
        },
        tracking: TrackerConfig {
            history_n: c.get("tracking.history_n", dt.history_n)?,
            gate_radius: c.f64("tracking.gate_radius", dt.gate_radius)?,
            max_coast: c.get("tracking.max_coast", dt.max_coast)?,
            frame_rate: c.f64("tracking.frame_rate", dt.frame_rate)?,
            min_points: c.get("tracking.min_points", dt.min_points)?,
        },
        border_margin_px: c.f64("pipeline.border_margin_px", d.border_margin_px)?,
        seed,
        smooth_output: c.get("pipeline.smooth_output", d.smooth_output)?,
        smoothing_noise: c.f64("pipeline.smoothing_noise", d.smoothing_noise)?,
    })
}

pub fn stitch(c: &Config) -> Result<StitchConfig> {
    let d = StitchConfig::default();
    Ok(StitchConfig {
        h_start: c.f64("stitch.h_start", d.h_start)?,
        h_step: c.f64("stitch.h_step", d.h_step)?,
        h_max: c.f64("stitch.h_max", d.h_max)?,
        smoothing_enabled: c.get("stitch.smoothing", d.smoothing_enabled)?,
        output_rate: c.f64("stitch.output_rate", d.output_rate)?,
        smoothing_noise: c.f64("stitch.smoothing_noise", d.smoothing_noise)?,
        seam_window: c.f64("stitch.seam_window", d.seam_window)?,
        max_extrapolation_error: c.get("stitch.max_extrapolation_error", d.max_extrapolation_error)?,
        max_velocity_change: c.get("stitch.max_velocity_change", d.max_velocity_change)?,
    })
}

pub fn objective(c: &Config) -> Result<ObjectiveConfig> {
    let d = ObjectiveConfig::default();
    let penalty: String = c.get("objective.penalty", d.penalty.name().to_string())?;
    let cfg = ObjectiveConfig {
        desired_speed_percentile: c.f64("objective.desired_speed_percentile", d.desired_speed_percentile)?,
        penalty: penalty.parse::<PenaltyForm>()?,
        split_ratio: c.f64("objective.split_ratio", d.split_ratio)?,
        radius: c.f64("objective.radius", d.radius)?,
        relaxation_time: c.f64("objective.relaxation_time", d.relaxation_time)?,
        max_gap: c.f64("objective.max_gap", d.max_gap)?,
        min_path_length: c.f64("objective.min_path_length", d.min_path_length)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn fit(c: &Config) -> Result<FitConfig> {
    let d = FitConfig::default();
    let mut f = d.clone();
    let ga = &mut f.ga;
    ga.population = c.get("fit.population", d.ga.population)?;
    ga.generations = c.get("fit.generations", d.ga.generations)?;
    ga.tournament = c.get("fit.tournament", d.ga.tournament)?;
    ga.blend_alpha = c.f64("fit.blend_alpha", d.ga.blend_alpha)?;
    ga.crossover_rate = c.f64("fit.crossover_rate", d.ga.crossover_rate)?;
    ga.mutation_rate = c.f64("fit.mutation_rate", d.ga.mutation_rate)?;
    ga.mutation_sigma = c.f64("fit.mutation_sigma", d.ga.mutation_sigma)?;
    ga.elites = c.get("fit.elites", d.ga.elites)?;
    ga.validate()?;
    let nm = &mut f.nelder_mead;
    nm.max_evaluations = c.get("fit.nm_max_evaluations", d.nelder_mead.max_evaluations)?;
    nm.x_tolerance = c.f64("fit.nm_x_tolerance", d.nelder_mead.x_tolerance)?;
    nm.f_tolerance = c.f64("fit.nm_f_tolerance", d.nelder_mead.f_tolerance)?;
    nm.initial_step = c.f64("fit.nm_initial_step", d.nelder_mead.initial_step)?;
    f.anisotropy = c.f64("fit.anisotropy", d.anisotropy)?;
    f.v_rel_floor = c.f64("fit.v_rel_floor", d.v_rel_floor)?;
    f.printed_exponent_sign = c.get("fit.printed_exponent_sign", d.printed_exponent_sign)?;
    f.fit_relaxation_time = c.get("fit.fit_relaxation_time", d.fit_relaxation_time)?;
    f.fit_anisotropy = c.get("fit.fit_anisotropy", d.fit_anisotropy)?;
    if !(0.0..=1.0).contains(&f.anisotropy) {
        return input("fit.anisotropy must lie in [0, 1]");
    }
    if f.v_rel_floor <= 0.0 {
        return input("fit.v_rel_floor must be positive");
    }
    Ok(f)
}

/// Walls (`scene.walls = x1 y1 x2 y2; ...`) and fixed points
/// (`scene.points = x y; ...`).
pub fn obstacles(c: &Config) -> Result<Vec<Obstacle>> {
    let walls = c.groups("scene.walls", 4, &[])?;
    let points = c.groups("scene.points", 2, &[])?;
    let mut out: Vec<Obstacle> =
        walls.iter().map(|w| Obstacle::Segment(Vec2::new(w[0], w[1]), Vec2::new(w[2], w[3]))).collect();
    out.extend(points.iter().map(|p| Obstacle::Point(Vec2::new(p[0], p[1]))));
    Ok(out)
}

/// Entry and exit lines, `scene.gates = x1 y1 x2 y2; x1 y1 x2 y2`.
pub fn gates(c: &Config) -> Result<(Gate, Gate)> {
    let g = c.groups("scene.gates", 4, &[])?;
    if g.len() != 2 {
        return input("scene.gates must hold exactly two lines: x1 y1 x2 y2; x1 y1 x2 y2");
    }
    let line = |v: &[f64]| Gate::new(Vec2::new(v[0], v[1]), Vec2::new(v[2], v[3]));
    Ok((line(&g[0]), line(&g[1])))
}
