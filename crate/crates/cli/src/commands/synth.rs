use std::fmt::Write as _;

use crowdcal_core::{Point3, Vec2};
use crowdcal_tracking::detection::BackgroundModel;
use crowdcal_tracking::geometry::{write_calibration, CameraIntrinsics, write_matches, PointMatch, SensorView};
use crowdcal_tracking::synth::{
    generate_corridor, ground_truth, render_depth, seam_dataset, CorridorConfig, SeamConfig, DEFAULT_VIEW_MARGIN_PX,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crowdcal_sim::scenario::{generate, CorridorScenario};
use crowdcal_sim::socialforce::{ModelParams, Obstacle, Repulsion, Variant};

use crate::error::{input, Result};
use crate::run::Run;
use crate::config::Config;

/// Frames rendered per batch; bounds memory for long scenes.
const RENDER_BATCH: usize = 64;

/// Stretch of corridor (x range and width, m) the reported density covers:
/// the three sensors' combined footprint.
const DENSITY_WINDOW: (f64, f64) = (-3.3, 3.3);
const DENSITY_WIDTH: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSummary {
    pub walkers: usize,
    pub frames_per_sensor: usize,
    pub sensors: Vec<u32>,
}

pub fn kind(c: &Config) -> Result<String> {
    c.get("synth.kind", "corridor".to_string())
}

pub fn synth(run: &Run) -> Result<SynthSummary> {
    match kind(&run.config)?.as_str() {
        "corridor" => corridor(run),
        "seam" => seam(run),
        "crowd" => crowd(run),
        other => input(format!("synth.kind must be corridor, seam or crowd, got {other:?}")),
    }
}

pub struct CorridorSettings {
    pub scene: CorridorConfig,
    pub intrinsics: CameraIntrinsics,
    pub view_margin_px: f64,
    pub matches_per_sensor: usize,
    pub match_noise: f64,
}

pub fn corridor_settings(c: &Config) -> Result<CorridorSettings> {
    let d = CorridorConfig::default();
    let cfg = CorridorConfig {
        walkers: c.get("synth.walkers", d.walkers)?,
        duration: c.f64("synth.duration", d.duration)?,
        frame_rate: c.f64("synth.frame_rate", d.frame_rate)?,
        lanes: c.f64_list("synth.lanes", &d.lanes)?,
        headway: c.f64("synth.headway", d.headway)?,
        prefill: c.get("synth.prefill", d.prefill)?,
        speed_range: (c.f64("synth.speed_min", d.speed_range.0)?, c.f64("synth.speed_max", d.speed_range.1)?),
        noise_sigma: c.f64("synth.noise_sigma", d.noise_sigma)?,
        ..d
    };
    let view_margin_px = c.f64("synth.view_margin_px", DEFAULT_VIEW_MARGIN_PX)?;
    let matches_per_sensor: usize = c.get("synth.matches_per_sensor", 10)?;
    let match_noise = c.f64("synth.match_noise", 0.005)?;
    let intrinsics = crate::settings::intrinsics(c)?;
    if match_noise < 0.0 {
        return input("synth.match_noise must be non-negative");
    }
    Ok(CorridorSettings { scene: cfg, intrinsics, view_margin_px, matches_per_sensor, match_noise })
}

fn corridor(run: &Run) -> Result<SynthSummary> {
    let CorridorSettings { scene: cfg, intrinsics, view_margin_px: margin, matches_per_sensor: match_count, match_noise } =
        corridor_settings(&run.config)?;
    run.check_config()?;

    let mut scene = generate_corridor(&cfg, run.stage_seed("synth.scene"))?;
    for s in &mut scene.sensors {
        s.intrinsics = intrinsics;
    }
    scene.validate()?;
    let truth = ground_truth(&scene, margin)?;
    let frames = scene.frame_count();

    for sensor in &scene.sensors {
        let mut k0 = 0;
        while k0 < frames {
            let k1 = (k0 + RENDER_BATCH).min(frames);
            let batch: Vec<Vec<u8>> = (k0..k1)
                .into_par_iter()
                .map(|k| {
                    let mut buf = Vec::new();
                    render_depth(&scene, sensor, scene.frame_time(k)).write_to(&mut buf).map(|_| buf)
                })
                .collect::<crowdcal_tracking::Result<_>>()?;
            for (k, bytes) in (k0..k1).zip(batch) {
                run.write(&format!("frames/sensor{}_{k:06}.dpf", sensor.sensor_id), &bytes)?;
            }
            k0 = k1;
        }
    }

    run.write_trajectories("truth_global.txt", &truth.global, &[])?;
    for (id, set) in &truth.per_sensor {
        run.write_trajectories(&format!("truth_sensor{id}.txt"), set, &[])?;
    }

    let poses: Vec<_> = scene.sensors.iter().map(|s| (s.sensor_id, s.pose)).collect();
    let mut cal = Vec::new();
    write_calibration(&mut cal, &poses)?;
    run.write_text("calibration_true.txt", std::str::from_utf8(&cal).expect("UTF-8"))?;

    let matches = reference_matches(&scene.sensors, match_count, match_noise, run.stage_seed("synth.matches"));
    let mut mbuf = Vec::new();
    write_matches(&mut mbuf, &matches)?;
    run.write_text("matches.txt", std::str::from_utf8(&mbuf).expect("UTF-8"))?;

    let mut bg = Vec::new();
    BackgroundModel::new(vec![])?.write(&mut bg)?;
    run.write_text("background.txt", std::str::from_utf8(&bg).expect("UTF-8"))?;

    let mut summary = String::from("key,value\n");
    writeln!(summary, "walkers,{}", scene.walkers.len()).unwrap();
    writeln!(summary, "frames_per_sensor,{frames}").unwrap();
    writeln!(summary, "sensors,{}", scene.sensors.len()).unwrap();
    writeln!(summary, "mean_density_per_m2,{:.4}", scene.mean_density(DENSITY_WINDOW, DENSITY_WIDTH)).unwrap();
    run.write_text("scene.csv", &summary)?;
    println!("{} walkers, {} sensors, {frames} frames per sensor", scene.walkers.len(), scene.sensors.len());

    Ok(SynthSummary {
        walkers: scene.walkers.len(),
        frames_per_sensor: frames,
        sensors: scene.sensors.iter().map(|s| s.sensor_id).collect(),
    })
}

/// Reference points on boxes below each sensor, with their camera-frame
/// coordinates perturbed by isotropic Gaussian noise.
fn reference_matches(sensors: &[SensorView], per_sensor: usize, sigma: f64, seed: u64) -> Vec<(u32, PointMatch)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).expect("sigma is finite and non-negative");
    let mut out = Vec::new();
    for s in sensors {
        let o = s.origin();
        let inv = s.pose.inverse();
        for _ in 0..per_sensor {
            let world = Point3::new(
                o.x + rng.random_range(-1.0..1.0),
                o.y + rng.random_range(-0.8..0.8),
                rng.random_range(0.0..1.2),
            );
            let c = inv.apply(&world);
            let camera =
                Point3::new(c.x + noise.sample(&mut rng), c.y + noise.sample(&mut rng), c.z + noise.sample(&mut rng));
            out.push((s.sensor_id, PointMatch { world, camera }));
        }
    }
    out
}

pub fn seam_settings(c: &Config) -> Result<SeamConfig> {
    let d = SeamConfig::default();
    Ok(SeamConfig {
        walkers: c.get("synth.walkers", d.walkers)?,
        distractors: c.get("synth.distractors", d.distractors)?,
        duration: c.f64("synth.duration", d.duration)?,
        position_noise: c.f64("synth.position_noise", d.position_noise)?,
        sensor_a: c.get("synth.sensor_a", d.sensor_a)?,
        sensor_b: c.get("synth.sensor_b", d.sensor_b)?,
    })
}

fn seam(run: &Run) -> Result<SynthSummary> {
    let cfg = seam_settings(&run.config)?;
    run.check_config()?;
    let data = seam_dataset(&cfg, run.stage_seed("synth.seam"))?;
    run.write_trajectories(&format!("fragments_sensor{}.txt", cfg.sensor_a), &data.set_a, &[])?;
    run.write_trajectories(&format!("fragments_sensor{}.txt", cfg.sensor_b), &data.set_b, &[])?;
    let mut pairs = String::from("id_a,id_b\n");
    for (a, b) in &data.truth_pairs {
        writeln!(pairs, "{a},{b}").unwrap();
    }
    run.write_text("truth_pairs.csv", &pairs)?;
    println!(
        "{} + {} fragments, {} true pairs",
        data.set_a.len(),
        data.set_b.len(),
        data.truth_pairs.len()
    );
    Ok(SynthSummary { walkers: cfg.walkers, frames_per_sensor: 0, sensors: vec![cfg.sensor_a, cfg.sensor_b] })
}

/// Social Force crowd in a walled corridor with people standing still. The
/// trajectories feed `fit`; `scene.conf` holds the matching walls and gates.
pub fn crowd_settings(c: &Config) -> Result<(CorridorScenario, ModelParams)> {
    let preset: String = c.get("crowd.preset", "sparse_passing".to_string())?;
    let base = match preset.as_str() {
        "sparse_passing" => CorridorScenario::sparse_passing(),
        "default" => CorridorScenario::default(),
        other => return input(format!("crowd.preset must be sparse_passing or default, got {other:?}")),
    };
    let base_standing: Vec<Vec<f64>> = base.standing.iter().map(|p| vec![p.x, p.y]).collect();
    let standing = c.groups("crowd.standing", 2, &base_standing)?;
    let cfg = CorridorScenario {
        length: c.f64("crowd.length", base.length)?,
        width: c.f64("crowd.width", base.width)?,
        duration: c.f64("crowd.duration", base.duration)?,
        arrival_rate: c.f64("crowd.arrival_rate", base.arrival_rate)?,
        two_way: c.get("crowd.two_way", base.two_way)?,
        standing: standing.iter().map(|p| Vec2::new(p[0], p[1])).collect(),
        ..base
    };
    let variant: Variant = c.get::<String>("crowd.variant", "C".to_string())?.parse()?;
    let default_coeffs: &[f64] = match variant {
        Variant::A | Variant::B => &[2.0, 0.3],
        Variant::C => &[1.5, 1.0, 1.0, 1.5, 1.0, 1.0],
    };
    let coeffs = c.f64_list("crowd.coefficients", default_coeffs)?;
    Ok((cfg, ModelParams::new(Repulsion::from_slice(variant, &coeffs)?)))
}

fn crowd(run: &Run) -> Result<SynthSummary> {
    let (cfg, params) = crowd_settings(&run.config)?;
    run.check_config()?;
    let data = generate(&cfg, &params, run.stage_seed("synth.crowd"))?;
    if !data.timed_out.is_empty() {
        run.warn(format!("{} walkers did not reach their goal in time", data.timed_out.len()));
    }
    run.write_trajectories("trajectories.txt", &data.set, &[])?;

    let mut walls = Vec::new();
    let mut points = Vec::new();
    for o in &data.obstacles {
        match o {
            Obstacle::Segment(a, b) => walls.push(format!("{} {} {} {}", a.x, a.y, b.x, b.y)),
            Obstacle::Point(p) => points.push(format!("{} {}", p.x, p.y)),
        }
    }
    let (g0, g1) = data.gates;
    let mut conf = String::new();
    writeln!(conf, "scene.walls = {}", walls.join("; ")).unwrap();
    if !points.is_empty() {
        writeln!(conf, "scene.points = {}", points.join("; ")).unwrap();
    }
    writeln!(
        conf,
        "scene.gates = {} {} {} {}; {} {} {} {}",
        g0.a.x, g0.a.y, g0.b.x, g0.b.y, g1.a.x, g1.a.y, g1.b.x, g1.b.y
    )
    .unwrap();
    run.write_text("scene.conf", &conf)?;
    let walkers = data.walkers.len();
    println!("{walkers} walkers and {} standing people", data.set.len() - walkers);
    Ok(SynthSummary { walkers, frames_per_sensor: 0, sensors: vec![] })
}
