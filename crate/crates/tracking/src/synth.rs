//! Synthetic corridor scenes with known ground truth.
//!
//! Walkers move along straight lanes through a corridor watched by top-down
//! depth sensors. Each body is a torso cylinder with a narrow head capsule on
//! top (a cylinder capped by a hemisphere whose apex is at body height). Depth
//! frames are ray-cast from the sensor poses and perturbed by Gaussian noise.

use crowdcal_core::{Point3, Trajectory, TrajectoryId, TrajectoryPoint, TrajectorySet};
use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::geometry::{CameraIntrinsics, DepthFrame, RigidTransform, SensorView};
use crate::pipeline::mix_seed;
use crate::{Result, TrackingError};

pub const SENSOR_HEIGHT: f64 = 4.5;
pub const HEAD_RADIUS: f64 = 0.075;
/// Shoulder height as a fraction of body height.
pub const SHOULDER_RATIO: f64 = 0.82;
/// Ground truth and tracker output ignore positions closer than this to the
/// image border, where bodies are only partly visible.
pub const DEFAULT_VIEW_MARGIN_PX: f64 = 45.0;

/// Three top-down sensors 2 m apart along the corridor axis (x), with ids
/// 1, 2, 3. Image columns follow world x.
pub fn default_sensor_layout() -> Vec<SensorView> {
    [-2.0, 0.0, 2.0]
        .iter()
        .enumerate()
        .map(|(k, &x)| SensorView {
            sensor_id: k as u32 + 1,
            intrinsics: CameraIntrinsics::default(),
            pose: top_down_pose(x, 0.0, SENSOR_HEIGHT),
        })
        .collect()
}

pub fn top_down_pose(x: f64, y: f64, height: f64) -> RigidTransform {
    RigidTransform::new(Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, -1.0, -1.0)), Point3::new(x, y, height))
        .expect("diagonal flip is a rotation")
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkerSpec {
    pub id: TrajectoryId,
    pub height: f64,
    pub shoulder_width: f64,
    /// Lane position across the corridor.
    pub lane_y: f64,
    /// x at time `t_enter`.
    pub x_enter: f64,
    /// Signed walking speed along x.
    pub velocity_x: f64,
    pub t_enter: f64,
    pub t_exit: f64,
    pub sway_amplitude: f64,
    pub sway_period: f64,
    pub sway_phase: f64,
}

impl WalkerSpec {
    /// Head apex at time `t`, if the walker is in the scene.
    pub fn head_at(&self, t: f64) -> Option<Point3> {
        if t < self.t_enter - 1e-9 || t > self.t_exit + 1e-9 {
            return None;
        }
        let x = self.x_enter + self.velocity_x * (t - self.t_enter);
        let sway = if self.sway_amplitude > 0.0 {
            self.sway_amplitude * (std::f64::consts::TAU * t / self.sway_period + self.sway_phase).sin()
        } else {
            0.0
        };
        Some(Point3::new(x, self.lane_y + sway, self.height))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub walkers: Vec<WalkerSpec>,
    pub sensors: Vec<SensorView>,
    /// Depth noise standard deviation, meters.
    pub noise_sigma: f64,
    pub seed: u64,
    pub frame_rate: f64,
    pub duration: f64,
}

impl SyntheticScene {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0) || !(self.frame_rate > 0.0) || !(self.duration >= 0.0) {
            return Err(TrackingError::Config("scene needs σ ≥ 0, positive rate and duration".into()));
        }
        for w in &self.walkers {
            if !(1.4..=2.1).contains(&w.height) {
                return Err(TrackingError::Config(format!("walker {} height {} outside [1.4, 2.1]", w.id, w.height)));
            }
        }
        Ok(())
    }

    pub fn frame_count(&self) -> usize {
        (self.duration * self.frame_rate).round() as usize
    }

    pub fn frame_time(&self, k: usize) -> f64 {
        k as f64 / self.frame_rate
    }

    pub fn sensor(&self, sensor_id: u32) -> Option<&SensorView> {
        self.sensors.iter().find(|s| s.sensor_id == sensor_id)
    }

    /// Mean number of walkers per square meter inside `x_range` of a corridor
    /// of width `width`, averaged over all frames.
    pub fn mean_density(&self, x_range: (f64, f64), width: f64) -> f64 {
        let n = self.frame_count();
        if n == 0 {
            return 0.0;
        }
        let inside: usize = (0..n)
            .map(|k| {
                let t = self.frame_time(k);
                self.walkers
                    .iter()
                    .filter_map(|w| w.head_at(t))
                    .filter(|p| p.x >= x_range.0 && p.x <= x_range.1)
                    .count()
            })
            .sum();
        inside as f64 / n as f64 / ((x_range.1 - x_range.0) * width)
    }
}

/// Parameters of a generated corridor scene.
#[derive(Debug, Clone, PartialEq)]
pub struct CorridorConfig {
    pub walkers: usize,
    pub duration: f64,
    pub frame_rate: f64,
    /// Lane positions across the corridor; even-indexed lanes walk towards +x.
    pub lanes: Vec<f64>,
    /// Minimum spacing between consecutive walkers of one lane, meters.
    pub headway: f64,
    /// Start with every lane already filled at `headway` spacing.
    pub prefill: bool,
    pub x_limits: (f64, f64),
    pub speed_range: (f64, f64),
    pub height_mean: f64,
    pub height_sd: f64,
    pub height_range: (f64, f64),
    pub shoulder_range: (f64, f64),
    pub sway_amplitude: f64,
    pub noise_sigma: f64,
}

impl Default for CorridorConfig {
    fn default() -> Self {
        Self {
            walkers: 20,
            duration: 60.0,
            frame_rate: 30.0,
            lanes: vec![-0.7, 0.0, 0.7],
            headway: 1.5,
            prefill: false,
            x_limits: (-4.5, 4.5),
            speed_range: (1.0, 1.5),
            height_mean: 1.75,
            height_sd: 0.07,
            height_range: (1.6, 1.95),
            shoulder_range: (0.40, 0.48),
            sway_amplitude: 0.02,
            noise_sigma: 0.01,
        }
    }
}

impl CorridorConfig {
    /// Lanes filled end to end at `headway` for the whole duration; with the
    /// default three lanes and 1.5 m headway about one walker per m².
    pub fn dense(duration: f64) -> Self {
        Self { walkers: usize::MAX, duration, prefill: true, ..Self::default() }
    }
}

/// Builds a corridor scene over the default sensor layout.
pub fn generate_corridor(cfg: &CorridorConfig, seed: u64) -> Result<SyntheticScene> {
    if cfg.lanes.is_empty() || !(cfg.headway > 0.0) || !(cfg.speed_range.0 > 0.0) {
        return Err(TrackingError::Config("corridor needs lanes, positive headway and speed".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (x0, x1) = cfg.x_limits;
    let length = x1 - x0;
    let lane_speed: Vec<f64> =
        cfg.lanes.iter().map(|_| rng.random_range(cfg.speed_range.0..=cfg.speed_range.1)).collect();

    // (lane, time at which the walker is at the lane's entry end)
    let mut schedule: Vec<(usize, f64)> = Vec::new();
    if cfg.prefill {
        for (lane, &v) in lane_speed.iter().enumerate() {
            let gap = cfg.headway / v;
            let offset = rng.random_range(0.0..gap);
            let mut t = offset - length / v;
            while t < cfg.duration && schedule.len() < cfg.walkers {
                schedule.push((lane, t));
                t += gap * rng.random_range(1.0..1.15);
            }
        }
    } else {
        let traverse_max = length / cfg.speed_range.0;
        let latest = (cfg.duration - traverse_max).max(0.0);
        let mut draws: Vec<(usize, f64)> = (0..cfg.walkers)
            .map(|_| (rng.random_range(0..cfg.lanes.len()), rng.random_range(0.0..=latest)))
            .collect();
        draws.sort_by(|a, b| a.1.total_cmp(&b.1));
        let mut last = vec![f64::NEG_INFINITY; cfg.lanes.len()];
        for (lane, t) in draws {
            let t = t.max(last[lane] + cfg.headway / lane_speed[lane]);
            last[lane] = t;
            schedule.push((lane, t));
        }
    }
    schedule.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));

    let height_dist = Normal::new(cfg.height_mean, cfg.height_sd.max(0.0))
        .map_err(|e| TrackingError::Config(format!("height distribution: {e}")))?;
    let mut walkers = Vec::with_capacity(schedule.len());
    for (k, (lane, t_entry)) in schedule.into_iter().enumerate() {
        let v = lane_speed[lane];
        let dir = if lane % 2 == 0 { 1.0 } else { -1.0 };
        let x_entry = if dir > 0.0 { x0 } else { x1 };
        let height = height_dist.sample(&mut rng).clamp(cfg.height_range.0, cfg.height_range.1);
        let shoulder_width = rng.random_range(cfg.shoulder_range.0..=cfg.shoulder_range.1);
        let sway_period = rng.random_range(1.0..1.3);
        let sway_phase = rng.random_range(0.0..std::f64::consts::TAU);

        let t_enter = t_entry.max(0.0);
        let t_exit = (t_entry + length / v).min(cfg.duration);
        if t_exit <= t_enter {
            continue;
        }
        walkers.push(WalkerSpec {
            id: TrajectoryId::new(format!("w{k:03}")),
            height,
            shoulder_width,
            lane_y: cfg.lanes[lane],
            x_enter: x_entry + dir * v * (t_enter - t_entry),
            velocity_x: dir * v,
            t_enter,
            t_exit,
            sway_amplitude: cfg.sway_amplitude,
            sway_period,
            sway_phase,
        });
    }
    let scene = SyntheticScene {
        walkers,
        sensors: default_sensor_layout(),
        noise_sigma: cfg.noise_sigma,
        seed,
        frame_rate: cfg.frame_rate,
        duration: cfg.duration,
    };
    scene.validate()?;
    Ok(scene)
}

/// Entry and exit ray parameters of a solid vertical cylinder.
fn ray_cylinder(o: &Point3, d: &Point3, c: (f64, f64), r: f64, z0: f64, z1: f64) -> Option<f64> {
    let (ox, oy) = (o.x - c.0, o.y - c.1);
    let a = d.x * d.x + d.y * d.y;
    let (mut s0, mut s1) = if a < 1e-18 {
        if ox * ox + oy * oy > r * r {
            return None;
        }
        (f64::NEG_INFINITY, f64::INFINITY)
    } else {
        let b = ox * d.x + oy * d.y;
        let cc = ox * ox + oy * oy - r * r;
        let disc = b * b - a * cc;
        if disc < 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        ((-b - sq) / a, (-b + sq) / a)
    };
    if d.z.abs() < 1e-18 {
        if o.z < z0 || o.z > z1 {
            return None;
        }
    } else {
        let (a0, a1) = ((z0 - o.z) / d.z, (z1 - o.z) / d.z);
        s0 = s0.max(a0.min(a1));
        s1 = s1.min(a0.max(a1));
    }
    (s0 <= s1 && s1 > 0.0).then(|| s0.max(0.0))
}

fn ray_sphere(o: &Point3, d: &Point3, c: &Point3, r: f64) -> Option<f64> {
    let oc = *o - *c;
    let a = d.x * d.x + d.y * d.y + d.z * d.z;
    let b = oc.x * d.x + oc.y * d.y + oc.z * d.z;
    let cc = oc.x * oc.x + oc.y * oc.y + oc.z * oc.z - r * r;
    let disc = b * b - a * cc;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let (s0, s1) = ((-b - sq) / a, (-b + sq) / a);
    (s1 > 0.0).then(|| s0.max(0.0))
}

/// First ray parameter at which the ray enters the walker's body.
fn ray_body(o: &Point3, d: &Point3, head: &Point3, w: &WalkerSpec) -> Option<f64> {
    let c = (head.x, head.y);
    let shoulder = SHOULDER_RATIO * w.height;
    let head_center = Point3::new(head.x, head.y, w.height - HEAD_RADIUS);
    [
        ray_cylinder(o, d, c, w.shoulder_width / 2.0, 0.0, shoulder),
        ray_cylinder(o, d, c, HEAD_RADIUS, shoulder, head_center.z),
        ray_sphere(o, d, &head_center, HEAD_RADIUS),
    ]
    .into_iter()
    .flatten()
    .reduce(f64::min)
}

/// Depth image of `scene` seen by `sensor` at time `t`.
pub fn render_depth(scene: &SyntheticScene, sensor: &SensorView, t: f64) -> DepthFrame {
    let intr = &sensor.intrinsics;
    let (w, h) = (intr.width, intr.height);
    let mut frame = DepthFrame::blank(sensor.sensor_id, t, w, h);
    let mut zbuf = vec![f64::INFINITY; w * h];
    let origin = sensor.origin();
    let to_camera = sensor.pose.inverse();
    let (cx, cy) = intr.principal_point();

    for walker in &scene.walkers {
        let Some(head) = walker.head_at(t) else { continue };
        let r = (walker.shoulder_width / 2.0).max(HEAD_RADIUS);
        let Some((u0, u1, v0, v1)) = screen_box(sensor, &to_camera, &head, r) else { continue };
        for v in v0..=v1 {
            for u in u0..=u1 {
                let ray_cam = Point3::new((u as f64 - cx) / intr.focal_length_px, (v as f64 - cy) / intr.focal_length_px, 1.0);
                let dir = sensor.pose.rotate(&ray_cam);
                if let Some(s) = ray_body(&origin, &dir, &head, walker) {
                    let idx = v * w + u;
                    if s < zbuf[idx] {
                        zbuf[idx] = s;
                    }
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(scene.seed, sensor.sensor_id, t));
    let noise = (scene.noise_sigma > 0.0).then(|| Normal::new(0.0, scene.noise_sigma).expect("σ > 0"));
    for (idx, &z) in zbuf.iter().enumerate() {
        if !z.is_finite() {
            continue;
        }
        let z = match &noise {
            Some(n) => z + n.sample(&mut rng),
            None => z,
        };
        if intr.is_valid_depth(z) {
            frame.depth[idx] = z as f32;
        }
    }
    frame
}

/// Pixel box covering a body of radius `r` with apex `head`, clamped to the image.
fn screen_box(
    sensor: &SensorView,
    to_camera: &RigidTransform,
    head: &Point3,
    r: f64,
) -> Option<(usize, usize, usize, usize)> {
    let intr = &sensor.intrinsics;
    let (mut umin, mut umax, mut vmin, mut vmax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &dx in &[-r, r] {
        for &dy in &[-r, r] {
            for &z in &[0.0, head.z] {
                let pc = to_camera.apply(&Point3::new(head.x + dx, head.y + dy, z));
                let (u, v) = intr.project(&pc)?;
                umin = umin.min(u);
                umax = umax.max(u);
                vmin = vmin.min(v);
                vmax = vmax.max(v);
            }
        }
    }
    let (wmax, hmax) = (intr.width as f64 - 1.0, intr.height as f64 - 1.0);
    if umax < 0.0 || vmax < 0.0 || umin > wmax || vmin > hmax {
        return None;
    }
    Some((
        umin.floor().max(0.0) as usize,
        umax.ceil().min(wmax) as usize,
        vmin.floor().max(0.0) as usize,
        vmax.ceil().min(hmax) as usize,
    ))
}

/// Every frame of one sensor, rendered in parallel.
pub fn render_sequence(scene: &SyntheticScene, sensor: &SensorView) -> Vec<DepthFrame> {
    (0..scene.frame_count()).into_par_iter().map(|k| render_depth(scene, sensor, scene.frame_time(k))).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneTruth {
    /// Unclipped head trajectories.
    pub global: TrajectorySet,
    /// Head trajectories restricted to each sensor's view, keyed by sensor id.
    pub per_sensor: Vec<(u32, TrajectorySet)>,
}

/// True head trajectories sampled at the scene frame times. A per-sensor
/// segment is a maximal run of samples the sensor sees with `margin_px`
/// clearance; segments are named `"{walker}@{sensor}"`, with `#k` appended
/// after the first run.
pub fn ground_truth(scene: &SyntheticScene, margin_px: f64) -> Result<SceneTruth> {
    let samples: Vec<(TrajectoryId, Vec<TrajectoryPoint>)> = scene
        .walkers
        .iter()
        .map(|w| {
            let pts = (0..scene.frame_count())
                .map(|k| scene.frame_time(k))
                .filter_map(|t| w.head_at(t).map(|p| TrajectoryPoint::new(t, p)))
                .collect();
            (w.id.clone(), pts)
        })
        .filter(|(_, pts): &(TrajectoryId, Vec<TrajectoryPoint>)| !pts.is_empty())
        .collect();

    let global = TrajectorySet::new(
        samples.iter().map(|(id, pts)| Trajectory::new(id.clone(), pts.clone())).collect::<crowdcal_core::Result<_>>()?,
        scene.frame_rate,
    )?;

    let mut per_sensor = Vec::with_capacity(scene.sensors.len());
    for sensor in &scene.sensors {
        let mut trajectories = Vec::new();
        for (id, pts) in &samples {
            let mut runs: Vec<Vec<TrajectoryPoint>> = Vec::new();
            let mut open = false;
            for p in pts {
                if sensor.sees(&p.position, margin_px) {
                    if !open {
                        runs.push(Vec::new());
                        open = true;
                    }
                    runs.last_mut().unwrap().push(*p);
                } else {
                    open = false;
                }
            }
            for (k, run) in runs.into_iter().enumerate() {
                let name = if k == 0 { format!("{id}@{}", sensor.sensor_id) } else { format!("{id}@{}#{}", sensor.sensor_id, k + 1) };
                trajectories.push(Trajectory::new(name, run)?);
            }
        }
        per_sensor.push((sensor.sensor_id, TrajectorySet::new(trajectories, scene.frame_rate)?));
    }
    Ok(SceneTruth { global, per_sensor })
}

/// Fragments from two neighbouring sensors with known true pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SeamDataset {
    pub set_a: TrajectorySet,
    pub set_b: TrajectorySet,
    /// `(fragment in A, fragment in B)` for every walker seen by both.
    pub truth_pairs: Vec<(TrajectoryId, TrajectoryId)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeamConfig {
    pub walkers: usize,
    pub distractors: usize,
    pub duration: f64,
    /// Position noise added to every fragment sample, meters.
    pub position_noise: f64,
    pub sensor_a: u32,
    pub sensor_b: u32,
}

impl Default for SeamConfig {
    fn default() -> Self {
        Self { walkers: 20, distractors: 5, duration: 60.0, position_noise: 0.03, sensor_a: 1, sensor_b: 2 }
    }
}

/// Per-sensor fragments of a sparse corridor scene seen by `sensor_a` and
/// `sensor_b`, with noise, plus short spurious fragments near the seam.
pub fn seam_dataset(cfg: &SeamConfig, seed: u64) -> Result<SeamDataset> {
    let corridor = CorridorConfig { walkers: cfg.walkers, duration: cfg.duration, ..CorridorConfig::default() };
    let scene = generate_corridor(&corridor, seed)?;
    let truth = ground_truth(&scene, DEFAULT_VIEW_MARGIN_PX)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5ea_0001));
    let noise = Normal::new(0.0, cfg.position_noise.max(1e-12))
        .map_err(|e| TrackingError::Config(format!("noise: {e}")))?;

    let pick = |id: u32| {
        truth
            .per_sensor
            .iter()
            .find(|(s, _)| *s == id)
            .map(|(_, set)| set.clone())
            .ok_or_else(|| TrackingError::Config(format!("no sensor {id} in layout")))
    };
    let (clip_a, clip_b) = (pick(cfg.sensor_a)?, pick(cfg.sensor_b)?);

    let perturb = |rng: &mut ChaCha8Rng, traj: &Trajectory, id: String| -> Result<Trajectory> {
        let pts = traj
            .points()
            .iter()
            .map(|p| {
                let q = p.position;
                let (dx, dy, dz) = (noise.sample(rng), noise.sample(rng), noise.sample(rng));
                TrajectoryPoint::new(p.t, Point3::new(q.x + dx, q.y + dy, q.z + dz))
            })
            .collect();
        Ok(Trajectory::new(id, pts)?)
    };

    let mut frag_a = Vec::new();
    let mut frag_b = Vec::new();
    let mut truth_pairs = Vec::new();
    for w in &scene.walkers {
        let a = clip_a.get(&TrajectoryId::new(format!("{}@{}", w.id, cfg.sensor_a)));
        let b = clip_b.get(&TrajectoryId::new(format!("{}@{}", w.id, cfg.sensor_b)));
        let ida = format!("a-{}", w.id);
        let idb = format!("b-{}", w.id);
        if let Some(a) = a {
            frag_a.push(perturb(&mut rng, a, ida.clone())?);
        }
        if let Some(b) = b {
            frag_b.push(perturb(&mut rng, b, idb.clone())?);
        }
        if a.is_some() && b.is_some() {
            truth_pairs.push((TrajectoryId::new(ida), TrajectoryId::new(idb)));
        }
    }

    let seam_x = {
        let xa = scene.sensor(cfg.sensor_a).map(|s| s.origin().x).unwrap_or(0.0);
        let xb = scene.sensor(cfg.sensor_b).map(|s| s.origin().x).unwrap_or(0.0);
        (xa + xb) / 2.0
    };
    for k in 0..cfg.distractors {
        let len = rng.random_range(0.3..1.0);
        let t0 = rng.random_range(0.0..(cfg.duration - len).max(0.0));
        let x0 = seam_x + rng.random_range(-1.0..1.0);
        let y0 = rng.random_range(-0.8..0.8);
        let (vx, vy) = (rng.random_range(-1.0..1.0), rng.random_range(-0.3..0.3));
        let z = rng.random_range(1.5..1.9);
        let n = (len * scene.frame_rate).round().max(2.0) as usize;
        let pts = (0..n)
            .map(|i| {
                let t = t0 + i as f64 / scene.frame_rate;
                TrajectoryPoint::new(t, Point3::new(x0 + vx * (t - t0), y0 + vy * (t - t0), z))
            })
            .collect();
        let raw = Trajectory::new("tmp", pts)?;
        if x0 < seam_x {
            frag_a.push(perturb(&mut rng, &raw, format!("a-noise{k}"))?);
        } else {
            frag_b.push(perturb(&mut rng, &raw, format!("b-noise{k}"))?);
        }
    }
    Ok(SeamDataset {
        set_a: TrajectorySet::new(frag_a, scene.frame_rate)?,
        set_b: TrajectorySet::new(frag_b, scene.frame_rate)?,
        truth_pairs,
    })
}
