//! Replay calibration.
//!
//! Each observed pedestrian is simulated on its own while everybody else
//! moves along their recorded path. The simulated path is compared with the
//! observed one, and the model coefficients are fitted by minimising the
//! mean score over all replayed pedestrians.

use std::fmt::Write as _;
use std::str::FromStr;

use crowdcal_core::{Point3, Trajectory, TrajectoryId, TrajectoryPoint, TrajectorySet, Vec2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::optimize::{genetic_minimize, nelder_mead, GaConfig, NelderMeadConfig};
use crate::socialforce::{
    integrate, total_force, Agent, ModelParams, Neighbor, Obstacle, Repulsion, Variant, DEFAULT_ANISOTROPY,
    DEFAULT_RADIUS, DEFAULT_RELAXATION_TIME, DEFAULT_V_REL_FLOOR,
};
use crate::stats::{percentile, smoothed_speeds, SPEED_SMOOTHING_WINDOW};
use crate::{Result, SimError};

/// Matching tolerance for timestamps of different trajectories (s).
const TIME_EPS: f64 = 1e-9;
/// Separations are floored here before entering the overlap penalty (m).
const MIN_PENALTY_DISTANCE: f64 = 1e-3;

/// Form of the overlap penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyForm {
    /// `max(0, 1/‖d‖ - 1/(r_α + r_β))`: zero unless the discs overlap.
    Corrected,
    /// `max(0, 1/‖d‖ + 1/(r_α + r_β))`, which is positive for any
    /// separation. Kept for comparison runs.
    Printed,
    Disabled,
}

impl PenaltyForm {
    fn term(self, dist: f64, contact: f64) -> f64 {
        let inv = 1.0 / dist.max(MIN_PENALTY_DISTANCE);
        match self {
            PenaltyForm::Corrected => (inv - 1.0 / contact).max(0.0),
            PenaltyForm::Printed => inv + 1.0 / contact,
            PenaltyForm::Disabled => 0.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PenaltyForm::Corrected => "corrected",
            PenaltyForm::Printed => "printed",
            PenaltyForm::Disabled => "disabled",
        }
    }
}

impl FromStr for PenaltyForm {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "corrected" => Ok(PenaltyForm::Corrected),
            "printed" => Ok(PenaltyForm::Printed),
            "disabled" | "off" => Ok(PenaltyForm::Disabled),
            other => Err(SimError::Params(format!("unknown penalty form {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveConfig {
    /// Percentile of observed speeds used as the desired speed.
    pub desired_speed_percentile: f64,
    pub penalty: PenaltyForm,
    /// Share of trajectories in the calibration split.
    pub split_ratio: f64,
    /// Body radius of every pedestrian (m).
    pub radius: f64,
    /// τ used in replays unless it is fitted.
    pub relaxation_time: f64,
    /// Longest tolerated sampling gap of a co-pedestrian (s).
    pub max_gap: f64,
    /// Shorter trajectories (standing people) are not replayed.
    pub min_path_length: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            desired_speed_percentile: 90.0,
            penalty: PenaltyForm::Corrected,
            split_ratio: 0.76,
            radius: DEFAULT_RADIUS,
            relaxation_time: DEFAULT_RELAXATION_TIME,
            max_gap: 0.5,
            min_path_length: 1.0,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        let p = self.desired_speed_percentile;
        if !(p > 0.0 && p <= 100.0) {
            return Err(SimError::Params(format!("percentile must lie in (0, 100], got {p}")));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(SimError::Params(format!("split ratio must lie in (0, 1), got {}", self.split_ratio)));
        }
        for (name, v) in [("radius", self.radius), ("relaxation_time", self.relaxation_time), ("max_gap", self.max_gap)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::Params(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn echo(&self) -> Vec<(String, String)> {
        vec![
            ("objective.desired_speed_percentile".into(), self.desired_speed_percentile.to_string()),
            ("objective.penalty".into(), self.penalty.name().into()),
            ("objective.split_ratio".into(), self.split_ratio.to_string()),
            ("objective.radius".into(), self.radius.to_string()),
            ("objective.relaxation_time".into(), self.relaxation_time.to_string()),
            ("objective.max_gap".into(), self.max_gap.to_string()),
            ("objective.min_path_length".into(), self.min_path_length.to_string()),
        ]
    }
}

/// Desired speed of a pedestrian: a percentile of the smoothed observed
/// speeds.
pub fn desired_speed(traj: &Trajectory, pct: f64) -> Option<f64> {
    percentile(&smoothed_speeds(traj, SPEED_SMOOTHING_WINDOW), pct)
}

/// Position and velocity of a recorded pedestrian at `t`. At a sample the
/// velocity is the backward difference to the previous sample; between
/// samples it is the slope of the enclosing segment.
fn state_at(traj: &Trajectory, t: f64) -> Option<(Vec2, Vec2)> {
    let pts = traj.points();
    if t < pts[0].t - TIME_EPS || t > pts[pts.len() - 1].t + TIME_EPS {
        return None;
    }
    let slope = |i: usize| -> Vec2 {
        if pts.len() < 2 {
            return Vec2::ZERO;
        }
        let (a, b) = if i == 0 { (&pts[0], &pts[1]) } else { (&pts[i - 1], &pts[i]) };
        (b.position.xy() - a.position.xy()) / (b.t - a.t)
    };
    let i = pts.partition_point(|p| p.t <= t + TIME_EPS).max(1) - 1;
    if (pts[i].t - t).abs() <= TIME_EPS || i + 1 == pts.len() {
        return Some((pts[i].position.xy(), slope(i)));
    }
    let (a, b) = (&pts[i], &pts[i + 1]);
    let s = (t - a.t) / (b.t - a.t);
    let pos = a.position.xy() + (b.position.xy() - a.position.xy()) * s;
    Some((pos, slope(i + 1)))
}

/// Neighbour states at each of `times`, tagged with the index of the
/// co-pedestrian they belong to.
fn neighbor_frames(times: &[f64], others: &[&Trajectory], radius: f64) -> Vec<Vec<(usize, Neighbor)>> {
    times
        .iter()
        .map(|&t| {
            others
                .iter()
                .enumerate()
                .filter_map(|(k, o)| {
                    state_at(o, t).map(|(position, velocity)| (k, Neighbor { position, velocity, radius }))
                })
                .collect()
        })
        .collect()
}

/// One pedestrian prepared for replay.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayTask {
    subject: Trajectory,
    desired_speed: f64,
    radius: f64,
    obstacles: Vec<Obstacle>,
    co_pedestrians: Vec<TrajectoryId>,
    frames: Vec<Vec<(usize, Neighbor)>>,
}

impl ReplayTask {
    /// Prepare `subject` for replay against every other trajectory of
    /// `context` that overlaps it in time.
    pub fn new(
        subject: &Trajectory,
        context: &TrajectorySet,
        obstacles: &[Obstacle],
        cfg: &ObjectiveConfig,
    ) -> Result<ReplayTask> {
        let reject = |msg: String| SimError::Task { id: subject.id().to_string(), msg };
        if subject.len() < 2 || subject.start_time() >= subject.end_time() {
            return Err(reject("zero-length replay window".into()));
        }
        let start = subject.first().position.xy();
        let goal = subject.last().position.xy();
        if start.distance(goal) <= 1e-6 {
            return Err(reject("start and goal coincide".into()));
        }
        if subject.path_length() < cfg.min_path_length {
            return Err(reject(format!("path shorter than {} m", cfg.min_path_length)));
        }
        let desired_speed = desired_speed(subject, cfg.desired_speed_percentile)
            .filter(|v| *v > 0.0 && v.is_finite())
            .ok_or_else(|| reject("no positive observed speed".into()))?;

        let (t_in, t_out) = (subject.start_time(), subject.end_time());
        let others: Vec<&Trajectory> = context
            .iter()
            .filter(|o| o.id() != subject.id())
            .filter(|o| o.start_time() <= t_out + TIME_EPS && o.end_time() >= t_in - TIME_EPS)
            .collect();
        for o in &others {
            let gap = o
                .points()
                .windows(2)
                .filter(|w| w[1].t > t_in && w[0].t < t_out)
                .map(|w| w[1].t - w[0].t)
                .fold(0.0, f64::max);
            if gap > cfg.max_gap {
                return Err(reject(format!("co-pedestrian {} has a {gap:.2} s gap", o.id())));
            }
        }
        let times: Vec<f64> = subject.points().iter().map(|p| p.t).collect();
        Ok(ReplayTask {
            subject: subject.clone(),
            desired_speed,
            radius: cfg.radius,
            obstacles: obstacles.to_vec(),
            co_pedestrians: others.iter().map(|o| o.id().clone()).collect(),
            frames: neighbor_frames(&times, &others, cfg.radius),
        })
    }

    pub fn subject(&self) -> &Trajectory {
        &self.subject
    }

    pub fn desired_speed(&self) -> f64 {
        self.desired_speed
    }

    /// Replace the desired speed estimated from the recording.
    pub fn with_desired_speed(self, desired_speed: f64) -> Result<Self> {
        if !(desired_speed > 0.0 && desired_speed.is_finite()) {
            return Err(SimError::Params(format!("desired speed must be positive, got {desired_speed}")));
        }
        Ok(Self { desired_speed, ..self })
    }

    pub fn co_pedestrians(&self) -> &[TrajectoryId] {
        &self.co_pedestrians
    }

    pub fn t_in(&self) -> f64 {
        self.subject.start_time()
    }

    pub fn t_out(&self) -> f64 {
        self.subject.end_time()
    }

    /// M_α, the number of replayed steps.
    pub fn steps(&self) -> usize {
        self.subject.len()
    }

    fn simulate(&self, params: &ModelParams, relaxation_time: f64) -> Result<Vec<Vec2>> {
        let pts = self.subject.points();
        let start = pts[0].position.xy();
        let goal = pts[pts.len() - 1].position.xy();
        let heading = (goal - start).normalized().expect("start and goal differ");
        let mut agent = Agent {
            id: 0,
            position: start,
            velocity: heading * self.desired_speed,
            desired_speed: self.desired_speed,
            goal,
            radius: self.radius,
            relaxation_time,
        };
        let mut out = Vec::with_capacity(pts.len());
        out.push(start);
        for i in 1..pts.len() {
            let dt = pts[i].t - pts[i - 1].t;
            let step_params = ModelParams { dt, ..*params };
            let f = total_force(&agent, self.frames[i - 1].iter().map(|(_, n)| n), &self.obstacles, &step_params);
            if !f.is_finite() {
                return Err(SimError::NonFinite { id: 0, t: pts[i - 1].t });
            }
            integrate(&mut agent, f, dt);
            out.push(agent.position);
        }
        Ok(out)
    }

    fn score(&self, params: &ModelParams, relaxation_time: f64, form: PenaltyForm) -> Result<f64> {
        let sim = self.simulate(params, relaxation_time)?;
        let d = mean_distance(self.subject.points(), &sim);
        let g = penalty(&sim, &self.frames, self.co_pedestrians.len(), self.radius, form);
        let value = d / (self.t_out() - self.t_in()) + g;
        if value.is_finite() {
            Ok(value)
        } else {
            Err(SimError::NonFinite { id: 0, t: self.t_in() })
        }
    }
}

/// Build replay tasks for every trajectory of `subjects`, with `context`
/// supplying the co-pedestrians. Rejected subjects are returned with the
/// reason.
pub fn build_tasks(
    subjects: &TrajectorySet,
    context: &TrajectorySet,
    obstacles: &[Obstacle],
    cfg: &ObjectiveConfig,
) -> Result<(Vec<ReplayTask>, Rejected)> {
    cfg.validate()?;
    let built: Vec<Result<ReplayTask>> =
        subjects.trajectories().par_iter().map(|s| ReplayTask::new(s, context, obstacles, cfg)).collect();
    let mut tasks = Vec::new();
    let mut rejected = Vec::new();
    for (s, r) in subjects.iter().zip(built) {
        match r {
            Ok(t) => tasks.push(t),
            Err(e) => rejected.push((s.id().clone(), e.to_string())),
        }
    }
    Ok((tasks, rejected))
}

/// Simulated counterpart of the task's subject, sampled at the observed
/// timestamps. Heights are copied from the observation.
pub fn replay_simulate(task: &ReplayTask, params: &ModelParams, relaxation_time: f64) -> Result<Trajectory> {
    params.validate()?;
    let sim = task.simulate(params, relaxation_time)?;
    let pts = task
        .subject
        .points()
        .iter()
        .zip(sim)
        .map(|(p, q)| TrajectoryPoint::new(p.t, Point3::new(q.x, q.y, p.position.z)))
        .collect();
    Ok(Trajectory::new(task.subject.id().clone(), pts)?)
}

/// Trajectories that could not be used, with the reason.
pub type Rejected = Vec<(TrajectoryId, String)>;

/// Replays of all tasks in task order. Failed replays are listed with the
/// reason instead.
pub fn replay_all(tasks: &[ReplayTask], params: &ModelParams, relaxation_time: f64) -> (Vec<Trajectory>, Rejected) {
    let results: Vec<Result<Trajectory>> =
        tasks.par_iter().map(|t| replay_simulate(t, params, relaxation_time)).collect();
    let mut replays = Vec::with_capacity(tasks.len());
    let mut failures = Vec::new();
    for (task, r) in tasks.iter().zip(results) {
        match r {
            Ok(t) => replays.push(t),
            Err(e) => failures.push((task.subject.id().clone(), e.to_string())),
        }
    }
    (replays, failures)
}

fn mean_distance(observed: &[TrajectoryPoint], sim: &[Vec2]) -> f64 {
    observed.iter().zip(sim).map(|(p, q)| p.position.xy().distance(*q)).sum::<f64>() / observed.len() as f64
}

fn penalty(
    sim: &[Vec2],
    frames: &[Vec<(usize, Neighbor)>],
    n_others: usize,
    radius: f64,
    form: PenaltyForm,
) -> f64 {
    if n_others == 0 || form == PenaltyForm::Disabled {
        return 0.0;
    }
    let mut worst = vec![0.0f64; n_others];
    for (pos, frame) in sim.iter().zip(frames) {
        for (k, n) in frame {
            let term = form.term(pos.distance(n.position), radius + n.radius);
            worst[*k] = worst[*k].max(term);
        }
    }
    worst.iter().sum::<f64>() / n_others as f64
}

/// Mean horizontal distance between paired samples of two equally long
/// trajectories with matching timestamps.
pub fn trajectory_distance(observed: &Trajectory, simulated: &Trajectory) -> Result<f64> {
    let bad = |msg: String| SimError::Task { id: observed.id().to_string(), msg };
    if observed.len() != simulated.len() {
        return Err(bad(format!("lengths differ: {} vs {}", observed.len(), simulated.len())));
    }
    if let Some((p, q)) =
        observed.points().iter().zip(simulated.points()).find(|(p, q)| (p.t - q.t).abs() > TIME_EPS)
    {
        return Err(bad(format!("timestamps differ: {} vs {}", p.t, q.t)));
    }
    let sim: Vec<Vec2> = simulated.points().iter().map(|p| p.position.xy()).collect();
    Ok(mean_distance(observed.points(), &sim))
}

/// Overlap penalty of a simulated pedestrian against co-pedestrians,
/// averaged over the co-pedestrians. Each contributes its worst moment.
pub fn overlap_penalty(
    simulated: &Trajectory,
    others: &[Trajectory],
    radius: f64,
    other_radius: f64,
    form: PenaltyForm,
) -> f64 {
    let times: Vec<f64> = simulated.points().iter().map(|p| p.t).collect();
    let refs: Vec<&Trajectory> = others.iter().collect();
    let frames = neighbor_frames(&times, &refs, other_radius);
    let sim: Vec<Vec2> = simulated.points().iter().map(|p| p.position.xy()).collect();
    penalty(&sim, &frames, others.len(), radius, form)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Similarity {
    /// Mean task score over the tasks that could be replayed.
    pub value: f64,
    /// Per-task score, `None` for a failed replay.
    pub scores: Vec<Option<f64>>,
    pub failures: Rejected,
}

/// Mean over tasks of `d/(t_out - t_in) + g`. Failed replays are left out
/// of the mean and listed in `failures`.
pub fn similarity(
    tasks: &[ReplayTask],
    params: &ModelParams,
    relaxation_time: f64,
    form: PenaltyForm,
) -> Result<Similarity> {
    params.validate()?;
    if tasks.is_empty() {
        return Err(SimError::Empty("replay tasks"));
    }
    let results: Vec<Result<f64>> = tasks.par_iter().map(|t| t.score(params, relaxation_time, form)).collect();
    let mut scores = Vec::with_capacity(tasks.len());
    let mut failures = Vec::new();
    for (task, r) in tasks.iter().zip(results) {
        match r {
            Ok(v) => scores.push(Some(v)),
            Err(e) => {
                failures.push((task.subject.id().clone(), e.to_string()));
                scores.push(None);
            }
        }
    }
    let ok: Vec<f64> = scores.iter().flatten().copied().collect();
    if ok.is_empty() {
        return Err(SimError::Empty("successful replays"));
    }
    Ok(Similarity { value: ok.iter().sum::<f64>() / ok.len() as f64, scores, failures })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub ga: GaConfig,
    pub nelder_mead: NelderMeadConfig,
    /// Anisotropy λ used unless it is fitted.
    pub anisotropy: f64,
    pub v_rel_floor: f64,
    pub printed_exponent_sign: bool,
    pub fit_relaxation_time: bool,
    pub relaxation_time_bounds: (f64, f64),
    pub fit_anisotropy: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            ga: GaConfig::default(),
            nelder_mead: NelderMeadConfig::default(),
            anisotropy: DEFAULT_ANISOTROPY,
            v_rel_floor: DEFAULT_V_REL_FLOOR,
            printed_exponent_sign: false,
            fit_relaxation_time: false,
            relaxation_time_bounds: (0.1, 2.0),
            fit_anisotropy: false,
        }
    }
}

impl FitConfig {
    pub fn echo(&self) -> Vec<(String, String)> {
        let ga = &self.ga;
        let nm = &self.nelder_mead;
        vec![
            ("fit.population".into(), ga.population.to_string()),
            ("fit.generations".into(), ga.generations.to_string()),
            ("fit.tournament".into(), ga.tournament.to_string()),
            ("fit.blend_alpha".into(), ga.blend_alpha.to_string()),
            ("fit.crossover_rate".into(), ga.crossover_rate.to_string()),
            ("fit.mutation_rate".into(), ga.mutation_rate.to_string()),
            ("fit.mutation_sigma".into(), ga.mutation_sigma.to_string()),
            ("fit.elites".into(), ga.elites.to_string()),
            ("fit.nm_max_evaluations".into(), nm.max_evaluations.to_string()),
            ("fit.nm_x_tolerance".into(), nm.x_tolerance.to_string()),
            ("fit.nm_f_tolerance".into(), nm.f_tolerance.to_string()),
            ("fit.nm_initial_step".into(), nm.initial_step.to_string()),
            ("fit.anisotropy".into(), self.anisotropy.to_string()),
            ("fit.v_rel_floor".into(), self.v_rel_floor.to_string()),
            ("fit.printed_exponent_sign".into(), self.printed_exponent_sign.to_string()),
            ("fit.fit_relaxation_time".into(), self.fit_relaxation_time.to_string()),
            ("fit.fit_anisotropy".into(), self.fit_anisotropy.to_string()),
        ]
    }

    fn bounds(&self, variant: Variant) -> Vec<(f64, f64)> {
        let mut b = variant.bounds();
        if self.fit_relaxation_time {
            b.push(self.relaxation_time_bounds);
        }
        if self.fit_anisotropy {
            b.push((0.0, 1.0));
        }
        b
    }

    /// Model parameters and τ encoded by an optimiser vector.
    fn decode(&self, variant: Variant, x: &[f64], default_tau: f64) -> Result<(ModelParams, f64)> {
        let n = variant.parameter_names().len();
        let mut rest = x[n..].iter();
        let tau = if self.fit_relaxation_time { *rest.next().unwrap() } else { default_tau };
        let anisotropy = if self.fit_anisotropy { *rest.next().unwrap() } else { self.anisotropy };
        let params = ModelParams {
            anisotropy,
            v_rel_floor: self.v_rel_floor,
            printed_exponent_sign: self.printed_exponent_sign,
            ..ModelParams::new(Repulsion::from_slice(variant, &x[..n])?)
        };
        Ok((params, tau))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub variant: Variant,
    pub params: ModelParams,
    pub relaxation_time: f64,
    pub s_cal: f64,
    /// `None` when no validation tasks were supplied.
    pub s_val: Option<f64>,
    /// Best objective after each genetic-algorithm generation.
    pub trace: Vec<f64>,
    pub ga_evaluations: usize,
    pub nm_evaluations: usize,
    pub nm_converged: bool,
    pub seed: u64,
    pub n_cal: usize,
    pub n_val: usize,
    pub warning: Option<String>,
    /// Effective configuration, `key = value`.
    pub config: Vec<(String, String)>,
}

pub const TRACE_HEADER: &str = "generation,best_s";

impl FitResult {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let names = self.variant.parameter_names();
        writeln!(out, "variant = {}", self.variant).unwrap();
        for (name, v) in names.iter().zip(self.params.repulsion.to_vec()) {
            writeln!(out, "param.{name} = {v}").unwrap();
        }
        writeln!(out, "relaxation_time = {}", self.relaxation_time).unwrap();
        writeln!(out, "anisotropy = {}", self.params.anisotropy).unwrap();
        writeln!(out, "dt = {}", self.params.dt).unwrap();
        writeln!(out, "v_rel_floor = {}", self.params.v_rel_floor).unwrap();
        writeln!(out, "printed_exponent_sign = {}", self.params.printed_exponent_sign).unwrap();
        writeln!(out, "s_cal = {}", self.s_cal).unwrap();
        match self.s_val {
            Some(v) => writeln!(out, "s_val = {v}").unwrap(),
            None => writeln!(out, "s_val = none").unwrap(),
        }
        writeln!(out, "seed = {}", self.seed).unwrap();
        writeln!(out, "n_cal = {}", self.n_cal).unwrap();
        writeln!(out, "n_val = {}", self.n_val).unwrap();
        writeln!(out, "ga_evaluations = {}", self.ga_evaluations).unwrap();
        writeln!(out, "nm_evaluations = {}", self.nm_evaluations).unwrap();
        writeln!(out, "nm_converged = {}", self.nm_converged).unwrap();
        writeln!(out, "warning = {}", self.warning.as_deref().unwrap_or("none")).unwrap();
        for (k, v) in &self.config {
            writeln!(out, "config.{k} = {v}").unwrap();
        }
        writeln!(out, "{TRACE_HEADER}").unwrap();
        for (g, v) in self.trace.iter().enumerate() {
            writeln!(out, "{g},{v}").unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<FitResult> {
        let mut kv: Vec<(String, String, usize)> = Vec::new();
        let mut trace = Vec::new();
        let mut in_trace = false;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let err = |msg: String| SimError::Parse { line: idx + 1, msg };
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line == TRACE_HEADER {
                in_trace = true;
                continue;
            }
            if in_trace {
                let v = line.split(',').nth(1).ok_or_else(|| err("trace row needs two fields".into()))?;
                trace.push(v.parse::<f64>().map_err(|e| err(e.to_string()))?);
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            kv.push((k.trim().to_string(), v.trim().to_string(), idx + 1));
        }
        let get = |key: &str| -> Result<&str> {
            kv.iter()
                .find(|(k, _, _)| k == key)
                .map(|(_, v, _)| v.as_str())
                .ok_or_else(|| SimError::Parse { line: 0, msg: format!("missing key {key}") })
        };
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            v.parse::<T>().map_err(|e| SimError::Parse { line: 0, msg: format!("{key}: {e}") })
        }
        let variant: Variant = get("variant")?.parse()?;
        let coeffs = variant
            .parameter_names()
            .iter()
            .map(|n| num::<f64>(n, get(&format!("param.{n}"))?))
            .collect::<Result<Vec<f64>>>()?;
        let params = ModelParams {
            anisotropy: num("anisotropy", get("anisotropy")?)?,
            dt: num("dt", get("dt")?)?,
            v_rel_floor: num("v_rel_floor", get("v_rel_floor")?)?,
            printed_exponent_sign: num("printed_exponent_sign", get("printed_exponent_sign")?)?,
            ..ModelParams::new(Repulsion::from_slice(variant, &coeffs)?)
        };
        params.validate()?;
        let s_val = match get("s_val")? {
            "none" => None,
            v => Some(num("s_val", v)?),
        };
        let warning = match get("warning")? {
            "none" => None,
            w => Some(w.to_string()),
        };
        let config = kv
            .iter()
            .filter_map(|(k, v, _)| k.strip_prefix("config.").map(|k| (k.to_string(), v.clone())))
            .collect();
        Ok(FitResult {
            variant,
            params,
            relaxation_time: num("relaxation_time", get("relaxation_time")?)?,
            s_cal: num("s_cal", get("s_cal")?)?,
            s_val,
            trace,
            ga_evaluations: num("ga_evaluations", get("ga_evaluations")?)?,
            nm_evaluations: num("nm_evaluations", get("nm_evaluations")?)?,
            nm_converged: num("nm_converged", get("nm_converged")?)?,
            seed: num("seed", get("seed")?)?,
            n_cal: num("n_cal", get("n_cal")?)?,
            n_val: num("n_val", get("n_val")?)?,
            warning,
            config,
        })
    }
}

/// Fit `variant` on the calibration tasks: genetic search over the bounded
/// coefficients, refined by Nelder-Mead from the best individual. The
/// result is scored on the validation tasks when there are any.
pub fn fit_model(
    calibration: &[ReplayTask],
    validation: &[ReplayTask],
    variant: Variant,
    fit: &FitConfig,
    objective: &ObjectiveConfig,
    seed: u64,
) -> Result<FitResult> {
    objective.validate()?;
    if calibration.is_empty() {
        return Err(SimError::Empty("calibration tasks"));
    }
    let bounds = fit.bounds(variant);
    let cost = |x: &[f64]| -> f64 {
        fit.decode(variant, x, objective.relaxation_time)
            .and_then(|(p, tau)| similarity(calibration, &p, tau, objective.penalty))
            .map(|s| s.value)
            .unwrap_or(f64::INFINITY)
    };
    let ga = genetic_minimize(cost, &bounds, &fit.ga, seed)?;
    let nm = nelder_mead(cost, &ga.best, &bounds, &fit.nelder_mead)?;
    let (params, relaxation_time) = fit.decode(variant, &nm.x, objective.relaxation_time)?;
    let s_cal = similarity(calibration, &params, relaxation_time, objective.penalty)?.value;
    let s_val = if validation.is_empty() {
        None
    } else {
        Some(similarity(validation, &params, relaxation_time, objective.penalty)?.value)
    };
    let warning = (!ga.improved()).then(|| "genetic search did not improve on its initial population".to_string());
    let mut config = objective.echo();
    config.extend(fit.echo());
    Ok(FitResult {
        variant,
        params,
        relaxation_time,
        s_cal,
        s_val,
        trace: ga.trace,
        ga_evaluations: ga.evaluations,
        nm_evaluations: nm.evaluations,
        nm_converged: nm.converged,
        seed,
        n_cal: calibration.len(),
        n_val: validation.len(),
        warning,
        config,
    })
}

/// Seeded random partition into calibration and validation sets. The
/// calibration set gets `round(ratio·n)` trajectories; both keep the input
/// order.
pub fn split_dataset(set: &TrajectorySet, ratio: f64, seed: u64) -> Result<(TrajectorySet, TrajectorySet)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(SimError::Params(format!("split ratio must lie in (0, 1), got {ratio}")));
    }
    let n = set.len();
    let n_cal = (ratio * n as f64).round() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut in_cal = vec![false; n];
    for &i in &idx[..n_cal] {
        in_cal[i] = true;
    }
    let (cal, val): (Vec<_>, Vec<_>) = set.iter().cloned().zip(in_cal).partition(|(_, c)| *c);
    let strip = |v: Vec<(Trajectory, bool)>| v.into_iter().map(|(t, _)| t).collect();
    Ok((TrajectorySet::new(strip(cal), set.frame_rate())?, TrajectorySet::new(strip(val), set.frame_rate())?))
}
