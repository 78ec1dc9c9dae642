//! Joining trajectory fragments from neighbouring sensors.
//!
//! Each fragment end is compared with every fragment start of the other set
//! through a 4-vector `(t, x, y, z̄)`. Pairs are assigned with the Hungarian
//! method under a growing threshold `h`, so that cheap, unambiguous pairs are
//! locked in before expensive ones are considered.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::io::Write;

use crowdcal_core::{Point3, Trajectory, TrajectoryId, TrajectoryPoint, TrajectorySet};

use crate::assignment::hungarian_assign;
use crate::spline::fit_smoothing_spline;
use crate::{Result, TrackingError};

#[derive(Debug, Clone, PartialEq)]
pub struct StitchConfig {
    pub h_start: f64,
    pub h_step: f64,
    pub h_max: f64,
    pub smoothing_enabled: bool,
    pub output_rate: f64,
    /// Assumed position noise (m) that sets the spline smoothing budget.
    pub smoothing_noise: f64,
    /// Largest time overlap (s) allowed between two fragments that are joined.
    pub seam_window: f64,
    /// Largest horizontal distance (m) between a fragment's start and the end
    /// of the other fragment extrapolated to that time at its final velocity.
    /// Pairs beyond it are treated as null matches; infinity disables the gate.
    pub max_extrapolation_error: f64,
    /// Largest change (m/s) between the final velocity of one fragment and the
    /// initial velocity of the next; infinity disables the gate.
    pub max_velocity_change: f64,
}

impl Default for StitchConfig {
    fn default() -> Self {
        Self {
            h_start: 3.0,
            h_step: 3.0,
            h_max: 23.0,
            smoothing_enabled: true,
            output_rate: 30.0,
            smoothing_noise: 0.03,
            seam_window: 1.0,
            max_extrapolation_error: 1.0,
            max_velocity_change: 0.6,
        }
    }
}

impl StitchConfig {
    /// A one-round configuration that only uses threshold `h`.
    pub fn single_pass(h: f64) -> Self {
        Self { h_start: h, h_max: h, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.h_start > 0.0
            && self.h_start <= self.h_max
            && self.h_step > 0.0
            && self.h_max.is_finite()
            && self.output_rate > 0.0
            && self.output_rate.is_finite()
            && self.smoothing_noise >= 0.0
            && self.seam_window >= 0.0
            && self.max_extrapolation_error > 0.0
            && self.max_velocity_change > 0.0;
        if ok {
            Ok(())
        } else {
            Err(TrackingError::Config(format!("invalid stitch configuration {self:?}")))
        }
    }

    /// Thresholds `h_start, h_start + h_step, ...`, ending with `h_max`.
    pub fn schedule(&self) -> Vec<f64> {
        let mut hs = Vec::new();
        let mut k = 0u32;
        loop {
            let h = self.h_start + k as f64 * self.h_step;
            if h >= self.h_max - 1e-12 {
                break;
            }
            hs.push(h);
            k += 1;
        }
        hs.push(self.h_max);
        hs
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EndpointFeature {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z_mean: f64,
}

impl EndpointFeature {
    pub fn start_of(traj: &Trajectory) -> Self {
        Self::at(traj.first(), traj.mean_height())
    }

    pub fn end_of(traj: &Trajectory) -> Self {
        Self::at(traj.last(), traj.mean_height())
    }

    fn at(p: &TrajectoryPoint, z_mean: f64) -> Self {
        Self { t: p.t, x: p.position.x, y: p.position.y, z_mean }
    }
}

/// Euclidean distance over `(t, x, y, z̄)`; seconds and meters are mixed as is.
pub fn endpoint_distance(a_end: &EndpointFeature, b_start: &EndpointFeature) -> f64 {
    let dt = a_end.t - b_start.t;
    let dx = a_end.x - b_start.x;
    let dy = a_end.y - b_start.y;
    let dz = a_end.z_mean - b_start.z_mean;
    (dt * dt + dx * dx + dy * dy + dz * dz).sqrt()
}

/// Square cost matrix between fragment ends (rows) and starts (columns),
/// padded with null rows or columns valued one more than the largest entry.
pub fn build_distance_matrix(ending: &[Trajectory], starting: &[Trajectory]) -> Result<Vec<Vec<f64>>> {
    if ending.is_empty() || starting.is_empty() {
        return Err(TrackingError::Empty("distance matrix needs ending and starting trajectories"));
    }
    let real: Vec<Vec<f64>> = ending
        .iter()
        .map(|a| {
            let fa = EndpointFeature::end_of(a);
            starting.iter().map(|b| endpoint_distance(&fa, &EndpointFeature::start_of(b))).collect()
        })
        .collect();
    Ok(pad_square(&real, ending.len(), starting.len()))
}

fn pad_square(real: &[Vec<f64>], rows: usize, cols: usize) -> Vec<Vec<f64>> {
    let max = real.iter().flatten().copied().fold(0.0, f64::max);
    let null = max + 1.0;
    let n = rows.max(cols);
    (0..n)
        .map(|i| (0..n).map(|j| if i < rows && j < cols { real[i][j] } else { null }).collect())
        .collect()
}

/// Joins `points` into one trajectory: sorted by time, samples closer than
/// 1 ms averaged.
fn pool_points(mut points: Vec<TrajectoryPoint>) -> Vec<TrajectoryPoint> {
    points.sort_by(|a, b| a.t.total_cmp(&b.t));
    let mut out: Vec<TrajectoryPoint> = Vec::with_capacity(points.len());
    let mut i = 0;
    while i < points.len() {
        let t0 = points[i].t;
        let mut j = i;
        let (mut st, mut sp) = (0.0, Point3::ORIGIN);
        while j < points.len() && points[j].t - t0 <= 1e-3 {
            st += points[j].t;
            sp = sp + points[j].position;
            j += 1;
        }
        let k = (j - i) as f64;
        out.push(TrajectoryPoint::new(st / k, sp * (1.0 / k)));
        i = j;
    }
    out
}

/// Cubic smoothing spline of `x(t)` and `y(t)` resampled at `output_rate`, with
/// the default 3 cm noise budget.
pub fn smooth_spline(traj: &Trajectory, output_rate: f64) -> Result<Trajectory> {
    smooth_spline_with_noise(traj, output_rate, 0.03)
}

pub fn smooth_spline_with_noise(traj: &Trajectory, output_rate: f64, noise: f64) -> Result<Trajectory> {
    if !(output_rate > 0.0 && output_rate.is_finite()) {
        return Err(TrackingError::Config(format!("output rate must be positive, got {output_rate}")));
    }
    if traj.len() < 4 {
        return Ok(traj.clone());
    }
    let ts: Vec<f64> = traj.points().iter().map(|p| p.t).collect();
    let xs: Vec<f64> = traj.points().iter().map(|p| p.position.x).collect();
    let ys: Vec<f64> = traj.points().iter().map(|p| p.position.y).collect();
    let budget = ts.len() as f64 * noise * noise;
    let (Some(sx), Some(sy)) = (fit_smoothing_spline(&ts, &xs, budget), fit_smoothing_spline(&ts, &ys, budget))
    else {
        return Ok(traj.clone());
    };

    let (t0, t1) = (traj.start_time(), traj.end_time());
    let step = 1.0 / output_rate;
    let count = ((t1 - t0) / step + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=count).map(|k| t0 + k as f64 * step).collect();
    let last = grid[grid.len() - 1];
    if t1 - last > 1e-9 * step.max(1.0) {
        grid.push(t1);
    } else {
        *grid.last_mut().unwrap() = t1;
    }
    let z = traj.mean_height();
    let points = grid.into_iter().map(|t| TrajectoryPoint::new(t, Point3::new(sx.eval(t), sy.eval(t), z))).collect();
    Ok(Trajectory::new(traj.id().clone(), points)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchRecord {
    pub id_a: TrajectoryId,
    pub id_b: TrajectoryId,
    pub cost: f64,
    pub round_h: f64,
    pub accepted: bool,
}

/// Every non-null pair proposed by an assignment round; the ending fragment
/// is `id_a` and the starting fragment `id_b`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StitchReport {
    pub records: Vec<MatchRecord>,
}

impl StitchReport {
    pub fn accepted(&self) -> impl Iterator<Item = &MatchRecord> {
        self.records.iter().filter(|r| r.accepted)
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "id_a,id_b,cost,round_h,status")?;
        for r in &self.records {
            writeln!(out, "{r}")?;
        }
        Ok(())
    }
}

impl fmt::Display for MatchRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.accepted { "accepted" } else { "rejected" };
        write!(f, "{},{},{:.6},{},{}", self.id_a, self.id_b, self.cost, self.round_h, status)
    }
}

fn time_overlap(a: &Trajectory, b: &Trajectory) -> f64 {
    (a.end_time().min(b.end_time()) - a.start_time().max(b.start_time())).max(0.0)
}

const VELOCITY_WINDOW: f64 = 0.5;

fn mean_velocity(first: &TrajectoryPoint, last: &TrajectoryPoint) -> (f64, f64) {
    let dt = last.t - first.t;
    if dt <= 0.0 {
        return (0.0, 0.0);
    }
    ((last.position.x - first.position.x) / dt, (last.position.y - first.position.y) / dt)
}

/// Mean velocity over the last `VELOCITY_WINDOW` seconds of `traj`.
fn final_velocity(traj: &Trajectory) -> (f64, f64) {
    let last = traj.last();
    let first = traj.points().iter().find(|p| p.t >= last.t - VELOCITY_WINDOW).unwrap_or(last);
    mean_velocity(first, last)
}

/// Mean velocity over the first `VELOCITY_WINDOW` seconds of `traj`.
fn initial_velocity(traj: &Trajectory) -> (f64, f64) {
    let first = traj.first();
    let last = traj.points().iter().rev().find(|p| p.t <= first.t + VELOCITY_WINDOW).unwrap_or(first);
    mean_velocity(first, last)
}

/// Speed change between the end of `a` and the start of `b`.
pub fn velocity_change(a: &Trajectory, b: &Trajectory) -> f64 {
    let (va, vb) = (final_velocity(a), initial_velocity(b));
    (va.0 - vb.0).hypot(va.1 - vb.1)
}

/// Horizontal distance between the start of `b` and the end of `a`
/// extrapolated to `b`'s start time.
pub fn extrapolation_error(a: &Trajectory, b: &Trajectory) -> f64 {
    let (vx, vy) = final_velocity(a);
    let end = a.last();
    let dt = b.start_time() - end.t;
    let start = b.first().position;
    (end.position.x + vx * dt - start.x).hypot(end.position.y + vy * dt - start.y)
}

/// Whether `a` may be followed by `b`: `b` must continue past `a` in time,
/// the two may share at most `seam_window` seconds and `b` must start where
/// `a` was heading, moving the way `a` moved.
fn may_follow(a: &Trajectory, b: &Trajectory, cfg: &StitchConfig) -> bool {
    b.start_time() > a.start_time()
        && b.end_time() > a.end_time()
        && time_overlap(a, b) <= cfg.seam_window
        && extrapolation_error(a, b) <= cfg.max_extrapolation_error
        && velocity_change(a, b) <= cfg.max_velocity_change
}

/// Joins fragments of `set_a` and `set_b` in both directions (ends of A to
/// starts of B and ends of B to starts of A).
pub fn iterative_stitch(
    set_a: &TrajectorySet,
    set_b: &TrajectorySet,
    cfg: &StitchConfig,
) -> Result<(TrajectorySet, StitchReport)> {
    cfg.validate()?;
    let all: Vec<&Trajectory> = set_a.iter().chain(set_b.iter()).collect();
    let n_a = set_a.len();
    let n = all.len();
    let side = |i: usize| i < n_a;

    // Admissible costs; None for same-set or time-incompatible pairs.
    let cost: Vec<Vec<Option<f64>>> = (0..n)
        .map(|i| {
            let fi = EndpointFeature::end_of(all[i]);
            (0..n)
                .map(|j| {
                    (side(i) != side(j) && may_follow(all[i], all[j], cfg))
                        .then(|| endpoint_distance(&fi, &EndpointFeature::start_of(all[j])))
                })
                .collect()
        })
        .collect();

    let mut next: Vec<Option<usize>> = vec![None; n];
    let mut prev: Vec<Option<usize>> = vec![None; n];
    let mut report = StitchReport::default();

    for h in cfg.schedule() {
        let row_ok = |i: usize, prev: &[Option<usize>]| {
            (0..n).any(|j| prev[j].is_none() && cost[i][j].is_some_and(|c| c < h))
        };
        let rows: Vec<usize> = (0..n).filter(|&i| next[i].is_none() && row_ok(i, &prev)).collect();
        let cols: Vec<usize> = (0..n)
            .filter(|&j| prev[j].is_none() && (0..n).any(|i| next[i].is_none() && cost[i][j].is_some_and(|c| c < h)))
            .collect();
        if rows.is_empty() || cols.is_empty() {
            continue;
        }
        let cost_ref = &cost;
        let real_max = rows
            .iter()
            .flat_map(|&i| cols.iter().filter_map(move |&j| cost_ref[i][j]))
            .fold(0.0, f64::max);
        let null = real_max + 1.0;
        let real: Vec<Vec<f64>> =
            rows.iter().map(|&i| cols.iter().map(|&j| cost[i][j].unwrap_or(null)).collect()).collect();
        let matrix = pad_square(&real, rows.len(), cols.len());
        let assignment = hungarian_assign(&matrix)?;

        for (r, &c) in assignment.row_to_col.iter().enumerate() {
            if r >= rows.len() || c >= cols.len() {
                continue;
            }
            let (i, j) = (rows[r], cols[c]);
            let Some(d) = cost[i][j] else { continue };
            let accepted = d < h && !creates_cycle(&next, i, j);
            if accepted {
                next[i] = Some(j);
                prev[j] = Some(i);
            }
            report.records.push(MatchRecord {
                id_a: all[i].id().clone(),
                id_b: all[j].id().clone(),
                cost: d,
                round_h: h,
                accepted,
            });
        }
    }

    let mut used_ids: HashSet<String> = HashSet::new();
    let mut out = Vec::new();
    for start in (0..n).filter(|&i| prev[i].is_none()) {
        let mut chain = vec![start];
        while let Some(j) = next[*chain.last().unwrap()] {
            chain.push(j);
        }
        let traj = if chain.len() == 1 {
            all[start].clone()
        } else {
            let id = chain.iter().map(|&k| all[k].id().as_str()).collect::<Vec<_>>().join("+");
            let pooled = pool_points(chain.iter().flat_map(|&k| all[k].points().iter().copied()).collect());
            let merged = Trajectory::new(id, pooled)?;
            if cfg.smoothing_enabled {
                smooth_spline_with_noise(&merged, cfg.output_rate, cfg.smoothing_noise)?
            } else {
                merged
            }
        };
        let id = unique_id(traj.id().as_str(), &mut used_ids);
        out.push(traj.with_id(id));
    }
    let rate = if cfg.smoothing_enabled { cfg.output_rate } else { set_a.frame_rate() };
    Ok((TrajectorySet::new(out, rate)?, report))
}

fn creates_cycle(next: &[Option<usize>], i: usize, j: usize) -> bool {
    let mut k = j;
    let mut seen = BTreeSet::new();
    loop {
        if k == i {
            return true;
        }
        if !seen.insert(k) {
            return false;
        }
        match next[k] {
            Some(n) => k = n,
            None => return false,
        }
    }
}

fn unique_id(base: &str, used: &mut HashSet<String>) -> String {
    if used.insert(base.to_string()) {
        return base.to_string();
    }
    let mut k = 2;
    loop {
        let candidate = format!("{base}#{k}");
        if used.insert(candidate.clone()) {
            return candidate;
        }
        k += 1;
    }
}
