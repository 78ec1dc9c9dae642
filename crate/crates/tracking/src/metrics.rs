//! Trajectory-level accuracy measures: discrete Fréchet distance, matching
//! of tracker output to ground truth, MOTP, PDR and stitching TPR.

use std::io::Write;

use crowdcal_core::{Trajectory, TrajectoryId, TrajectorySet, Vec2};

use crate::assignment::hungarian_assign;
use crate::stitching::StitchReport;
use crate::{Result, TrackingError};

pub const DEFAULT_MAX_MATCH_DISTANCE: f64 = 0.5;

/// Discrete Fréchet distance between the horizontal paths of `a` and `b`.
pub fn discrete_frechet(a: &Trajectory, b: &Trajectory) -> f64 {
    let pa: Vec<Vec2> = a.points().iter().map(|p| p.position.xy()).collect();
    let pb: Vec<Vec2> = b.points().iter().map(|p| p.position.xy()).collect();
    frechet_xy(&pa, &pb)
}

pub fn frechet_xy(a: &[Vec2], b: &[Vec2]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    let m = b.len();
    let mut prev = vec![0.0f64; m];
    let mut cur = vec![0.0f64; m];
    for (i, &p) in a.iter().enumerate() {
        for j in 0..m {
            let d = p.distance(b[j]);
            cur[j] = match (i, j) {
                (0, 0) => d,
                (0, _) => cur[j - 1].max(d),
                (_, 0) => prev[0].max(d),
                _ => prev[j].min(prev[j - 1]).min(cur[j - 1]).max(d),
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m - 1]
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchedPair {
    pub auto_id: TrajectoryId,
    pub truth_id: TrajectoryId,
    pub frechet: f64,
    /// Number of auto samples inside the truth trajectory's time span.
    pub time_steps: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruthMatch {
    pub pairs: Vec<MatchedPair>,
    pub false_positives: Vec<TrajectoryId>,
    pub false_negatives: Vec<TrajectoryId>,
}

/// One-to-one pairing of `auto` with `truth` that matches as many trajectories
/// as possible and, among those pairings, minimizes the summed Fréchet
/// distance. Pairs further apart than `max_dist` are never matched.
pub fn match_to_ground_truth(auto: &TrajectorySet, truth: &TrajectorySet, max_dist: f64) -> Result<GroundTruthMatch> {
    if !(max_dist > 0.0 && max_dist.is_finite()) {
        return Err(TrackingError::Config(format!("max_dist must be positive, got {max_dist}")));
    }
    let (n, m) = (auto.len(), truth.len());
    let dist: Vec<Vec<f64>> =
        auto.iter().map(|a| truth.iter().map(|t| discrete_frechet(a, t)).collect()).collect();

    // Leaving a trajectory unmatched costs more than any set of real pairs
    // an augmenting path could trade for it.
    let unmatched = (n.min(m) + 1) as f64 * max_dist + 1.0;
    let forbidden = 3.0 * unmatched;
    let size = n + m;
    let matrix: Vec<Vec<f64>> = (0..size)
        .map(|i| {
            (0..size)
                .map(|j| match (i < n, j < m) {
                    (true, true) if dist[i][j] <= max_dist => dist[i][j],
                    (true, true) => forbidden,
                    (false, false) => 0.0,
                    _ => unmatched,
                })
                .collect()
        })
        .collect();
    let assignment = hungarian_assign(&matrix)?;

    let mut result = GroundTruthMatch::default();
    let mut truth_used = vec![false; m];
    for (i, (&j, a)) in assignment.row_to_col.iter().zip(auto.trajectories()).enumerate() {
        if j < m && dist[i][j] <= max_dist {
            let t = &truth.trajectories()[j];
            truth_used[j] = true;
            result.pairs.push(MatchedPair {
                auto_id: a.id().clone(),
                truth_id: t.id().clone(),
                frechet: dist[i][j],
                time_steps: overlap_steps(a, t),
            });
        } else {
            result.false_positives.push(a.id().clone());
        }
    }
    for (j, t) in truth.iter().enumerate() {
        if !truth_used[j] {
            result.false_negatives.push(t.id().clone());
        }
    }
    Ok(result)
}

fn overlap_steps(auto: &Trajectory, truth: &Trajectory) -> usize {
    let eps = 1e-9;
    auto.points().iter().filter(|p| p.t >= truth.start_time() - eps && p.t <= truth.end_time() + eps).count()
}

/// Mean per-pair distance weighted by the number of time steps each pair is
/// matched for.
pub fn motp(pairs: &[(f64, usize)]) -> Result<f64> {
    let steps: usize = pairs.iter().map(|&(_, c)| c).sum();
    if steps == 0 {
        return Err(TrackingError::Empty("MOTP needs at least one matched time step"));
    }
    Ok(pairs.iter().map(|&(d, c)| d * c as f64).sum::<f64>() / steps as f64)
}

pub fn pdr(true_positives: usize, false_negatives: usize) -> Result<f64> {
    let total = true_positives + false_negatives;
    if total == 0 {
        return Err(TrackingError::Empty("PDR needs at least one ground-truth trajectory"));
    }
    Ok(true_positives as f64 / total as f64)
}

/// Fraction of `truth_pairs` that appear, in either order, among the
/// accepted matches of `report`.
pub fn stitch_tpr(report: &StitchReport, truth_pairs: &[(TrajectoryId, TrajectoryId)]) -> Result<f64> {
    if truth_pairs.is_empty() {
        return Err(TrackingError::Empty("TPR needs at least one true pair"));
    }
    let hits = truth_pairs
        .iter()
        .filter(|(a, b)| report.accepted().any(|r| (&r.id_a == a && &r.id_b == b) || (&r.id_a == b && &r.id_b == a)))
        .count();
    Ok(hits as f64 / truth_pairs.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub motp: f64,
    pub pdr: f64,
    pub true_positives: usize,
    pub false_negatives: usize,
    pub false_positives: usize,
    pub max_dist: f64,
    pub pairs: Vec<MatchedPair>,
}

impl EvalReport {
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "motp_m: {:.6}", self.motp)?;
        writeln!(out, "motp_weighting: per-pair Frechet distance weighted by matched time steps")?;
        writeln!(out, "pdr: {:.6}", self.pdr)?;
        writeln!(out, "true_positives: {}", self.true_positives)?;
        writeln!(out, "false_negatives: {}", self.false_negatives)?;
        writeln!(out, "false_positives: {}", self.false_positives)?;
        writeln!(out, "max_match_distance_m: {}", self.max_dist)?;
        writeln!(out)?;
        writeln!(out, "auto_id,truth_id,frechet_m,time_steps")?;
        for p in &self.pairs {
            writeln!(out, "{},{},{:.6},{}", p.auto_id, p.truth_id, p.frechet, p.time_steps)?;
        }
        Ok(())
    }
}

/// Matches `auto` against `truth` and summarizes the result. With no matched
/// pairs MOTP is reported as NaN.
pub fn evaluate(auto: &TrajectorySet, truth: &TrajectorySet, max_dist: f64) -> Result<EvalReport> {
    let matched = match_to_ground_truth(auto, truth, max_dist)?;
    let tp = matched.pairs.len();
    let fn_ = matched.false_negatives.len();
    let weights: Vec<(f64, usize)> = matched.pairs.iter().map(|p| (p.frechet, p.time_steps)).collect();
    Ok(EvalReport {
        motp: motp(&weights).unwrap_or(f64::NAN),
        pdr: pdr(tp, fn_)?,
        true_positives: tp,
        false_negatives: fn_,
        false_positives: matched.false_positives.len(),
        max_dist,
        pairs: matched.pairs,
    })
}
