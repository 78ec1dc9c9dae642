//! Frame-to-frame association of detections into trajectories.
//!
//! Each active track predicts its position by linear extrapolation over its
//! recent history; predictions and detections are then paired greedily,
//! globally nearest first, within a gate radius.

use crowdcal_core::{Point3, Trajectory, TrajectoryPoint, TrajectorySet};

use crate::detection::Detection;
use crate::{Result, TrackingError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    /// Number of most recent points used for velocity extrapolation.
    pub history_n: usize,
    /// Maximum horizontal distance between prediction and detection, meters.
    pub gate_radius: f64,
    /// Frames a track may go unmatched before it is closed.
    pub max_coast: usize,
    pub frame_rate: f64,
    /// Trajectories with fewer points are not emitted.
    pub min_points: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self { history_n: 5, gate_radius: 0.5, max_coast: 5, frame_rate: 30.0, min_points: 3 }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.history_n == 0 {
            return Err(TrackingError::Config("history_n must be at least 1".into()));
        }
        if !(self.gate_radius > 0.0) || !(self.frame_rate > 0.0) {
            return Err(TrackingError::Config("gate radius and frame rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackState {
    Active,
    Closed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: String,
    pub points: Vec<TrajectoryPoint>,
    pub frames_since_update: usize,
    pub state: TrackState,
}

/// Linear extrapolation to `t_next` using the mean velocity over the last
/// `history_n` points.
pub fn predict_position(track: &Track, t_next: f64, cfg: &TrackerConfig) -> Point3 {
    let pts = &track.points;
    let last = pts[pts.len() - 1];
    let window = cfg.history_n.min(pts.len());
    if window < 2 {
        return last.position;
    }
    let first = pts[pts.len() - window];
    let dt = last.t - first.t;
    if dt <= 0.0 {
        return last.position;
    }
    let velocity = (last.position - first.position) * (1.0 / dt);
    last.position + velocity * (t_next - last.t)
}

/// Outcome of one association step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameAssignment {
    /// `(track index, detection index)` pairs accepted this frame.
    pub matched: Vec<(usize, usize)>,
    /// Detections that opened new tracks, with the new track index.
    pub opened: Vec<(usize, usize)>,
    /// Tracks closed during this frame.
    pub closed: Vec<usize>,
}

/// Tracker state for one sensor stream.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    id_prefix: String,
    tracks: Vec<Track>,
    next_id: usize,
    last_t: Option<f64>,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig, id_prefix: impl Into<String>) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, id_prefix: id_prefix.into(), tracks: Vec::new(), next_id: 0, last_t: None })
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Associate the detections of the frame at time `t`.
    pub fn associate(&mut self, detections: &[Detection], t: f64) -> Result<FrameAssignment> {
        if let Some(prev) = self.last_t {
            if t <= prev {
                return Err(TrackingError::TimeOrder { prev, t });
            }
        }
        if let Some(d) = detections.iter().find(|d| d.t != t) {
            return Err(TrackingError::MixedTimestamps { frame: t, got: d.t });
        }
        self.last_t = Some(t);

        let active: Vec<usize> = (0..self.tracks.len())
            .filter(|&i| self.tracks[i].state == TrackState::Active)
            .collect();
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for &ti in &active {
            let pred = predict_position(&self.tracks[ti], t, &self.cfg);
            for (di, d) in detections.iter().enumerate() {
                let dist = pred.horizontal_distance(&d.position);
                if dist <= self.cfg.gate_radius {
                    pairs.push((dist, ti, di));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

        let mut out = FrameAssignment::default();
        let mut track_taken = vec![false; self.tracks.len()];
        let mut det_taken = vec![false; detections.len()];
        for (_, ti, di) in pairs {
            if track_taken[ti] || det_taken[di] {
                continue;
            }
            track_taken[ti] = true;
            det_taken[di] = true;
            let track = &mut self.tracks[ti];
            track.points.push(TrajectoryPoint::new(t, detections[di].position));
            track.frames_since_update = 0;
            out.matched.push((ti, di));
        }
        for &ti in &active {
            if !track_taken[ti] {
                let track = &mut self.tracks[ti];
                track.frames_since_update += 1;
                if track.frames_since_update > self.cfg.max_coast {
                    track.state = TrackState::Closed;
                    out.closed.push(ti);
                }
            }
        }
        for (di, d) in detections.iter().enumerate() {
            if det_taken[di] {
                continue;
            }
            let id = format!("{}{}", self.id_prefix, self.next_id);
            self.next_id += 1;
            self.tracks.push(Track {
                id,
                points: vec![TrajectoryPoint::new(t, d.position)],
                frames_since_update: 0,
                state: TrackState::Active,
            });
            out.opened.push((di, self.tracks.len() - 1));
        }
        Ok(out)
    }

    /// Close every track and emit those with at least `min_points` points.
    pub fn finish(self) -> Result<TrajectorySet> {
        let min_points = self.cfg.min_points;
        let trajectories = self
            .tracks
            .into_iter()
            .filter(|tr| tr.points.len() >= min_points)
            .map(|tr| Trajectory::new(tr.id, tr.points))
            .collect::<crowdcal_core::Result<Vec<_>>>()?;
        Ok(TrajectorySet::new(trajectories, self.cfg.frame_rate)?)
    }
}

/// Detections of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub t: f64,
    pub detections: Vec<Detection>,
}

/// Track a whole time-ordered sequence. Track ids are `"{sensor_id}-{n}"`.
pub fn track_sequence(frames: &[Frame], sensor_id: u32, cfg: &TrackerConfig) -> Result<TrajectorySet> {
    let mut tracker = Tracker::new(*cfg, format!("{sensor_id}-"))?;
    for f in frames {
        tracker.associate(&f.detections, f.t)?;
    }
    tracker.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(t: f64, x: f64, y: f64) -> Detection {
        Detection { position: Point3::new(x, y, 1.7), t, point_count: 50, sensor_id: 1 }
    }

    fn track_from(points: &[(f64, f64, f64)]) -> Track {
        Track {
            id: "t".into(),
            points: points
                .iter()
                .map(|&(t, x, y)| TrajectoryPoint::new(t, Point3::new(x, y, 1.7)))
                .collect(),
            frames_since_update: 0,
            state: TrackState::Active,
        }
    }

    #[test]
    fn constant_velocity_prediction_is_on_the_line() {
        let pts: Vec<_> = (0..8).map(|k| (k as f64 / 30.0, k as f64 / 30.0, 0.0)).collect();
        let tr = track_from(&pts);
        let p = predict_position(&tr, 8.0 / 30.0, &TrackerConfig::default());
        assert!((p.x - 8.0 / 30.0).abs() < 1e-12);
        assert!(p.y.abs() < 1e-15);
    }

    #[test]
    fn single_point_prediction_stays_put() {
        let tr = track_from(&[(0.0, 1.0, 2.0)]);
        assert_eq!(predict_position(&tr, 0.5, &TrackerConfig::default()), Point3::new(1.0, 2.0, 1.7));
    }

    #[test]
    fn window_mean_velocity_by_hand() {
        let tr = track_from(&[
            (0.0, 0.0, 0.0),
            (0.1, 0.05, 0.0),
            (0.2, 0.2, 0.1),
            (0.3, 0.3, 0.1),
            (0.4, 0.5, 0.3),
        ]);
        let cfg = TrackerConfig { history_n: 3, ..Default::default() };
        // window = points 2..4: velocity = ((0.5-0.2)/0.2, (0.3-0.1)/0.2) = (1.5, 1.0)
        let p = predict_position(&tr, 0.5, &cfg);
        assert!((p.x - (0.5 + 1.5 * 0.1)).abs() < 1e-12);
        assert!((p.y - (0.3 + 1.0 * 0.1)).abs() < 1e-12);
    }

    #[test]
    fn gate_decides_match_or_new_track() {
        let cfg = TrackerConfig::default();
        let mut tr = Tracker::new(cfg, "s-").unwrap();
        tr.associate(&[det(0.0, 0.0, 0.0)], 0.0).unwrap();
        let a = tr.associate(&[det(0.1, 0.1, 0.0)], 0.1).unwrap();
        assert_eq!(a.matched, vec![(0, 0)]);
        let b = tr.associate(&[det(0.2, 3.0, 0.0)], 0.2).unwrap();
        assert!(b.matched.is_empty());
        assert_eq!(b.opened.len(), 1);
        assert_eq!(tr.tracks()[0].frames_since_update, 1);
    }

    #[test]
    fn coasting_track_closes_after_max_coast() {
        let cfg = TrackerConfig { max_coast: 2, ..Default::default() };
        let mut tr = Tracker::new(cfg, "s-").unwrap();
        tr.associate(&[det(0.0, 0.0, 0.0)], 0.0).unwrap();
        tr.associate(&[], 0.1).unwrap();
        tr.associate(&[], 0.2).unwrap();
        assert_eq!(tr.tracks()[0].state, TrackState::Active);
        let a = tr.associate(&[], 0.3).unwrap();
        assert_eq!(a.closed, vec![0]);
        assert_eq!(tr.tracks()[0].state, TrackState::Closed);
    }

    #[test]
    fn timestamp_errors() {
        let mut tr = Tracker::new(TrackerConfig::default(), "s-").unwrap();
        tr.associate(&[], 1.0).unwrap();
        assert!(matches!(tr.associate(&[], 1.0), Err(TrackingError::TimeOrder { .. })));
        assert!(matches!(
            tr.associate(&[det(2.5, 0.0, 0.0)], 2.0),
            Err(TrackingError::MixedTimestamps { .. })
        ));
    }

    #[test]
    fn competing_detections_resolved_nearest_first() {
        let cfg = TrackerConfig::default();
        let mut tr = Tracker::new(cfg, "s-").unwrap();
        tr.associate(&[det(0.0, 0.0, 0.0), det(0.0, 0.4, 0.0)], 0.0).unwrap();
        // Both tracks gate both detections; the globally nearest pairs win.
        let a = tr.associate(&[det(0.1, 0.35, 0.0), det(0.1, 0.05, 0.0)], 0.1).unwrap();
        let mut m = a.matched.clone();
        m.sort_unstable();
        assert_eq!(m, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn empty_sequence_gives_empty_set() {
        let frames: Vec<Frame> = (0..10).map(|k| Frame { t: k as f64 / 30.0, detections: vec![] }).collect();
        assert!(track_sequence(&frames, 1, &TrackerConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn single_walker_trajectory_equals_detections() {
        let frames: Vec<Frame> = (0..60)
            .map(|k| {
                let t = k as f64 / 30.0;
                Frame { t, detections: vec![det(t, 1.3 * t, 0.2 * (3.0 * t).sin())] }
            })
            .collect();
        let set = track_sequence(&frames, 4, &TrackerConfig::default()).unwrap();
        assert_eq!(set.len(), 1);
        let traj = &set.trajectories()[0];
        assert_eq!(traj.id().as_str(), "4-0");
        assert_eq!(traj.len(), 60);
        for (p, f) in traj.points().iter().zip(&frames) {
            assert_eq!(p.position, f.detections[0].position);
            assert_eq!(p.t, f.t);
        }
    }

    #[test]
    fn short_tracks_discarded_and_unordered_frames_rejected() {
        let frames = vec![
            Frame { t: 0.0, detections: vec![det(0.0, 0.0, 0.0)] },
            Frame { t: 0.1, detections: vec![det(0.1, 0.1, 0.0)] },
        ];
        assert!(track_sequence(&frames, 1, &TrackerConfig::default()).unwrap().is_empty());
        let bad = vec![frames[1].clone(), frames[0].clone()];
        assert!(track_sequence(&bad, 1, &TrackerConfig::default()).is_err());
    }

    #[test]
    fn crossing_walkers_keep_identities() {
        // Two walkers on crossing diagonals, offset in time so their closest
        // approach is about 0.7 m.
        let rate = 30.0;
        let mut frames = Vec::new();
        for k in 0..150 {
            let t = k as f64 / rate;
            let a = (-2.0 + 1.2 * t, -1.0 + 0.6 * t);
            let b = (-2.0 + 1.2 * (t - 0.6), 1.0 - 0.6 * (t - 0.6));
            let mut dets = vec![det(t, a.0, a.1)];
            if t >= 0.6 {
                dets.push(det(t, b.0, b.1));
            }
            frames.push(Frame { t, detections: dets });
        }
        let set = track_sequence(&frames, 1, &TrackerConfig::default()).unwrap();
        assert_eq!(set.len(), 2);
        for traj in set.trajectories() {
            let dy = traj.last().position.y - traj.first().position.y;
            let dx = traj.last().position.x - traj.first().position.x;
            // Each identity keeps a consistent heading through the crossing.
            let slope = dy / dx;
            assert!((slope.abs() - 0.5).abs() < 1e-9, "slope {slope}");
            for w in traj.points().windows(2) {
                assert!(w[0].position.horizontal_distance(&w[1].position) < 0.1);
            }
        }
    }
}
