use std::collections::HashSet;
use std::fmt;

use crate::{CoreError, Point3, Result};

/// Native depth-sensor frame rate in Hz.
pub const DEFAULT_FRAME_RATE: f64 = 30.0;

/// Producer-assigned trajectory identifier, never reused within one set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TrajectoryId(pub String);

impl TrajectoryId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TrajectoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TrajectoryId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

impl From<String> for TrajectoryId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

/// One timestamped world position. Time is in seconds from a per-dataset epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub position: Point3,
}

impl TrajectoryPoint {
    pub const fn new(t: f64, position: Point3) -> Self {
        Self { t, position }
    }
}

/// Ordered sequence of timestamped positions of one pedestrian.
///
/// Construction enforces a non-empty point list, finite coordinates,
/// non-negative time and strictly increasing timestamps. `mean_height` is
/// derived from the points and cannot drift from them.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    id: TrajectoryId,
    points: Vec<TrajectoryPoint>,
    mean_height: f64,
}

impl Trajectory {
    pub fn new(id: impl Into<TrajectoryId>, points: Vec<TrajectoryPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(CoreError::TooShort { needed: 1, got: 0 });
        }
        for p in &points {
            if !p.t.is_finite() || !p.position.is_finite() {
                return Err(CoreError::NonFinite("trajectory point"));
            }
            if p.t < 0.0 {
                return Err(CoreError::NegativeTime(p.t));
            }
        }
        for w in points.windows(2) {
            if w[1].t <= w[0].t {
                return Err(CoreError::NonIncreasingTime { prev: w[0].t, next: w[1].t });
            }
        }
        let mean_height = points.iter().map(|p| p.position.z).sum::<f64>() / points.len() as f64;
        Ok(Self { id: id.into(), points, mean_height })
    }

    /// Build from `(t, position)` pairs.
    pub fn from_samples(
        id: impl Into<TrajectoryId>,
        samples: impl IntoIterator<Item = (f64, Point3)>,
    ) -> Result<Self> {
        Self::new(id, samples.into_iter().map(|(t, p)| TrajectoryPoint::new(t, p)).collect())
    }

    pub fn id(&self) -> &TrajectoryId {
        &self.id
    }

    pub fn points(&self) -> &[TrajectoryPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mean_height(&self) -> f64 {
        self.mean_height
    }

    pub fn first(&self) -> &TrajectoryPoint {
        &self.points[0]
    }

    pub fn last(&self) -> &TrajectoryPoint {
        &self.points[self.points.len() - 1]
    }

    pub fn start_time(&self) -> f64 {
        self.first().t
    }

    pub fn end_time(&self) -> f64 {
        self.last().t
    }

    pub fn duration(&self) -> f64 {
        self.end_time() - self.start_time()
    }

    pub fn with_id(mut self, id: impl Into<TrajectoryId>) -> Self {
        self.id = id.into();
        self
    }

    pub fn into_points(self) -> Vec<TrajectoryPoint> {
        self.points
    }

    /// Piecewise-linear position at time `t`; `None` outside the time span.
    pub fn position_at(&self, t: f64) -> Option<Point3> {
        if t < self.start_time() || t > self.end_time() {
            return None;
        }
        let idx = self.points.partition_point(|p| p.t <= t);
        if idx == 0 {
            return Some(self.points[0].position);
        }
        if idx == self.points.len() {
            return Some(self.last().position);
        }
        let (a, b) = (&self.points[idx - 1], &self.points[idx]);
        Some(a.position.lerp(&b.position, (t - a.t) / (b.t - a.t)))
    }

    /// Total horizontal path length.
    pub fn path_length(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[0].position.horizontal_distance(&w[1].position))
            .sum()
    }
}

/// Sample the piecewise-linear interpolant of `traj` every `1/rate` seconds
/// from its first to its last timestamp. Both endpoints are kept exactly.
pub fn resample(traj: &Trajectory, rate: f64) -> Result<Trajectory> {
    if traj.len() < 2 {
        return Err(CoreError::TooShort { needed: 2, got: traj.len() });
    }
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(CoreError::BadRate(rate));
    }
    let t0 = traj.start_time();
    let t1 = traj.end_time();
    let step = 1.0 / rate;
    // Grid points closer than this to the final timestamp are snapped onto it.
    let snap = 1e-9 * step.max(1.0);
    let mut out = Vec::with_capacity(((t1 - t0) * rate).ceil() as usize + 2);
    out.push(*traj.first());

    let src = traj.points();
    let mut seg = 0;
    let mut k = 1u64;
    loop {
        let t = t0 + k as f64 * step;
        if t >= t1 - snap {
            break;
        }
        while src[seg + 1].t < t {
            seg += 1;
        }
        let (a, b) = (&src[seg], &src[seg + 1]);
        let s = (t - a.t) / (b.t - a.t);
        out.push(TrajectoryPoint::new(t, a.position.lerp(&b.position, s)));
        k += 1;
    }
    out.push(*traj.last());
    Trajectory::new(traj.id().clone(), out)
}

/// Trajectories sharing one frame rate, with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    trajectories: Vec<Trajectory>,
    frame_rate: f64,
}

impl TrajectorySet {
    pub fn new(trajectories: Vec<Trajectory>, frame_rate: f64) -> Result<Self> {
        if !(frame_rate > 0.0 && frame_rate.is_finite()) {
            return Err(CoreError::BadRate(frame_rate));
        }
        let mut seen = HashSet::with_capacity(trajectories.len());
        for t in &trajectories {
            if !seen.insert(t.id()) {
                return Err(CoreError::DuplicateId(t.id().0.clone()));
            }
        }
        Ok(Self { trajectories, frame_rate })
    }

    pub fn empty(frame_rate: f64) -> Result<Self> {
        Self::new(Vec::new(), frame_rate)
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn into_trajectories(self) -> Vec<Trajectory> {
        self.trajectories
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn get(&self, id: &TrajectoryId) -> Option<&Trajectory> {
        self.trajectories.iter().find(|t| t.id() == id)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Trajectory> {
        self.trajectories.iter()
    }
}

impl<'a> IntoIterator for &'a TrajectorySet {
    type Item = &'a Trajectory;
    type IntoIter = std::slice::Iter<'a, Trajectory>;
    fn into_iter(self) -> Self::IntoIter {
        self.trajectories.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(x: f64, y: f64, z: f64) -> Point3 {
        Point3::new(x, y, z)
    }

    #[test]
    fn rejects_bad_timestamps() {
        let pts = vec![
            TrajectoryPoint::new(0.0, p(0.0, 0.0, 1.7)),
            TrajectoryPoint::new(0.0, p(1.0, 0.0, 1.7)),
        ];
        assert!(matches!(
            Trajectory::new("a", pts),
            Err(CoreError::NonIncreasingTime { .. })
        ));
        assert!(Trajectory::new("a", vec![]).is_err());
        assert!(matches!(
            Trajectory::from_samples("a", [(-1.0, p(0.0, 0.0, 0.0))]),
            Err(CoreError::NegativeTime(_))
        ));
    }

    #[test]
    fn mean_height_is_point_average() {
        let t = Trajectory::from_samples(
            "a",
            [(0.0, p(0.0, 0.0, 1.6)), (0.1, p(0.0, 0.0, 1.8)), (0.2, p(0.0, 0.0, 1.7))],
        )
        .unwrap();
        assert!((t.mean_height() - 1.7).abs() < 1e-9);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let a = Trajectory::from_samples("x", [(0.0, p(0.0, 0.0, 1.0))]).unwrap();
        let b = a.clone();
        assert!(matches!(TrajectorySet::new(vec![a, b], 30.0), Err(CoreError::DuplicateId(_))));
    }

    #[test]
    fn resample_two_points_at_two_hz() {
        let t = Trajectory::from_samples("a", [(0.0, p(0.0, 0.0, 1.0)), (1.0, p(2.0, 4.0, 2.0))])
            .unwrap();
        let r = resample(&t, 2.0).unwrap();
        let times: Vec<f64> = r.points().iter().map(|q| q.t).collect();
        assert_eq!(times, vec![0.0, 0.5, 1.0]);
        assert_eq!(r.points()[1].position, p(1.0, 2.0, 1.5));
    }

    #[test]
    fn resample_single_point_is_length_error() {
        let t = Trajectory::from_samples("a", [(0.0, p(0.0, 0.0, 1.0))]).unwrap();
        assert!(matches!(resample(&t, 10.0), Err(CoreError::TooShort { .. })));
    }

    #[test]
    fn resample_uniform_input_is_identity() {
        let rate = 30.0;
        let t = Trajectory::from_samples(
            "a",
            (0..90).map(|k| {
                let t = 2.0 + k as f64 / rate;
                (t, p(t.sin(), t.cos(), 1.7))
            }),
        )
        .unwrap();
        let r = resample(&t, rate).unwrap();
        assert_eq!(r.len(), t.len());
        for (a, b) in r.points().iter().zip(t.points()) {
            assert!((a.t - b.t).abs() < 1e-12);
            assert!(a.position.distance(&b.position) < 1e-12);
        }
    }

    /// Independent oracle: locate the segment by linear scan and interpolate.
    fn brute_interp(traj: &Trajectory, t: f64) -> Point3 {
        let pts = traj.points();
        for w in pts.windows(2) {
            if w[0].t <= t && t <= w[1].t {
                let s = (t - w[0].t) / (w[1].t - w[0].t);
                return Point3::new(
                    w[0].position.x * (1.0 - s) + w[1].position.x * s,
                    w[0].position.y * (1.0 - s) + w[1].position.y * s,
                    w[0].position.z * (1.0 - s) + w[1].position.z * s,
                );
            }
        }
        panic!("query time outside trajectory");
    }

    #[test]
    fn resample_matches_segmentwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut t = 0.0;
        let samples: Vec<_> = (0..5)
            .map(|_| {
                t += rng.random_range(0.05..0.6);
                (t, p(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), 1.7))
            })
            .collect();
        let traj = Trajectory::from_samples("r", samples).unwrap();
        let r = resample(&traj, 10.0).unwrap();
        assert_eq!(r.first(), traj.first());
        assert_eq!(r.last(), traj.last());
        for q in r.points() {
            let want = brute_interp(&traj, q.t);
            assert!(q.position.distance(&want) < 1e-12, "t = {}", q.t);
        }
        for w in r.points()[..r.len() - 1].windows(2) {
            assert!((w[1].t - w[0].t - 0.1).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn resample_is_idempotent(
            n in 2usize..40,
            rate in 1.0f64..60.0,
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut t = rng.random_range(0.0..100.0);
            let samples: Vec<_> = (0..n).map(|_| {
                t += rng.random_range(0.01..0.5);
                (t, p(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), 1.7))
            }).collect();
            let traj = Trajectory::from_samples("r", samples).unwrap();
            let once = resample(&traj, rate).unwrap();
            let twice = resample(&once, rate).unwrap();
            prop_assert_eq!(once.len(), twice.len());
            for (a, b) in once.points().iter().zip(twice.points()) {
                prop_assert!((a.t - b.t).abs() < 1e-12);
                prop_assert!(a.position.distance(&b.position) < 1e-12);
            }
        }
    }
}
