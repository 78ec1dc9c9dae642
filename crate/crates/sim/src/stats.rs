//! Speed histograms, walking-time distributions and the two-sample
//! Kolmogorov-Smirnov test.

use std::fmt::Write as _;

use crowdcal_core::{Trajectory, TrajectorySet, Vec2};
use rayon::prelude::*;

use crate::{Result, SimError};

/// Frames averaged when smoothing finite-difference speeds.
pub const SPEED_SMOOTHING_WINDOW: usize = 5;
pub const SPEED_BIN_WIDTH: f64 = 0.1;
/// Below this sample size the asymptotic p-value is flagged as approximate.
pub const KS_SMALL_SAMPLE: usize = 25;

/// Horizontal speeds between consecutive samples, smoothed with a centred
/// moving average of `window` frames (shrunk at the ends).
pub fn smoothed_speeds(traj: &Trajectory, window: usize) -> Vec<f64> {
    let raw: Vec<f64> = traj
        .points()
        .windows(2)
        .map(|w| w[1].position.horizontal_distance(&w[0].position) / (w[1].t - w[0].t))
        .collect();
    let half = window.max(1) / 2;
    (0..raw.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(raw.len());
            raw[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Percentile `p` in (0, 100] with linear interpolation between order
/// statistics. `None` for an empty sample.
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = (p / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedDistribution {
    /// Per-trajectory mean speeds, in set order.
    pub speeds: Vec<f64>,
    /// `(lower edge, count)` for consecutive bins of [`SPEED_BIN_WIDTH`].
    pub bins: Vec<(f64, usize)>,
    /// Sample mean of `speeds`.
    pub mean: f64,
    /// Sample standard deviation of `speeds`.
    pub std_dev: f64,
    /// Trajectories with fewer than two points.
    pub skipped: usize,
}

impl SpeedDistribution {
    /// Two-column `speed_m_s,count` table keyed by bin centre.
    pub fn histogram_table(&self) -> String {
        let mut out = String::from("speed_m_s,count\n");
        for (lo, count) in &self.bins {
            writeln!(out, "{:.3},{count}", lo + SPEED_BIN_WIDTH / 2.0).unwrap();
        }
        out
    }
}

/// Histogram of per-trajectory mean walking speeds with a moment-based
/// Gaussian fit.
pub fn speed_distribution(set: &TrajectorySet) -> Result<SpeedDistribution> {
    let per: Vec<Option<f64>> = set
        .trajectories()
        .par_iter()
        .map(|t| {
            let s = smoothed_speeds(t, SPEED_SMOOTHING_WINDOW);
            (!s.is_empty()).then(|| s.iter().sum::<f64>() / s.len() as f64)
        })
        .collect();
    let skipped = per.iter().filter(|s| s.is_none()).count();
    let speeds: Vec<f64> = per.into_iter().flatten().collect();
    if speeds.is_empty() {
        return Err(SimError::Empty("no trajectory with two or more points"));
    }
    let (mean, std_dev) = mean_std(&speeds);
    let bin = |s: f64| (s / SPEED_BIN_WIDTH).floor() as i64;
    let lo = speeds.iter().map(|s| bin(*s)).min().unwrap();
    let hi = speeds.iter().map(|s| bin(*s)).max().unwrap();
    let mut counts = vec![0usize; (hi - lo + 1) as usize];
    for s in &speeds {
        counts[(bin(*s) - lo) as usize] += 1;
    }
    let bins = counts
        .into_iter()
        .enumerate()
        .map(|(k, c)| ((lo + k as i64) as f64 * SPEED_BIN_WIDTH, c))
        .collect();
    Ok(SpeedDistribution { speeds, bins, mean, std_dev, skipped })
}

/// A measurement line in the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gate {
    pub a: Vec2,
    pub b: Vec2,
}

impl Gate {
    pub fn new(a: Vec2, b: Vec2) -> Self {
        Self { a, b }
    }

    /// Fraction along `p → q` where the step crosses the gate, if it does.
    pub fn crossing(&self, p: Vec2, q: Vec2) -> Option<f64> {
        let r = q - p;
        let s = self.b - self.a;
        let denom = r.cross(s);
        if denom == 0.0 {
            return None;
        }
        let ap = self.a - p;
        let u = ap.cross(s) / denom;
        let v = ap.cross(r) / denom;
        ((0.0..=1.0).contains(&u) && (0.0..=1.0).contains(&v)).then_some(u)
    }

    fn first_crossing(&self, traj: &Trajectory) -> Option<f64> {
        traj.points().windows(2).find_map(|w| {
            let u = self.crossing(w[0].position.xy(), w[1].position.xy())?;
            Some(w[0].t + u * (w[1].t - w[0].t))
        })
    }
}

/// Time between the first crossings of the two gates. Whichever gate is
/// crossed first counts as the entry, so both walking directions are
/// measured.
pub fn walking_time(traj: &Trajectory, gates: &(Gate, Gate)) -> Option<f64> {
    let a = gates.0.first_crossing(traj)?;
    let b = gates.1.first_crossing(traj)?;
    Some((b - a).abs())
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkingTimeCdf {
    /// Sorted walking times (s).
    pub times: Vec<f64>,
    /// Trajectories that did not cross both gates.
    pub excluded: usize,
}

impl WalkingTimeCdf {
    pub fn from_times(mut times: Vec<f64>, excluded: usize) -> Self {
        times.sort_by(f64::total_cmp);
        Self { times, excluded }
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Fraction of walking times ≤ `t`.
    pub fn eval(&self, t: f64) -> f64 {
        if self.times.is_empty() {
            return 0.0;
        }
        self.times.partition_point(|x| *x <= t) as f64 / self.times.len() as f64
    }

    /// `(t, F(t))` at every distinct walking time; the last value is 1.
    pub fn steps(&self) -> Vec<(f64, f64)> {
        let n = self.times.len() as f64;
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (i, t) in self.times.iter().enumerate() {
            let f = (i + 1) as f64 / n;
            match out.last_mut() {
                Some(last) if last.0 == *t => last.1 = f,
                _ => out.push((*t, f)),
            }
        }
        out
    }

    /// Two-column `walking_time_s,cdf` table.
    pub fn table(&self) -> String {
        let mut out = String::from("walking_time_s,cdf\n");
        for (t, f) in self.steps() {
            writeln!(out, "{t},{f}").unwrap();
        }
        out
    }
}

pub fn walking_time_cdf(set: &TrajectorySet, gates: &(Gate, Gate)) -> WalkingTimeCdf {
    let per: Vec<Option<f64>> = set.trajectories().par_iter().map(|t| walking_time(t, gates)).collect();
    let excluded = per.iter().filter(|t| t.is_none()).count();
    WalkingTimeCdf::from_times(per.into_iter().flatten().collect(), excluded)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    /// `n_a·n_b/(n_a + n_b)`.
    pub effective_n: f64,
    /// The smaller sample has fewer than [`KS_SMALL_SAMPLE`] values, so the
    /// asymptotic p-value is only approximate.
    pub small_sample: bool,
}

impl KsResult {
    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// Largest gap between the two empirical CDFs.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    // one sample exhausted: the other CDF still climbs to 1
    if i < a.len() || j < b.len() {
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Survival function of the Kolmogorov distribution,
/// `Q(λ) = 2 Σ (-1)^(k-1) exp(-2k²λ²)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // theta-function form; converges fast for small λ
        let c = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let mut sum = 0.0;
        for k in 1..=20 {
            let m = (2 * k - 1) as f64;
            let term = (c * m * m).exp();
            sum += term;
            if term < 1e-18 * sum {
                break;
            }
        }
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * sum).clamp(0.0, 1.0)
    } else {
        let mut sum = 0.0;
        let mut sign = 1.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            sum += sign * term;
            if term < 1e-18 {
                break;
            }
            sign = -sign;
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(SimError::Empty("Kolmogorov-Smirnov sample"));
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(SimError::Params("NaN in Kolmogorov-Smirnov sample".into()));
    }
    let statistic = ks_statistic(a, b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let effective_n = na * nb / (na + nb);
    Ok(KsResult {
        statistic,
        p_value: kolmogorov_q(effective_n.sqrt() * statistic),
        effective_n,
        small_sample: a.len().min(b.len()) < KS_SMALL_SAMPLE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crowdcal_core::{Point3, TrajectoryPoint};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn straight(id: &str, speed: f64, heading: f64, n: usize) -> Trajectory {
        let pts = (0..n)
            .map(|k| {
                let t = k as f64 / 30.0;
                let s = speed * t;
                TrajectoryPoint::new(t, Point3::new(s * heading.cos(), s * heading.sin(), 1.7))
            })
            .collect();
        Trajectory::new(id, pts).unwrap()
    }

    #[test]
    fn constant_speed_gives_zero_spread() {
        let set = TrajectorySet::new(
            (0..6).map(|k| straight(&format!("p{k}"), 1.0, k as f64, 40)).collect(),
            30.0,
        )
        .unwrap();
        let d = speed_distribution(&set).unwrap();
        assert!((d.mean - 1.0).abs() < 1e-12);
        assert!(d.std_dev < 1e-12);
        assert_eq!(d.bins.iter().map(|b| b.1).sum::<usize>(), 6);
    }

    #[test]
    fn fitted_gaussian_matches_generator() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let normal = Normal::new(1.34, 0.25).unwrap();
        let set = TrajectorySet::new(
            (0..500)
                .map(|k| {
                    let v: f64 = normal.sample(&mut rng);
                    straight(&format!("p{k}"), v.abs(), rng.random_range(0.0..std::f64::consts::TAU), 60)
                })
                .collect(),
            30.0,
        )
        .unwrap();
        let d = speed_distribution(&set).unwrap();
        assert!((d.mean - 1.34).abs() < 0.03, "{}", d.mean);
        assert!((d.std_dev - 0.25).abs() < 0.03, "{}", d.std_dev);
        assert!(d.histogram_table().lines().count() > 10);
    }

    #[test]
    fn two_trajectory_mean_by_hand() {
        let set = TrajectorySet::new(vec![straight("a", 0.9, 0.0, 30), straight("b", 1.5, 2.0, 30)], 30.0).unwrap();
        let d = speed_distribution(&set).unwrap();
        assert!((d.mean - 1.2).abs() < 1e-12);
        assert!((d.std_dev - (0.18f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn speed_distribution_rejects_empty_input() {
        assert!(speed_distribution(&TrajectorySet::empty(30.0).unwrap()).is_err());
        let single = Trajectory::new("s", vec![TrajectoryPoint::new(0.0, Point3::ORIGIN)]).unwrap();
        let set = TrajectorySet::new(vec![single], 30.0).unwrap();
        assert!(speed_distribution(&set).is_err());
    }

    #[test]
    fn smoothing_averages_neighbouring_frames() {
        let pts = [0.0, 0.1, 0.3, 0.6, 1.0, 1.5]
            .iter()
            .enumerate()
            .map(|(k, x)| TrajectoryPoint::new(k as f64, Point3::new(*x, 0.0, 0.0)))
            .collect();
        let t = Trajectory::new("t", pts).unwrap();
        let s = smoothed_speeds(&t, 5);
        let raw = [0.1, 0.2, 0.3, 0.4, 0.5];
        assert!((s[0] - (raw[0] + raw[1] + raw[2]) / 3.0).abs() < 1e-12);
        assert!((s[2] - 0.3).abs() < 1e-12);
        assert!((s[4] - (raw[2] + raw[3] + raw[4]) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn percentile_interpolates() {
        assert_eq!(percentile(&[], 50.0), None);
        assert_eq!(percentile(&[3.0, 1.0, 2.0], 50.0), Some(2.0));
        let v: Vec<f64> = (1..=11).map(f64::from).collect();
        assert!((percentile(&v, 90.0).unwrap() - 10.0).abs() < 1e-12);
        assert!((percentile(&[1.0, 2.0], 90.0).unwrap() - 1.9).abs() < 1e-12);
        assert_eq!(percentile(&[5.0], 90.0), Some(5.0));
    }

    fn gates() -> (Gate, Gate) {
        (
            Gate::new(Vec2::new(-3.0, -2.0), Vec2::new(-3.0, 2.0)),
            Gate::new(Vec2::new(3.0, -2.0), Vec2::new(3.0, 2.0)),
        )
    }

    #[test]
    fn walking_time_over_six_meters() {
        let pts = (0..300)
            .map(|k| {
                let t = k as f64 / 30.0;
                TrajectoryPoint::new(t, Point3::new(-5.0 + 1.5 * t, 0.3, 1.7))
            })
            .collect();
        let t = Trajectory::new("w", pts).unwrap();
        assert!((walking_time(&t, &gates()).unwrap() - 4.0).abs() < 1e-9);

        let back: Vec<TrajectoryPoint> = t
            .points()
            .iter()
            .map(|p| TrajectoryPoint::new(p.t, Point3::new(-p.position.x, p.position.y, p.position.z)))
            .collect();
        let back = Trajectory::new("r", back).unwrap();
        assert!((walking_time(&back, &gates()).unwrap() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn crossing_matches_closed_form_intersection() {
        // step from (-4, -1) to (-2, 1) at t = 10..10.5 crosses x = -3 at its midpoint
        let pts = vec![
            TrajectoryPoint::new(10.0, Point3::new(-4.0, -1.0, 0.0)),
            TrajectoryPoint::new(10.5, Point3::new(-2.0, 1.0, 0.0)),
            TrajectoryPoint::new(11.0, Point3::new(2.0, 1.0, 0.0)),
            TrajectoryPoint::new(12.0, Point3::new(4.0, 0.0, 0.0)),
        ];
        let t = Trajectory::new("x", pts).unwrap();
        // x = 3 is crossed at fraction 0.5 of the last step: t = 11.5
        assert!((walking_time(&t, &gates()).unwrap() - (11.5 - 10.25)).abs() < 1e-12);
        let g = Gate::new(Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0));
        let u = g.crossing(Vec2::new(0.0, 1.0), Vec2::new(2.0, -1.0)).unwrap();
        assert!((u - 0.25).abs() < 1e-15);
        assert!(g.crossing(Vec2::new(5.0, 0.0), Vec2::new(6.0, 0.0)).is_none());
    }

    #[test]
    fn incomplete_crossings_are_excluded() {
        let stays = straight("s", 0.2, 0.0, 30);
        let set = TrajectorySet::new(vec![stays], 30.0).unwrap();
        let cdf = walking_time_cdf(&set, &gates());
        assert!(cdf.is_empty());
        assert_eq!(cdf.excluded, 1);
        assert_eq!(cdf.eval(10.0), 0.0);
    }

    #[test]
    fn cdf_is_right_continuous_and_reaches_one() {
        let cdf = WalkingTimeCdf::from_times(vec![4.0, 3.0, 4.0, 5.5], 0);
        assert_eq!(cdf.steps(), vec![(3.0, 0.25), (4.0, 0.75), (5.5, 1.0)]);
        assert_eq!(cdf.eval(3.999), 0.25);
        assert_eq!(cdf.eval(4.0), 0.75);
        assert_eq!(cdf.eval(9.0), 1.0);
        assert!(cdf.table().starts_with("walking_time_s,cdf\n3,0.25\n"));
    }

    #[test]
    fn ks_trivial_cases() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let r = ks_two_sample(&a, &a).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert!(r.small_sample);
        let r = ks_two_sample(&a, &[10.0, 11.0]).unwrap();
        assert_eq!(r.statistic, 1.0);
        assert!(ks_two_sample(&[], &a).is_err());
    }

    /// Pooled-point sweep with linear counting.
    pub(crate) fn ks_brute(a: &[f64], b: &[f64]) -> f64 {
        let cdf = |s: &[f64], x: f64| s.iter().filter(|v| **v <= x).count() as f64 / s.len() as f64;
        a.iter().chain(b).map(|x| (cdf(a, *x) - cdf(b, *x)).abs()).fold(0.0, f64::max)
    }

    /// Alternating series summed until the terms vanish.
    pub(crate) fn kolmogorov_series(lambda: f64) -> f64 {
        if lambda < 0.2 {
            // 1 - Q(0.2) is below 1e-12
            return 1.0;
        }
        let mut sum = 0.0;
        let mut k = 1.0f64;
        loop {
            let term = (-2.0 * k * k * lambda * lambda).exp();
            if term < 1e-20 {
                break;
            }
            sum += if k as u64 % 2 == 1 { term } else { -term };
            k += 1.0;
        }
        2.0 * sum
    }

    #[test]
    fn ks_statistic_equals_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let na = rng.random_range(1..40);
            let nb = rng.random_range(1..40);
            // coarse values force ties
            let a: Vec<f64> = (0..na).map(|_| (rng.random_range(0.0..5.0f64) * 4.0).round() / 4.0).collect();
            let b: Vec<f64> = (0..nb).map(|_| (rng.random_range(0.5..6.0f64) * 4.0).round() / 4.0).collect();
            assert_eq!(ks_statistic(&a, &b), ks_brute(&a, &b));
        }
    }

    #[test]
    fn p_value_matches_series() {
        let mut lambda = 0.05;
        while lambda < 3.0 {
            assert!((kolmogorov_q(lambda) - kolmogorov_series(lambda)).abs() < 1e-6, "λ = {lambda}");
            lambda += 0.01;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let a: Vec<f64> = (0..30).map(|_| rng.random_range(0.0..1.0)).collect();
            let b: Vec<f64> = (0..30).map(|_| rng.random_range(0.1..1.2)).collect();
            let r = ks_two_sample(&a, &b).unwrap();
            assert_eq!(r.statistic, ks_brute(&a, &b));
            assert!((r.p_value - kolmogorov_series(15f64.sqrt() * r.statistic)).abs() < 1e-6);
        }
    }

    proptest! {
        #[test]
        fn ks_is_symmetric_and_transform_invariant(
            a in prop::collection::vec(-10.0f64..10.0, 1..50),
            b in prop::collection::vec(-10.0f64..10.0, 1..50),
        ) {
            let d = ks_statistic(&a, &b);
            prop_assert_eq!(d, ks_statistic(&b, &a));
            let f = |v: &[f64]| v.iter().map(|x| (x / 3.0).exp() + 2.0 * x).collect::<Vec<_>>();
            prop_assert_eq!(d, ks_statistic(&f(&a), &f(&b)));
            prop_assert!((0.0..=1.0).contains(&d));
        }

        #[test]
        fn cdf_steps_are_monotone(times in prop::collection::vec(0.0f64..20.0, 1..60)) {
            let cdf = WalkingTimeCdf::from_times(times, 0);
            let steps = cdf.steps();
            prop_assert!(steps.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 < w[1].1));
            prop_assert_eq!(steps.last().unwrap().1, 1.0);
            for (t, f) in &steps {
                prop_assert_eq!(cdf.eval(*t), *f);
            }
        }
    }
}
