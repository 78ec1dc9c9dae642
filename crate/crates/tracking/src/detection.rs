//! Per-frame pedestrian detection on world-frame point clouds.
//!
//! The pipeline is background removal, a height band cutoff, complete-linkage
//! clustering on a seeded sample, regrouping of all points around the sampled
//! cluster centers, and finally picking the 95th-percentile-height member of
//! every cluster as the person's position.

use std::io::{BufRead, Write};

use crowdcal_core::Point3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Result, TrackingError};

/// Axis-aligned box of known static structure, world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn contains(&self, p: &Point3) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }
}

/// Handcrafted static background: a set of boxes. May be empty.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BackgroundModel {
    pub boxes: Vec<Aabb>,
}

impl BackgroundModel {
    pub fn new(boxes: Vec<Aabb>) -> Result<Self> {
        for b in &boxes {
            if !b.min.is_finite() || !b.max.is_finite() {
                return Err(TrackingError::Config("background box with non-finite corner".into()));
            }
        }
        Ok(Self { boxes })
    }

    /// One box per line: `xmin ymin zmin xmax ymax zmax`; `#` starts a comment.
    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut boxes = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let v = line
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| TrackingError::Format(format!("background line {}: {e}", lineno + 1)))?;
            if v.len() != 6 {
                return Err(TrackingError::Format(format!(
                    "background line {}: expected 6 values",
                    lineno + 1
                )));
            }
            boxes.push(Aabb {
                min: Point3::new(v[0].min(v[3]), v[1].min(v[4]), v[2].min(v[5])),
                max: Point3::new(v[0].max(v[3]), v[1].max(v[4]), v[2].max(v[5])),
            });
        }
        Self::new(boxes)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let mut s = String::from("# xmin ymin zmin xmax ymax zmax\n");
        for b in &self.boxes {
            s.push_str(&format!(
                "{} {} {} {} {} {}\n",
                b.min.x, b.min.y, b.min.z, b.max.x, b.max.y, b.max.z
            ));
        }
        w.write_all(s.as_bytes())?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionConfig {
    /// Lower edge of the upper-body height band, meters.
    pub cutoff_low: f64,
    /// Upper edge of the band (tall adult), meters.
    pub cutoff_high: f64,
    /// Number of points sampled for clustering.
    pub sample_size: usize,
    /// Dendrogram cut height (shoulder width), meters.
    pub linkage_threshold: f64,
    pub min_cluster_points: usize,
    /// Horizontal radius around a cluster centroid within which points join it.
    pub max_center_distance: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            cutoff_low: 1.5,
            cutoff_high: 2.1,
            sample_size: 500,
            linkage_threshold: 0.6,
            min_cluster_points: 15,
            max_center_distance: 0.45,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.cutoff_low && self.cutoff_low < self.cutoff_high) {
            return Err(TrackingError::Config("need 0 < cutoff_low < cutoff_high".into()));
        }
        if self.sample_size == 0 {
            return Err(TrackingError::Config("sample_size must be at least 1".into()));
        }
        if !(self.linkage_threshold > 0.0) || !(self.max_center_distance > 0.0) {
            return Err(TrackingError::Config(
                "linkage threshold and center distance must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One detected person in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub position: Point3,
    pub t: f64,
    pub point_count: usize,
    pub sensor_id: u32,
}

pub fn subtract_background(points: &[Point3], bg: &BackgroundModel) -> Vec<Point3> {
    points.iter().filter(|p| !bg.boxes.iter().any(|b| b.contains(p))).copied().collect()
}

/// Keep points with `cutoff_low <= z <= cutoff_high`.
pub fn height_cutoff(points: &[Point3], cfg: &DetectionConfig) -> Vec<Point3> {
    points
        .iter()
        .filter(|p| p.z >= cfg.cutoff_low && p.z <= cfg.cutoff_high)
        .copied()
        .collect()
}

/// Complete-linkage clustering of a seeded sample of `points`, cut at
/// `cfg.linkage_threshold`. Returned groups hold indices into `points`, each
/// sorted ascending, groups ordered by their smallest index.
pub fn complete_linkage_cluster(
    points: &[Point3],
    cfg: &DetectionConfig,
    seed: u64,
) -> Vec<Vec<usize>> {
    if points.is_empty() {
        return Vec::new();
    }
    let sample = sample_indices(points.len(), cfg.sample_size, seed);
    let sampled: Vec<Point3> = sample.iter().map(|&i| points[i]).collect();
    cut_complete_linkage(&sampled, cfg.linkage_threshold)
        .into_iter()
        .map(|g| g.into_iter().map(|k| sample[k]).collect())
        .collect()
}

fn sample_indices(n: usize, r: usize, seed: u64) -> Vec<usize> {
    if r >= n {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, r).into_vec();
    idx.sort_unstable();
    idx
}

/// Partition of `points` into the clusters of the complete-linkage dendrogram
/// whose merge heights are below `threshold`.
///
/// Nearest-neighbor-chain agglomeration over a dense distance matrix. A
/// cluster whose nearest neighbour is already at or beyond the threshold can
/// never merge below it again (complete linkage only grows), so it is retired
/// immediately.
pub fn cut_complete_linkage(points: &[Point3], threshold: f64) -> Vec<Vec<usize>> {
    let n = points.len();
    if n == 0 {
        return Vec::new();
    }
    let mut dist = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = points[i].distance(&points[j]);
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    let mut active = vec![true; n];
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut done: Vec<Vec<usize>> = Vec::new();
    let mut remaining = n;
    let mut chain: Vec<usize> = Vec::with_capacity(n);

    while remaining > 0 {
        if chain.is_empty() {
            let first = (0..n).find(|&i| active[i]).expect("an active cluster remains");
            chain.push(first);
        }
        let a = *chain.last().unwrap();
        let prev = chain.len().checked_sub(2).map(|k| chain[k]);
        // Nearest active neighbour; the chain predecessor wins ties, then the
        // lowest index.
        let mut best: Option<(f64, usize)> = prev.map(|p| (dist[a * n + p], p));
        for b in 0..n {
            if b == a || !active[b] {
                continue;
            }
            let d = dist[a * n + b];
            match best {
                Some((bd, _)) if d >= bd => {}
                _ => best = Some((d, b)),
            }
        }
        match best {
            Some((d, b)) if d < threshold => {
                if Some(b) == prev {
                    chain.pop();
                    chain.pop();
                    let (keep, gone) = if a < b { (a, b) } else { (b, a) };
                    for k in 0..n {
                        if active[k] && k != keep && k != gone {
                            let merged = dist[k * n + keep].max(dist[k * n + gone]);
                            dist[k * n + keep] = merged;
                            dist[keep * n + k] = merged;
                        }
                    }
                    let moved = std::mem::take(&mut members[gone]);
                    members[keep].extend(moved);
                    active[gone] = false;
                    remaining -= 1;
                } else {
                    chain.push(b);
                }
            }
            _ => {
                // Isolated at this cut: retire it. Everything below it in the
                // chain stays valid because distances to `a` no longer matter.
                chain.pop();
                active[a] = false;
                remaining -= 1;
                done.push(std::mem::take(&mut members[a]));
            }
        }
    }

    for g in &mut done {
        g.sort_unstable();
    }
    done.sort_by_key(|g| g[0]);
    done
}

/// Regroup all band points around the horizontal centroids of the sampled
/// clusters and drop clusters below `min_cluster_points`.
///
/// `clusters` index into `all_points`. Each point joins its nearest centroid
/// when within `max_center_distance`; otherwise it is discarded.
pub fn assign_and_cleanup(
    all_points: &[Point3],
    clusters: &[Vec<usize>],
    cfg: &DetectionConfig,
) -> Vec<Vec<usize>> {
    let centroids: Vec<(f64, f64)> = clusters
        .iter()
        .filter(|c| !c.is_empty())
        .map(|c| {
            let (sx, sy) = c.iter().fold((0.0, 0.0), |(sx, sy), &i| {
                (sx + all_points[i].x, sy + all_points[i].y)
            });
            (sx / c.len() as f64, sy / c.len() as f64)
        })
        .collect();
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); centroids.len()];
    let limit2 = cfg.max_center_distance * cfg.max_center_distance;
    for (i, p) in all_points.iter().enumerate() {
        let mut best: Option<(f64, usize)> = None;
        for (k, &(cx, cy)) in centroids.iter().enumerate() {
            let d2 = (p.x - cx).powi(2) + (p.y - cy).powi(2);
            if best.is_none_or(|(bd, _)| d2 < bd) {
                best = Some((d2, k));
            }
        }
        if let Some((d2, k)) = best {
            if d2 <= limit2 {
                groups[k].push(i);
            }
        }
    }
    groups.retain(|g| g.len() >= cfg.min_cluster_points.max(1));
    groups
}

/// Nearest-rank 95th percentile of member heights; the member at that rank is
/// the representative. Ties in height are ordered by input position.
pub fn cluster_representative(points: &[Point3], t: f64, sensor_id: u32) -> Result<Detection> {
    if points.is_empty() {
        return Err(TrackingError::Empty("cluster has no points"));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].z.total_cmp(&points[b].z).then(a.cmp(&b)));
    let rank = percentile_rank(points.len(), 95.0);
    Ok(Detection { position: points[order[rank - 1]], t, point_count: points.len(), sensor_id })
}

/// 1-based nearest-rank index for percentile `p` of `n` values.
pub(crate) fn percentile_rank(n: usize, p: f64) -> usize {
    // Guard the product against float noise (0.95 * 20 = 19.000000000000004).
    let raw = p / 100.0 * n as f64;
    let rank = (raw - 1e-9).ceil() as usize;
    rank.clamp(1, n)
}

/// Full per-frame detection for world-frame points.
///
/// Points are put into a canonical lexicographic order first, so the result
/// does not depend on the input order for a given seed. Clusters whose
/// representatives end up closer than half the linkage threshold are fused.
pub fn detect_frame(
    points: &[Point3],
    bg: &BackgroundModel,
    cfg: &DetectionConfig,
    seed: u64,
    t: f64,
    sensor_id: u32,
) -> Vec<Detection> {
    let mut band = height_cutoff(&subtract_background(points, bg), cfg);
    if band.is_empty() {
        return Vec::new();
    }
    band.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)).then(a.z.total_cmp(&b.z)));
    let clusters = complete_linkage_cluster(&band, cfg, seed);
    let mut groups = assign_and_cleanup(&band, &clusters, cfg);

    let min_sep = cfg.linkage_threshold / 2.0;
    loop {
        let reps: Vec<Point3> = groups.iter().map(|g| representative_of(&band, g)).collect();
        let close = (0..reps.len())
            .flat_map(|i| ((i + 1)..reps.len()).map(move |j| (i, j)))
            .find(|&(i, j)| reps[i].horizontal_distance(&reps[j]) < min_sep);
        match close {
            Some((i, j)) => {
                let moved = groups.remove(j);
                groups[i].extend(moved);
                groups[i].sort_unstable();
            }
            None => break,
        }
    }

    groups
        .iter()
        .map(|g| {
            let pts: Vec<Point3> = g.iter().map(|&i| band[i]).collect();
            cluster_representative(&pts, t, sensor_id).expect("groups are non-empty")
        })
        .collect()
}

fn representative_of(points: &[Point3], group: &[usize]) -> Point3 {
    let pts: Vec<Point3> = group.iter().map(|&i| points[i]).collect();
    cluster_representative(&pts, 0.0, 0).expect("groups are non-empty").position
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    /// Naive agglomeration: at every step recompute the max-distance linkage
    /// for all cluster pairs and merge the closest (lowest index pair on ties).
    pub(crate) fn naive_complete_linkage(points: &[Point3], threshold: f64) -> Vec<Vec<usize>> {
        let mut clusters: Vec<Vec<usize>> = (0..points.len()).map(|i| vec![i]).collect();
        loop {
            let mut best: Option<(f64, usize, usize)> = None;
            for i in 0..clusters.len() {
                for j in (i + 1)..clusters.len() {
                    let mut d: f64 = 0.0;
                    for &a in &clusters[i] {
                        for &b in &clusters[j] {
                            d = d.max(points[a].distance(&points[b]));
                        }
                    }
                    if best.is_none_or(|(bd, _, _)| d < bd) {
                        best = Some((d, i, j));
                    }
                }
            }
            match best {
                Some((d, i, j)) if d < threshold => {
                    let moved = clusters.remove(j);
                    clusters[i].extend(moved);
                }
                _ => break,
            }
        }
        for c in &mut clusters {
            c.sort_unstable();
        }
        clusters.sort_by_key(|c| c[0]);
        clusters
    }

    fn blob(rng: &mut ChaCha8Rng, cx: f64, cy: f64, radius: f64, n: usize) -> Vec<Point3> {
        (0..n)
            .map(|_| loop {
                let dx = rng.random_range(-radius..radius);
                let dy = rng.random_range(-radius..radius);
                if dx * dx + dy * dy <= radius * radius {
                    break Point3::new(cx + dx, cy + dy, rng.random_range(1.55..1.75));
                }
            })
            .collect()
    }

    #[test]
    fn background_subtraction() {
        let pts = vec![Point3::new(0.0, 0.0, 1.0), Point3::new(5.0, 0.0, 1.0)];
        assert_eq!(subtract_background(&pts, &BackgroundModel::default()), pts);
        let wall = Aabb { min: Point3::new(-1.0, -1.0, 0.0), max: Point3::new(1.0, 1.0, 3.0) };
        let bg = BackgroundModel::new(vec![wall]).unwrap();
        assert_eq!(subtract_background(&pts[..1], &bg), vec![]);
        assert_eq!(subtract_background(&pts, &bg), vec![pts[1]]);
    }

    #[test]
    fn background_subtraction_matches_per_point_containment() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let boxes: Vec<Aabb> = (0..3)
            .map(|_| {
                let x = rng.random_range(-2.0..2.0);
                let y = rng.random_range(-2.0..2.0);
                Aabb { min: Point3::new(x, y, 0.0), max: Point3::new(x + 1.0, y + 0.5, 2.0) }
            })
            .collect();
        let bg = BackgroundModel::new(boxes.clone()).unwrap();
        let pts: Vec<Point3> = (0..400)
            .map(|_| {
                Point3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(0.0..2.5))
            })
            .collect();
        let expected: Vec<Point3> = pts
            .iter()
            .filter(|p| {
                !boxes.iter().any(|b| {
                    (b.min.x..=b.max.x).contains(&p.x)
                        && (b.min.y..=b.max.y).contains(&p.y)
                        && (b.min.z..=b.max.z).contains(&p.z)
                })
            })
            .copied()
            .collect();
        assert_eq!(subtract_background(&pts, &bg), expected);
    }

    #[test]
    fn background_file_round_trip() {
        let bg = BackgroundModel::new(vec![Aabb {
            min: Point3::new(-1.0, 1.0, 0.0),
            max: Point3::new(7.0, 1.5, 3.0),
        }])
        .unwrap();
        let mut bytes = Vec::new();
        bg.write(&mut bytes).unwrap();
        assert_eq!(BackgroundModel::read(bytes.as_slice()).unwrap(), bg);
    }

    #[test]
    fn cutoff_band() {
        let cfg = DetectionConfig::default();
        let kept = height_cutoff(
            &[Point3::new(0.0, 0.0, 1.7), Point3::new(0.0, 0.0, 1.4), Point3::new(0.0, 0.0, 2.2)],
            &cfg,
        );
        assert_eq!(kept, vec![Point3::new(0.0, 0.0, 1.7)]);
    }

    #[test]
    fn two_separated_blobs_give_two_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut pts = blob(&mut rng, 0.0, 0.0, 0.2, 150);
        pts.extend(blob(&mut rng, 2.0, 0.0, 0.2, 150));
        let cfg = DetectionConfig::default();
        assert_eq!(complete_linkage_cluster(&pts, &cfg, 1).len(), 2);
        assert_eq!(complete_linkage_cluster(&pts[..150], &cfg, 1).len(), 1);
    }

    #[test]
    fn twelve_points_three_groups_match_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut pts = Vec::new();
        for c in [(0.0, 0.0), (1.5, 0.3), (0.2, 1.8)] {
            pts.extend(blob(&mut rng, c.0, c.1, 0.25, 4));
        }
        let cfg = DetectionConfig::default();
        let fast = complete_linkage_cluster(&pts, &cfg, 0);
        assert_eq!(fast, naive_complete_linkage(&pts, cfg.linkage_threshold));
        assert_eq!(fast.len(), 3);
    }

    #[test]
    fn sampling_caps_cluster_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts = blob(&mut rng, 0.0, 0.0, 0.2, 2000);
        let cfg = DetectionConfig::default();
        let clusters = complete_linkage_cluster(&pts, &cfg, 3);
        assert_eq!(clusters.iter().map(Vec::len).sum::<usize>(), 500);
        assert_eq!(clusters, complete_linkage_cluster(&pts, &cfg, 3));
    }

    #[test]
    fn assignment_joins_near_points_and_drops_far_ones() {
        let cfg = DetectionConfig { min_cluster_points: 1, ..Default::default() };
        let pts = vec![
            Point3::new(0.0, 0.0, 1.7),
            Point3::new(0.1, 0.0, 1.7),
            Point3::new(0.05, 0.05, 1.6), // unsampled, 5 cm away
            Point3::new(2.0, 2.0, 1.7),   // far from everything
        ];
        let groups = assign_and_cleanup(&pts, &[vec![0, 1]], &cfg);
        assert_eq!(groups, vec![vec![0, 1, 2]]);
    }

    #[test]
    fn small_noise_cluster_removed() {
        let cfg = DetectionConfig { min_cluster_points: 20, ..Default::default() };
        let pts = vec![Point3::new(0.0, 0.0, 1.7); 3];
        assert!(assign_and_cleanup(&pts, &[vec![0, 1, 2]], &cfg).is_empty());
    }

    #[test]
    fn representative_is_nearest_rank_95th() {
        let pts: Vec<Point3> = (0..20).map(|k| Point3::new(k as f64, 0.0, 1.5 + 0.01 * k as f64)).collect();
        let d = cluster_representative(&pts, 1.0, 2).unwrap();
        assert_eq!(d.position, pts[18]);
        let single = [Point3::new(1.0, 2.0, 1.8)];
        assert_eq!(cluster_representative(&single, 0.0, 0).unwrap().position, single[0]);
        assert!(cluster_representative(&[], 0.0, 0).is_err());
    }

    #[test]
    fn representative_with_ties_matches_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let pts: Vec<Point3> = (0..100)
            .map(|k| Point3::new(k as f64, 0.0, 1.5 + 0.05 * rng.random_range(0..8) as f64))
            .collect();
        let d = cluster_representative(&pts, 0.0, 0).unwrap();
        let mut heights: Vec<f64> = pts.iter().map(|p| p.z).collect();
        heights.sort_by(f64::total_cmp);
        // ceil(0.95 * 100) = 95th value in ascending order
        assert_eq!(d.position.z, heights[94]);
    }

    #[test]
    fn empty_frame_has_no_detections() {
        let cfg = DetectionConfig::default();
        assert!(detect_frame(&[], &BackgroundModel::default(), &cfg, 0, 0.0, 1).is_empty());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn nn_chain_matches_naive(n in 1usize..40, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<Point3> = (0..n).map(|_| Point3::new(
                rng.random_range(0.0..2.0), rng.random_range(0.0..2.0), rng.random_range(1.5..2.0),
            )).collect();
            prop_assert_eq!(cut_complete_linkage(&pts, 0.6), naive_complete_linkage(&pts, 0.6));
        }

        #[test]
        fn detect_is_permutation_invariant_and_in_band(seed in any::<u64>(), shuffle in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut pts = Vec::new();
            for k in 0..3 {
                let cy = rng.random_range(-0.5..0.5);
                pts.extend(blob(&mut rng, 1.2 * k as f64, cy, 0.2, 120));
            }
            pts.extend((0..50).map(|_| Point3::new(
                rng.random_range(-1.0..4.0), rng.random_range(-1.0..1.0), rng.random_range(0.5..2.5),
            )));
            let cfg = DetectionConfig { sample_size: 200, ..Default::default() };
            let bg = BackgroundModel::default();
            let a = detect_frame(&pts, &bg, &cfg, 5, 0.0, 1);
            let mut shuffled = pts.clone();
            use rand::seq::SliceRandom;
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle));
            let b = detect_frame(&shuffled, &bg, &cfg, 5, 0.0, 1);
            prop_assert_eq!(&a, &b);
            for d in &a {
                prop_assert!(d.position.z >= cfg.cutoff_low && d.position.z <= cfg.cutoff_high);
            }
            for i in 0..a.len() {
                for j in (i + 1)..a.len() {
                    prop_assert!(a[i].position.horizontal_distance(&a[j].position) >= cfg.linkage_threshold / 2.0);
                }
            }
        }
    }
}
