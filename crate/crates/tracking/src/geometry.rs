//! Depth-image back-projection and rigid sensor-to-world calibration.

use std::io::{BufRead, Read, Write};

use crowdcal_core::Point3;
use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::{Result, TrackingError};

/// Pinhole model of a depth sensor. The principal point is the image center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub focal_length_px: f64,
    pub width: usize,
    pub height: usize,
    /// Far limit of reliable depth, meters.
    pub depth_range_max: f64,
    /// Near limit; closer returns are treated as invalid.
    pub depth_range_min: f64,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self {
            focal_length_px: 580.0,
            width: 640,
            height: 480,
            depth_range_max: 4.0,
            depth_range_min: 0.4,
        }
    }
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<()> {
        if !(self.focal_length_px > 0.0) || !(self.depth_range_max > 0.0) {
            return Err(TrackingError::Config(
                "focal length and depth range must be positive".into(),
            ));
        }
        if self.width == 0 || self.height == 0 {
            return Err(TrackingError::Config("image must have non-zero size".into()));
        }
        if !(self.depth_range_min >= 0.0 && self.depth_range_min < self.depth_range_max) {
            return Err(TrackingError::Config("near limit must lie below far limit".into()));
        }
        Ok(())
    }

    /// Principal point `(cx, cy)` in pixels.
    pub fn principal_point(&self) -> (f64, f64) {
        ((self.width / 2) as f64, (self.height / 2) as f64)
    }

    pub fn is_valid_depth(&self, z: f64) -> bool {
        z > 0.0 && z >= self.depth_range_min && z <= self.depth_range_max
    }

    /// Camera-frame point for pixel `(u, v)` at depth `z`.
    pub fn unproject(&self, u: f64, v: f64, z: f64) -> Point3 {
        let (cx, cy) = self.principal_point();
        Point3::new((u - cx) * z / self.focal_length_px, (v - cy) * z / self.focal_length_px, z)
    }

    /// Pixel coordinates of a camera-frame point in front of the sensor.
    pub fn project(&self, p: &Point3) -> Option<(f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        let (cx, cy) = self.principal_point();
        Some((cx + self.focal_length_px * p.x / p.z, cy + self.focal_length_px * p.y / p.z))
    }
}

/// One depth image. Invalid samples hold `0.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthFrame {
    pub sensor_id: u32,
    pub t: f64,
    pub width: usize,
    pub height: usize,
    /// Row-major depths in meters.
    pub depth: Vec<f32>,
}

const FRAME_MAGIC: &[u8; 4] = b"DPF1";

impl DepthFrame {
    /// An all-invalid frame.
    pub fn blank(sensor_id: u32, t: f64, width: usize, height: usize) -> Self {
        Self { sensor_id, t, width, height, depth: vec![0.0; width * height] }
    }

    pub fn at(&self, u: usize, v: usize) -> f32 {
        self.depth[v * self.width + u]
    }

    pub fn valid_count(&self) -> usize {
        self.depth.iter().filter(|&&d| d > 0.0).count()
    }

    /// Little-endian binary: magic, sensor id (u32), t (f64), width (u32),
    /// height (u32), then `width * height` f32 depths.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let mut buf = Vec::with_capacity(24 + 4 * self.depth.len());
        buf.extend_from_slice(FRAME_MAGIC);
        buf.extend_from_slice(&self.sensor_id.to_le_bytes());
        buf.extend_from_slice(&self.t.to_le_bytes());
        buf.extend_from_slice(&(self.width as u32).to_le_bytes());
        buf.extend_from_slice(&(self.height as u32).to_le_bytes());
        for d in &self.depth {
            buf.extend_from_slice(&d.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut head = [0u8; 24];
        r.read_exact(&mut head)
            .map_err(|e| TrackingError::Format(format!("truncated header: {e}")))?;
        if &head[0..4] != FRAME_MAGIC {
            return Err(TrackingError::Format("bad magic".into()));
        }
        let sensor_id = u32::from_le_bytes(head[4..8].try_into().unwrap());
        let t = f64::from_le_bytes(head[8..16].try_into().unwrap());
        let width = u32::from_le_bytes(head[16..20].try_into().unwrap()) as usize;
        let height = u32::from_le_bytes(head[20..24].try_into().unwrap()) as usize;
        let n = width
            .checked_mul(height)
            .filter(|&n| n <= 1 << 26)
            .ok_or_else(|| TrackingError::Format("implausible frame size".into()))?;
        let mut body = vec![0u8; 4 * n];
        r.read_exact(&mut body)
            .map_err(|e| TrackingError::Format(format!("truncated depth data: {e}")))?;
        let depth = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if !t.is_finite() {
            return Err(TrackingError::Format("non-finite timestamp".into()));
        }
        Ok(Self { sensor_id, t, width, height, depth })
    }
}

/// Back-project every valid pixel into camera coordinates, in row-major
/// pixel order.
pub fn back_project(frame: &DepthFrame, intrinsics: &CameraIntrinsics) -> Result<Vec<Point3>> {
    if frame.width != intrinsics.width
        || frame.height != intrinsics.height
        || frame.depth.len() != frame.width * frame.height
    {
        return Err(TrackingError::DimensionMismatch {
            got_w: frame.width,
            got_h: frame.height,
            want_w: intrinsics.width,
            want_h: intrinsics.height,
        });
    }
    let mut out = Vec::new();
    for (idx, &d) in frame.depth.iter().enumerate() {
        let z = d as f64;
        if intrinsics.is_valid_depth(z) {
            let (u, v) = (idx % frame.width, idx / frame.width);
            out.push(intrinsics.unproject(u as f64, v as f64, z));
        }
    }
    Ok(out)
}

/// Rotation plus translation taking sensor coordinates to world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    /// Rejects rotations that are not orthonormal with determinant +1 (1e-9).
    pub fn new(rotation: Matrix3<f64>, translation: Point3) -> Result<Self> {
        let err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        let det = rotation.determinant();
        if !(err <= 1e-9) || !((det - 1.0).abs() <= 1e-9) || !translation.is_finite() {
            return Err(TrackingError::Config(format!(
                "not a proper rotation (orthogonality error {err:e}, det {det})"
            )));
        }
        Ok(Self { rotation, translation: to_vec(&translation) })
    }

    pub fn from_translation(t: Point3) -> Self {
        Self { rotation: Matrix3::identity(), translation: to_vec(&t) }
    }

    /// Rotation of `angle` radians about the unit `axis`, then translation.
    pub fn from_axis_angle(axis: Point3, angle: f64, translation: Point3) -> Self {
        let axis = nalgebra::Unit::new_normalize(to_vec(&axis));
        let rotation = *nalgebra::Rotation3::from_axis_angle(&axis, angle).matrix();
        Self { rotation, translation: to_vec(&translation) }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> Point3 {
        to_point(&self.translation)
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        to_point(&(self.rotation * to_vec(p) + self.translation))
    }

    /// Rotate without translating (directions).
    pub fn rotate(&self, p: &Point3) -> Point3 {
        to_point(&(self.rotation * to_vec(p)))
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self { rotation: rt, translation: -(rt * self.translation) }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Angle of the relative rotation between two transforms, radians.
    pub fn rotation_angle_to(&self, other: &RigidTransform) -> f64 {
        let rel = self.rotation.transpose() * other.rotation;
        // acos is ill-conditioned near 0; use the skew part as well.
        let cos = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        let skew = Vector3::new(rel[(2, 1)] - rel[(1, 2)], rel[(0, 2)] - rel[(2, 0)], rel[(1, 0)] - rel[(0, 1)]);
        (skew.norm() / 2.0).atan2(cos)
    }

    /// Row-major rotation entries followed by the translation.
    pub fn to_array(&self) -> [f64; 12] {
        let r = &self.rotation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)],
            r[(1, 0)], r[(1, 1)], r[(1, 2)],
            r[(2, 0)], r[(2, 1)], r[(2, 2)],
            self.translation.x, self.translation.y, self.translation.z,
        ]
    }

    pub fn from_array(v: &[f64; 12]) -> Result<Self> {
        let rotation = Matrix3::new(v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]);
        Self::new(rotation, Point3::new(v[9], v[10], v[11]))
    }
}

/// Apply `tf` to `p`: `R p + t`.
pub fn apply_transform(tf: &RigidTransform, p: &Point3) -> Point3 {
    tf.apply(p)
}

/// A reference point seen in the world frame and in one sensor's frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMatch {
    pub world: Point3,
    pub camera: Point3,
}

/// Least-squares rigid transform mapping camera points onto world points
/// (orthogonal Procrustes with reflection correction).
pub fn estimate_rigid_transform(matches: &[PointMatch]) -> Result<RigidTransform> {
    if matches.len() < 3 {
        return Err(TrackingError::Rank(format!("got {} matches", matches.len())));
    }
    if matches.iter().any(|m| !m.world.is_finite() || !m.camera.is_finite()) {
        return Err(TrackingError::Rank("non-finite match coordinates".into()));
    }
    let n = matches.len() as f64;
    let cam_mean = matches.iter().fold(Vector3::zeros(), |acc, m| acc + to_vec(&m.camera)) / n;
    let world_mean = matches.iter().fold(Vector3::zeros(), |acc, m| acc + to_vec(&m.world)) / n;

    let mut cross = Matrix3::zeros();
    let mut spread = Matrix3::zeros();
    for m in matches {
        let c = to_vec(&m.camera) - cam_mean;
        let w = to_vec(&m.world) - world_mean;
        cross += c * w.transpose();
        spread += c * c.transpose();
    }

    let mut eig = SymmetricEigen::new(spread).eigenvalues.as_slice().to_vec();
    eig.sort_by(|a, b| b.total_cmp(a));
    if !(eig[0] > 1e-18) || eig[1] <= 1e-10 * eig[0] {
        return Err(TrackingError::Rank("camera points are collinear or coincident".into()));
    }

    let svd = cross.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(TrackingError::Rank("SVD did not converge".into())),
    };
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let rotation = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    let translation = world_mean - rotation * cam_mean;
    Ok(RigidTransform { rotation, translation })
}

/// Root-mean-square distance between world points and transformed camera points.
pub fn calibration_rmse(tf: &RigidTransform, matches: &[PointMatch]) -> Result<f64> {
    if matches.is_empty() {
        return Err(TrackingError::Empty("no point matches"));
    }
    let sum: f64 = matches
        .iter()
        .map(|m| {
            let r = m.world - tf.apply(&m.camera);
            r.x * r.x + r.y * r.y + r.z * r.z
        })
        .sum();
    Ok((sum / matches.len() as f64).sqrt())
}

/// A calibrated sensor: intrinsics plus its camera-to-world pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorView {
    pub sensor_id: u32,
    pub intrinsics: CameraIntrinsics,
    pub pose: RigidTransform,
}

impl SensorView {
    /// World position of the optical center.
    pub fn origin(&self) -> Point3 {
        self.pose.translation()
    }

    pub fn project_world(&self, p: &Point3) -> Option<(f64, f64)> {
        self.intrinsics.project(&self.pose.inverse().apply(p))
    }

    /// Whether `p` projects at least `margin_px` pixels inside the image border.
    pub fn sees(&self, p: &Point3, margin_px: f64) -> bool {
        match self.project_world(p) {
            Some((u, v)) => {
                let w = self.intrinsics.width as f64 - 1.0;
                let h = self.intrinsics.height as f64 - 1.0;
                u >= margin_px && u <= w - margin_px && v >= margin_px && v <= h - margin_px
            }
            None => false,
        }
    }

    /// Back-project a frame and map the points into world coordinates.
    pub fn world_points(&self, frame: &DepthFrame) -> Result<Vec<Point3>> {
        let mut pts = back_project(frame, &self.intrinsics)?;
        for p in &mut pts {
            *p = self.pose.apply(p);
        }
        Ok(pts)
    }
}

/// Sensor calibration file: one line per sensor,
/// `sensor_id r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz`.
pub fn write_calibration<W: Write>(mut w: W, poses: &[(u32, RigidTransform)]) -> Result<()> {
    let mut s = String::from("# sensor_id r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz\n");
    for (id, tf) in poses {
        s.push_str(&id.to_string());
        for v in tf.to_array() {
            s.push(' ');
            s.push_str(&v.to_string());
        }
        s.push('\n');
    }
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub fn read_calibration<R: BufRead>(r: R) -> Result<Vec<(u32, RigidTransform)>> {
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields = parse_fields(line, 13, lineno + 1)?;
        let id = fields[0] as u32;
        let arr: [f64; 12] = fields[1..].try_into().unwrap();
        out.push((id, RigidTransform::from_array(&arr)?));
    }
    Ok(out)
}

/// Point-match file: one line per match,
/// `sensor_id x_w y_w z_w x_c y_c z_c`.
pub fn read_matches<R: BufRead>(r: R) -> Result<Vec<(u32, PointMatch)>> {
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f = parse_fields(line, 7, lineno + 1)?;
        out.push((
            f[0] as u32,
            PointMatch {
                world: Point3::new(f[1], f[2], f[3]),
                camera: Point3::new(f[4], f[5], f[6]),
            },
        ));
    }
    Ok(out)
}

pub fn write_matches<W: Write>(mut w: W, matches: &[(u32, PointMatch)]) -> Result<()> {
    let mut s = String::from("# sensor_id x_w y_w z_w x_c y_c z_c\n");
    for (id, m) in matches {
        s.push_str(&format!(
            "{id} {} {} {} {} {} {}\n",
            m.world.x, m.world.y, m.world.z, m.camera.x, m.camera.y, m.camera.z
        ));
    }
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn parse_fields(line: &str, expected: usize, lineno: usize) -> Result<Vec<f64>> {
    let fields = line
        .split_whitespace()
        .map(|s| s.parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| TrackingError::Format(format!("line {lineno}: {e}")))?;
    if fields.len() != expected {
        return Err(TrackingError::Format(format!(
            "line {lineno}: expected {expected} fields, found {}",
            fields.len()
        )));
    }
    if fields[0] < 0.0 || fields[0].fract() != 0.0 {
        return Err(TrackingError::Format(format!("line {lineno}: bad sensor id")));
    }
    Ok(fields)
}

fn to_vec(p: &Point3) -> Vector3<f64> {
    Vector3::new(p.x, p.y, p.z)
}

fn to_point(v: &Vector3<f64>) -> Point3 {
    Point3::new(v.x, v.y, v.z)
}
