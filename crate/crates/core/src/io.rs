//! Trajectory text format.
//!
//! ```text
//! # frame_rate = 30
//! # any_other_key = value
//! trajectory_id,t_seconds,x_m,y_m,z_m
//! s1-0,0.0333,1.25,-0.4,1.71
//! ```
//!
//! Lines starting with `#` carry `key = value` metadata and are otherwise
//! ignored. The header line is mandatory. Records of one trajectory need not
//! be contiguous but must be time ordered.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::{CoreError, Point3, Result, Trajectory, TrajectoryId, TrajectoryPoint, TrajectorySet};

pub const HEADER: &str = "trajectory_id,t_seconds,x_m,y_m,z_m";

/// `key = value` pairs written as comment lines ahead of the header.
pub type Metadata = BTreeMap<String, String>;

pub fn write_trajectories<W: Write>(
    mut out: W,
    set: &TrajectorySet,
    metadata: &Metadata,
) -> Result<()> {
    let mut buf = String::new();
    writeln!(buf, "# frame_rate = {}", set.frame_rate()).unwrap();
    for (k, v) in metadata {
        if k != "frame_rate" {
            writeln!(buf, "# {k} = {v}").unwrap();
        }
    }
    buf.push_str(HEADER);
    buf.push('\n');
    for traj in set {
        for p in traj.points() {
            writeln!(
                buf,
                "{},{},{},{},{}",
                traj.id(),
                p.t,
                p.position.x,
                p.position.y,
                p.position.z
            )
            .unwrap();
        }
    }
    out.write_all(buf.as_bytes())?;
    Ok(())
}

/// Parse a trajectory file. A missing `frame_rate` entry falls back to the
/// 30 Hz sensor default.
pub fn read_trajectories<R: BufRead>(input: R) -> Result<(TrajectorySet, Metadata)> {
    let mut metadata = Metadata::new();
    let mut seen_header = false;
    let mut order: Vec<TrajectoryId> = Vec::new();
    let mut groups: BTreeMap<TrajectoryId, Vec<TrajectoryPoint>> = BTreeMap::new();

    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some((k, v)) = comment.split_once('=') {
                metadata.insert(k.trim().to_owned(), v.trim().to_owned());
            }
            continue;
        }
        if !seen_header {
            if trimmed != HEADER {
                return Err(CoreError::Parse {
                    line: lineno,
                    msg: format!("expected header {HEADER:?}"),
                });
            }
            seen_header = true;
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(CoreError::Parse {
                line: lineno,
                msg: format!("expected 5 fields, found {}", fields.len()),
            });
        }
        let num = |i: usize| -> Result<f64> {
            fields[i].parse::<f64>().map_err(|e| CoreError::Parse {
                line: lineno,
                msg: format!("field {}: {e}", i + 1),
            })
        };
        let point = TrajectoryPoint::new(num(1)?, Point3::new(num(2)?, num(3)?, num(4)?));
        let id = TrajectoryId::new(fields[0]);
        groups
            .entry(id.clone())
            .or_insert_with(|| {
                order.push(id);
                Vec::new()
            })
            .push(point);
    }
    if !seen_header {
        return Err(CoreError::Parse { line: 0, msg: "missing header line".into() });
    }

    let frame_rate = match metadata.get("frame_rate") {
        Some(v) => v.parse::<f64>().map_err(|e| CoreError::Parse {
            line: 0,
            msg: format!("frame_rate: {e}"),
        })?,
        None => crate::DEFAULT_FRAME_RATE,
    };
    let trajectories = order
        .into_iter()
        .map(|id| {
            let pts = groups.remove(&id).unwrap_or_default();
            Trajectory::new(id, pts)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((TrajectorySet::new(trajectories, frame_rate)?, metadata))
}
