use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use crowdcal_tracking::detection::BackgroundModel;
use crowdcal_tracking::geometry::{read_calibration, CameraIntrinsics, DepthFrame, SensorView};
use crowdcal_tracking::pipeline::{detect_frames, track_detections, PipelineConfig};
use crowdcal_tracking::tracking::Frame;
use rayon::prelude::*;

use crate::error::{CliError, Result};
use crate::run::{io_err, Run};
use crate::config::Config;

pub const FRAME_EXTENSION: &str = "dpf";

/// Depth frames held in memory at once.
const FRAME_BATCH: usize = 64;

pub fn settings(c: &Config, seed: u64) -> Result<(CameraIntrinsics, PipelineConfig)> {
    let intrinsics = crate::settings::intrinsics(c)?;
    let pipeline = crate::settings::pipeline(c, seed)?;
    pipeline.detection.validate()?;
    Ok((intrinsics, pipeline))
}

/// Trajectory count per calibrated sensor.
pub fn track(run: &Run, frames_dir: &Path, background: &Path, calibration: &Path) -> Result<Vec<(u32, usize)>> {
    let (intrinsics, pipeline) = settings(&run.config, run.stage_seed("track"))?;
    run.check_config()?;

    let bg = BackgroundModel::read(BufReader::new(File::open(background).map_err(|e| io_err(background, e))?))
        .map_err(|e| CliError::Input(format!("{}: {e}", background.display())))?;
    let poses = read_calibration(BufReader::new(File::open(calibration).map_err(|e| io_err(calibration, e))?))
        .map_err(|e| CliError::Input(format!("{}: {e}", calibration.display())))?;
    if poses.is_empty() {
        run.warn(format!("{}: no calibrated sensors", calibration.display()));
    }

    let views: BTreeMap<u32, SensorView> =
        poses.iter().map(|&(id, pose)| (id, SensorView { sensor_id: id, intrinsics, pose })).collect();
    let mut uncalibrated = BTreeSet::new();
    let mut by_sensor: BTreeMap<u32, Vec<Frame>> = BTreeMap::new();
    // Frames are detected batch by batch so only detections stay in memory.
    for batch in frame_files(frames_dir)?.chunks(FRAME_BATCH) {
        let read: Vec<Result<DepthFrame>> = batch.par_iter().map(|p| read_frame(p)).collect();
        let mut pending: BTreeMap<u32, Vec<DepthFrame>> = BTreeMap::new();
        for (path, frame) in batch.iter().zip(read) {
            match frame {
                Ok(f) if f.width != intrinsics.width || f.height != intrinsics.height => run.warn(format!(
                    "skipping frame {}: {}x{} does not match the {}x{} camera",
                    path.display(),
                    f.width,
                    f.height,
                    intrinsics.width,
                    intrinsics.height
                )),
                Ok(f) if !views.contains_key(&f.sensor_id) => {
                    uncalibrated.insert(f.sensor_id);
                }
                Ok(f) => pending.entry(f.sensor_id).or_default().push(f),
                Err(e) => run.warn(format!("skipping corrupt frame {}: {e}", path.display())),
            }
        }
        for (id, frames) in pending {
            let detected = detect_frames(&frames, &views[&id], &bg, &pipeline)?;
            by_sensor.entry(id).or_default().extend(detected);
        }
    }
    for id in uncalibrated {
        run.warn(format!("frames of sensor {id} ignored: sensor not in calibration"));
    }

    let mut counts = Vec::new();
    for (id, view) in &views {
        let mut frames = by_sensor.remove(id).unwrap_or_default();
        frames.sort_by(|a, b| a.t.total_cmp(&b.t));
        let before = frames.len();
        frames.dedup_by(|b, a| a.t == b.t);
        if frames.len() < before {
            run.warn(format!("sensor {id}: dropped {} frames with repeated timestamps", before - frames.len()));
        }
        if frames.is_empty() {
            run.warn(format!("sensor {id}: no frames"));
        }
        let set = track_detections(&frames, view.sensor_id, &pipeline)?;
        run.write_trajectories(
            &format!("tracks_sensor{id}.txt"),
            &set,
            &[("sensor_id", id.to_string()), ("frames", frames.len().to_string())],
        )?;
        println!("sensor {id}: {} frames, {} trajectories", frames.len(), set.len());
        counts.push((*id, set.len()));
    }
    Ok(counts)
}

/// `*.dpf` files of `dir`, sorted by name.
fn frame_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    let mut out = Vec::new();
    for e in entries {
        let path = e.map_err(|e| io_err(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|x| x == FRAME_EXTENSION) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn read_frame(path: &Path) -> Result<DepthFrame> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    Ok(DepthFrame::read_from(BufReader::new(file))?)
}
