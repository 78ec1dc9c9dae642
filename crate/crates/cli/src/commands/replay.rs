//! Split and replay-task preparation shared by `fit` and `validate`.

use std::path::Path;

use crowdcal_core::TrajectorySet;
use crowdcal_sim::calibration::{build_tasks, split_dataset, ObjectiveConfig, ReplayTask};
use crowdcal_sim::socialforce::Obstacle;

use crate::error::{input, Result};
use crate::run::{read_trajectory_file, Run};

pub const SPLIT_STAGE: &str = "split";

pub struct Prepared {
    pub set: TrajectorySet,
    pub calibration: Vec<ReplayTask>,
    pub validation: Vec<ReplayTask>,
}

/// Reads the trajectories, splits them with the run's split seed and
/// builds replay tasks for both parts; every recorded trajectory is a
/// co-pedestrian.
pub fn prepare(run: &Run, path: &Path, objective: &ObjectiveConfig, obstacles: &[Obstacle]) -> Result<Prepared> {
    let set = read_trajectory_file(path)?;
    if set.len() < 2 {
        return input(format!("{}: need at least two trajectories, found {}", path.display(), set.len()));
    }
    let (cal, val) = split_dataset(&set, objective.split_ratio, run.stage_seed(SPLIT_STAGE))?;
    let (calibration, rej_cal) = build_tasks(&cal, &set, obstacles, objective)?;
    let (validation, rej_val) = build_tasks(&val, &set, obstacles, objective)?;
    for (id, why) in rej_cal.iter().chain(&rej_val) {
        log::info!("not replayed: {id}: {why}");
    }
    let rejected = rej_cal.len() + rej_val.len();
    if rejected > 0 {
        log::info!("{rejected} of {} trajectories are not replayed (standing or unusable)", set.len());
    }
    Ok(Prepared { set, calibration, validation })
}
