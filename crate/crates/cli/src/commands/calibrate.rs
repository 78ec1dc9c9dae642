use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use crowdcal_tracking::geometry::{
    calibration_rmse, estimate_rigid_transform, read_matches, write_calibration, PointMatch, RigidTransform,
};

use crate::config::Config;
use crate::error::{input, CliError, Result};
use crate::run::{io_err, Run};

/// One row of the RMSE table.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorRow {
    pub sensor_id: u32,
    pub matches: usize,
    pub rmse: Option<f64>,
    pub status: String,
}

/// Sensors that must be present, and the fewest matches a fit accepts.
pub fn settings(c: &Config) -> Result<(Vec<u32>, usize)> {
    let expected = c.f64_list("calibrate.expected_sensors", &[])?;
    let min_matches: usize = c.get("calibrate.min_matches", 3)?;
    if expected.iter().any(|v| *v < 0.0 || v.fract() != 0.0) {
        return input("calibrate.expected_sensors must be sensor ids");
    }
    Ok((expected.iter().map(|v| *v as u32).collect(), min_matches.max(3)))
}

pub fn calibrate_sensors(run: &Run, matches_path: &Path) -> Result<Vec<SensorRow>> {
    let (expected, min_matches) = settings(&run.config)?;
    run.check_config()?;

    let file = File::open(matches_path).map_err(|e| io_err(matches_path, e))?;
    let matches = read_matches(BufReader::new(file))
        .map_err(|e| CliError::Input(format!("{}: {e}", matches_path.display())))?;
    let mut by_sensor: BTreeMap<u32, Vec<PointMatch>> = BTreeMap::new();
    for (id, m) in matches {
        by_sensor.entry(id).or_default().push(m);
    }
    if by_sensor.is_empty() && expected.is_empty() {
        run.warn(format!("{}: no matches", matches_path.display()));
    }
    for id in &expected {
        by_sensor.entry(*id).or_default();
    }

    let mut poses: Vec<(u32, RigidTransform)> = Vec::new();
    let mut rows = Vec::new();
    for (&id, ms) in &by_sensor {
        let row = |rmse, status: &str| SensorRow { sensor_id: id, matches: ms.len(), rmse, status: status.into() };
        if ms.is_empty() {
            run.warn(format!("sensor {id}: no matches in {}", matches_path.display()));
            rows.push(row(None, "missing"));
            continue;
        }
        if ms.len() < min_matches {
            run.warn(format!("sensor {id}: only {} matches, need {min_matches}", ms.len()));
            rows.push(row(None, "too_few_matches"));
            continue;
        }
        let fitted = estimate_rigid_transform(ms).and_then(|tf| Ok((calibration_rmse(&tf, ms)?, tf)));
        match fitted {
            Ok((rmse, tf)) => {
                poses.push((id, tf));
                rows.push(row(Some(rmse), "ok"));
            }
            Err(e) => {
                run.warn(format!("sensor {id}: {e}"));
                rows.push(row(None, "degenerate"));
            }
        }
    }

    let mut cal = Vec::new();
    write_calibration(&mut cal, &poses)?;
    run.write_text("calibration.txt", &String::from_utf8(cal).expect("calibration text is UTF-8"))?;

    let mut table = String::from("sensor_id,matches,rmse_mm,status\n");
    for r in &rows {
        let rmse = r.rmse.map(|v| format!("{:.3}", v * 1000.0)).unwrap_or_else(|| "nan".into());
        writeln!(table, "{},{},{},{}", r.sensor_id, r.matches, rmse, r.status).unwrap();
    }
    run.write_text("calibration_rmse.csv", &table)?;
    for r in &rows {
        match r.rmse {
            Some(v) => println!("sensor {}: {} matches, RMSE {:.1} mm", r.sensor_id, r.matches, v * 1000.0),
            None => println!("sensor {}: {} ({} matches)", r.sensor_id, r.status, r.matches),
        }
    }
    Ok(rows)
}
