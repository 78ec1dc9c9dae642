use std::fmt::Write as _;
use std::path::Path;

use crowdcal_core::TrajectoryId;
use crowdcal_tracking::metrics::stitch_tpr;
use crowdcal_tracking::stitching::{iterative_stitch, StitchConfig, StitchReport};

use crate::error::{input, Result};
use crate::run::{io_err, read_trajectory_file, Run};
use crate::config::Config;

#[derive(Debug, Clone, PartialEq)]
pub struct StitchSummary {
    pub trajectories: usize,
    pub accepted: usize,
    pub tpr: Option<f64>,
}

pub fn settings(c: &Config) -> Result<StitchConfig> {
    let cfg = crate::settings::stitch(c)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Stitches the files left to right: the first with the second, the result
/// with the third, and so on.
pub fn stitch(run: &Run, files: &[impl AsRef<Path>], truth_pairs: Option<&Path>) -> Result<StitchSummary> {
    let cfg = settings(&run.config)?;
    run.check_config()?;
    let Some((first, rest)) = files.split_first() else {
        return input("stitch needs at least one trajectory file");
    };
    let pairs = truth_pairs.map(read_pairs).transpose()?;

    let mut merged = read_trajectory_file(first.as_ref())?;
    let mut report = StitchReport::default();
    for f in rest {
        let next = read_trajectory_file(f.as_ref())?;
        let (joined, r) = iterative_stitch(&merged, &next, &cfg)?;
        merged = joined;
        report.records.extend(r.records);
    }
    if merged.is_empty() {
        run.warn("no trajectories to stitch");
    }

    run.write_trajectories("stitched.txt", &merged, &[("inputs", files.len().to_string())])?;
    let mut table = Vec::new();
    report.write_to(&mut table)?;
    run.write_text("stitch_report.csv", std::str::from_utf8(&table).expect("UTF-8"))?;

    let accepted = report.accepted().count();
    let tpr = match &pairs {
        Some(p) if p.is_empty() => {
            run.warn("truth pair file lists no pairs");
            None
        }
        Some(p) => Some(stitch_tpr(&report, p)?),
        None => None,
    };
    let mut summary = String::from("key,value\n");
    writeln!(summary, "trajectories,{}", merged.len()).unwrap();
    writeln!(summary, "proposed_pairs,{}", report.records.len()).unwrap();
    writeln!(summary, "accepted_pairs,{accepted}").unwrap();
    if let Some(t) = tpr {
        writeln!(summary, "tpr,{t:.6}").unwrap();
    }
    run.write_text("stitch_summary.csv", &summary)?;
    match tpr {
        Some(t) => println!("{} trajectories, {accepted} joins, TPR {:.2}%", merged.len(), t * 100.0),
        None => println!("{} trajectories, {accepted} joins", merged.len()),
    }
    Ok(StitchSummary { trajectories: merged.len(), accepted, tpr })
}

/// `id_a,id_b` per line; a header line and `#` comments are skipped.
fn read_pairs(path: &Path) -> Result<Vec<(TrajectoryId, TrajectoryId)>> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line == "id_a,id_b" {
            continue;
        }
        let Some((a, b)) = line.split_once(',') else {
            return input(format!("{} line {}: expected id_a,id_b", path.display(), idx + 1));
        };
        out.push((TrajectoryId::new(a.trim()), TrajectoryId::new(b.trim())));
    }
    Ok(out)
}
