use std::path::Path;

use crowdcal_tracking::metrics::{evaluate as evaluate_sets, EvalReport, DEFAULT_MAX_MATCH_DISTANCE};

use crate::config::Config;
use crate::error::{input, Result};
use crate::run::{read_trajectory_file, Run};

/// Largest Fréchet distance of a matched pair.
pub fn settings(c: &Config) -> Result<f64> {
    let max_dist = c.f64("evaluate.max_match_distance", DEFAULT_MAX_MATCH_DISTANCE)?;
    if max_dist <= 0.0 {
        return input("evaluate.max_match_distance must be positive");
    }
    Ok(max_dist)
}

pub fn evaluate(run: &Run, auto: &Path, truth: &Path) -> Result<EvalReport> {
    let max_dist = settings(&run.config)?;
    run.check_config()?;
    let auto_set = read_trajectory_file(auto)?;
    let truth_set = read_trajectory_file(truth)?;
    if truth_set.is_empty() {
        return input(format!("{}: no ground-truth trajectories", truth.display()));
    }
    let report = evaluate_sets(&auto_set, &truth_set, max_dist)?;
    if report.pairs.is_empty() {
        run.warn("no trajectory matched the ground truth; MOTP undefined");
    }
    let mut body = Vec::new();
    report.write_to(&mut body)?;
    run.write_text("eval_report.txt", std::str::from_utf8(&body).expect("UTF-8"))?;
    println!(
        "PDR {:.2}% ({} TP, {} FN, {} FP), MOTP {:.1} mm",
        report.pdr * 100.0,
        report.true_positives,
        report.false_negatives,
        report.false_positives,
        report.motp * 1000.0
    );
    Ok(report)
}
