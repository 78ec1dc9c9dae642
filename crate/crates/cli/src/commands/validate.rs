use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crowdcal_core::TrajectorySet;
use crowdcal_sim::calibration::{replay_all, FitResult, ObjectiveConfig};
use crowdcal_sim::socialforce::Obstacle;
use crowdcal_sim::stats::{ks_two_sample, Gate, walking_time_cdf, KsResult, WalkingTimeCdf, KS_SMALL_SAMPLE};

use crate::error::{input, CliError, Result};
use crate::run::{io_err, Run};
use crate::config::Config;

use super::replay::prepare;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelVerdict {
    pub label: String,
    pub simulated: WalkingTimeCdf,
    pub replay_failures: usize,
    /// `None` when either sample is empty.
    pub ks: Option<KsResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Validation {
    pub measured: WalkingTimeCdf,
    pub models: Vec<ModelVerdict>,
    pub alpha: f64,
}

pub struct ValidateSettings {
    pub objective: ObjectiveConfig,
    pub obstacles: Vec<Obstacle>,
    pub gates: (Gate, Gate),
    /// Replay the validation split only, or every trajectory.
    pub all: bool,
    pub alpha: f64,
}

pub fn settings(c: &Config) -> Result<ValidateSettings> {
    let objective = crate::settings::objective(c)?;
    let obstacles = crate::settings::obstacles(c)?;
    let subset: String = c.get("validate.subset", "validation".to_string())?;
    let alpha = c.f64("validate.alpha", 0.05)?;
    let gates = crate::settings::gates(c)?;
    let all = match subset.as_str() {
        "validation" => false,
        "all" => true,
        other => return input(format!("validate.subset must be validation or all, got {other:?}")),
    };
    if !(alpha > 0.0 && alpha < 1.0) {
        return input("validate.alpha must lie in (0, 1)");
    }
    Ok(ValidateSettings { objective, obstacles, gates, all, alpha })
}

pub fn validate(run: &Run, path: &Path, fit_files: &[PathBuf]) -> Result<Validation> {
    let ValidateSettings { objective, obstacles, gates, all, alpha } = settings(&run.config)?;
    run.check_config()?;
    if fit_files.is_empty() {
        return input("validate needs at least one --fit file");
    }
    let fits = fit_files.iter().map(|p| read_fit(p)).collect::<Result<Vec<_>>>()?;

    let prepared = prepare(run, path, &objective, &obstacles)?;
    let tasks = if all {
        prepared.calibration.into_iter().chain(prepared.validation).collect()
    } else {
        prepared.validation
    };
    if tasks.is_empty() {
        return input("no replayable trajectory in the selected subset");
    }
    let rate = prepared.set.frame_rate();
    let subjects = TrajectorySet::new(tasks.iter().map(|t| t.subject().clone()).collect(), rate)?;
    let measured = walking_time_cdf(&subjects, &gates);
    report_gate_misses(run, "measured", &measured);
    run.write_text("cdf_measured.csv", &measured.table())?;

    let mut labels: Vec<String> = Vec::new();
    let mut models = Vec::new();
    for fit in &fits {
        let label = unique_label(&labels, &fit.variant.to_string());
        labels.push(label.clone());
        let (replays, failures) = replay_all(&tasks, &fit.params, fit.relaxation_time);
        for (id, why) in &failures {
            run.warn(format!("model {label}: replay of {id} failed: {why}"));
        }
        let simulated = walking_time_cdf(&TrajectorySet::new(replays, rate)?, &gates);
        report_gate_misses(run, &format!("model {label}"), &simulated);
        let ks = if simulated.is_empty() || measured.is_empty() {
            None
        } else {
            Some(ks_two_sample(&simulated.times, &measured.times)?)
        };
        if ks.is_some_and(|k| k.small_sample) {
            run.warn(format!(
                "model {label}: fewer than {KS_SMALL_SAMPLE} walking times, the KS p-value is approximate"
            ));
        }
        run.write_text(&format!("cdf_{label}.csv"), &simulated.table())?;
        models.push(ModelVerdict { label, simulated, replay_failures: failures.len(), ks });
    }

    let v = Validation { measured, models, alpha };
    run.write_text("ks.csv", &ks_table(&v))?;
    for m in &v.models {
        match m.ks {
            Some(k) => println!(
                "model {}: D {:.4}, p {:.4} -> {}",
                m.label,
                k.statistic,
                k.p_value,
                verdict(&k, alpha)
            ),
            None => println!("model {}: no walking times to compare", m.label),
        }
    }
    Ok(v)
}

fn read_fit(path: &Path) -> Result<FitResult> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    FitResult::parse(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn unique_label(taken: &[String], base: &str) -> String {
    if !taken.iter().any(|t| t == base) {
        return base.to_string();
    }
    (2..).map(|k| format!("{base}_{k}")).find(|l| !taken.contains(l)).expect("unbounded range")
}

fn report_gate_misses(run: &Run, what: &str, cdf: &WalkingTimeCdf) {
    if cdf.is_empty() {
        run.warn(format!("{what}: no trajectory crosses both gates"));
    } else if cdf.excluded > 0 {
        log::info!("{what}: {} trajectories miss a gate", cdf.excluded);
    }
}

fn verdict(k: &KsResult, alpha: f64) -> &'static str {
    if k.rejects(alpha) {
        "reject"
    } else {
        "fail_to_reject"
    }
}

pub fn ks_table(v: &Validation) -> String {
    let mut s = String::from(
        "model,n_simulated,n_measured,gate_misses_simulated,gate_misses_measured,replay_failures,D,p_value,alpha,verdict,small_sample\n",
    );
    for m in &v.models {
        let (d, p, verdict, small) = match &m.ks {
            Some(k) => (
                format!("{:.6}", k.statistic),
                format!("{:.6}", k.p_value),
                verdict(k, v.alpha),
                k.small_sample.to_string(),
            ),
            None => ("nan".into(), "nan".into(), "not_tested", "true".into()),
        };
        writeln!(
            s,
            "{},{},{},{},{},{},{d},{p},{},{verdict},{small}",
            m.label,
            m.simulated.times.len(),
            v.measured.times.len(),
            m.simulated.excluded,
            v.measured.excluded,
            m.replay_failures,
            v.alpha
        )
        .unwrap();
    }
    s
}
