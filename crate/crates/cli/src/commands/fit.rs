use std::fmt::Write as _;
use std::path::Path;

use crowdcal_sim::calibration::{fit_model, FitConfig, FitResult, ObjectiveConfig};
use crowdcal_sim::socialforce::{Obstacle, Variant};

use crate::error::{input, Result};
use crate::run::Run;
use crate::config::Config;

use super::replay::prepare;

/// `A`, `B`, `C` or `all`.
pub fn parse_variants(s: &str) -> Result<Vec<Variant>> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(Variant::ALL.to_vec());
    }
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let v: Variant = part.parse()?;
        if !out.contains(&v) {
            out.push(v);
        }
    }
    if out.is_empty() {
        return input("no model variant given");
    }
    Ok(out)
}

pub struct FitSettings {
    pub objective: ObjectiveConfig,
    pub fit: FitConfig,
    pub obstacles: Vec<Obstacle>,
    /// Use at most this many calibration tasks; 0 means all.
    pub max_tasks: usize,
}

pub fn settings(c: &Config) -> Result<FitSettings> {
    Ok(FitSettings {
        objective: crate::settings::objective(c)?,
        fit: crate::settings::fit(c)?,
        obstacles: crate::settings::obstacles(c)?,
        max_tasks: c.get("fit.max_calibration_tasks", 0)?,
    })
}

pub fn fit(run: &Run, path: &Path, variants: &[Variant]) -> Result<Vec<FitResult>> {
    let FitSettings { objective, fit: fit_cfg, obstacles, max_tasks } = settings(&run.config)?;
    run.check_config()?;

    let mut prepared = prepare(run, path, &objective, &obstacles)?;
    if max_tasks > 0 && prepared.calibration.len() > max_tasks {
        prepared.calibration.truncate(max_tasks);
    }
    if prepared.calibration.is_empty() {
        return input(format!("{}: no trajectory in the calibration split can be replayed", path.display()));
    }
    if prepared.validation.is_empty() {
        run.warn("validation split has no replayable trajectory; s_val not reported");
    }
    log::info!(
        "{} calibration and {} validation tasks from {} trajectories",
        prepared.calibration.len(),
        prepared.validation.len(),
        prepared.set.len()
    );

    let mut results = Vec::new();
    for &v in variants {
        let seed = run.stage_seed(&format!("fit.{v}"));
        let r = fit_model(&prepared.calibration, &prepared.validation, v, &fit_cfg, &objective, seed)?;
        if let Some(w) = &r.warning {
            run.warn(format!("variant {v}: {w}"));
        }
        if !r.nm_converged {
            log::info!("variant {v}: Nelder-Mead stopped at its evaluation budget");
        }
        run.write_text(&format!("fit_{v}.txt"), &r.to_text())?;
        println!("variant {v}: {} s_cal {:.4}{}", params_text(&r), r.s_cal, s_val_text(&r));
        results.push(r);
    }
    if results.len() > 1 {
        run.write_text("model_comparison.csv", &comparison_table(&results))?;
    }
    Ok(results)
}

fn params_text(r: &FitResult) -> String {
    r.variant
        .parameter_names()
        .iter()
        .zip(r.params.repulsion.to_vec())
        .map(|(n, v)| format!("{n}={v:.4}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn s_val_text(r: &FitResult) -> String {
    r.s_val.map(|v| format!(", s_val {v:.4}")).unwrap_or_default()
}

/// One row per model: parameters, s_cal and s_val.
pub fn comparison_table(results: &[FitResult]) -> String {
    let mut s = String::from("model,parameters,relaxation_time,s_cal,s_val,n_cal,n_val\n");
    for r in results {
        let s_val = r.s_val.map(|v| format!("{v:.6}")).unwrap_or_else(|| "none".into());
        writeln!(
            s,
            "{},{},{},{:.6},{},{},{}",
            r.variant,
            params_text(r),
            r.relaxation_time,
            r.s_cal,
            s_val,
            r.n_cal,
            r.n_val
        )
        .unwrap();
    }
    s
}
