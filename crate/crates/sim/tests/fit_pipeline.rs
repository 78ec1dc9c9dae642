use std::collections::BTreeSet;

use crowdcal_core::{TrajectoryId, TrajectorySet};
use crowdcal_sim::calibration::{
    build_tasks, fit_model, replay_all, replay_simulate, similarity, split_dataset, FitConfig, FitResult,
    ObjectiveConfig, ReplayTask,
};
use crowdcal_sim::optimize::{GaConfig, NelderMeadConfig};
use crowdcal_sim::scenario::{generate, CorridorScenario, ScenarioData};
use crowdcal_sim::socialforce::{ModelParams, Repulsion, Variant};
use crowdcal_sim::stats::{ks_two_sample, walking_time_cdf};

fn scenario(duration: f64, seed: u64) -> ScenarioData {
    let cfg = CorridorScenario { duration, ..CorridorScenario::sparse_passing() };
    let params = ModelParams::new(Repulsion::Circular { a: 2.0, b: 0.3 });
    generate(&cfg, &params, seed).unwrap()
}

fn tasks(data: &ScenarioData) -> Vec<ReplayTask> {
    let (tasks, _) = build_tasks(&data.set, &data.set, &data.obstacles, &ObjectiveConfig::default()).unwrap();
    assert!(!tasks.is_empty());
    tasks
}

fn small_fit() -> FitConfig {
    FitConfig {
        ga: GaConfig { population: 16, generations: 8, ..GaConfig::default() },
        nelder_mead: NelderMeadConfig { max_evaluations: 60, ..NelderMeadConfig::default() },
        ..FitConfig::default()
    }
}

#[test]
fn fit_is_deterministic_per_seed() {
    let t = tasks(&scenario(500.0, 3));
    let obj = ObjectiveConfig::default();
    let a = fit_model(&t, &[], Variant::A, &small_fit(), &obj, 5).unwrap();
    let b = fit_model(&t, &[], Variant::A, &small_fit(), &obj, 5).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_text(), b.to_text());
}

#[test]
fn genetic_trace_never_increases() {
    let t = tasks(&scenario(500.0, 4));
    let r = fit_model(&t, &[], Variant::B, &small_fit(), &ObjectiveConfig::default(), 9).unwrap();
    assert_eq!(r.trace.len(), small_fit().ga.generations);
    for w in r.trace.windows(2) {
        assert!(w[1] <= w[0], "trace rose: {:?}", r.trace);
    }
    // Nelder-Mead starts from the genetic best and only accepts improvements.
    assert!(r.s_cal <= *r.trace.last().unwrap() + 1e-12);
}

#[test]
fn fit_does_no_worse_than_the_generating_model() {
    let data = scenario(600.0, 6);
    let t = tasks(&data);
    let obj = ObjectiveConfig::default();
    let truth = ModelParams::new(Repulsion::Circular { a: 2.0, b: 0.3 });
    let s_true = similarity(&t, &truth, obj.relaxation_time, obj.penalty).unwrap().value;
    let r = fit_model(&t, &[], Variant::A, &small_fit(), &obj, 1).unwrap();
    assert!(r.s_cal <= s_true * 1.05, "fitted {} vs generating {}", r.s_cal, s_true);
}

#[test]
fn validation_score_is_reported_on_held_out_tasks() {
    let data = scenario(500.0, 8);
    let obj = ObjectiveConfig::default();
    let (cal, val) = split_dataset(&data.set, obj.split_ratio, 2).unwrap();
    let (tc, _) = build_tasks(&cal, &data.set, &data.obstacles, &obj).unwrap();
    let (tv, _) = build_tasks(&val, &data.set, &data.obstacles, &obj).unwrap();
    let r = fit_model(&tc, &tv, Variant::A, &small_fit(), &obj, 3).unwrap();
    assert_eq!((r.n_cal, r.n_val), (tc.len(), tv.len()));
    let expect = similarity(&tv, &r.params, r.relaxation_time, obj.penalty).unwrap().value;
    assert_eq!(r.s_val, Some(expect));
}

#[test]
fn fit_result_survives_a_text_round_trip() {
    let t = tasks(&scenario(400.0, 2));
    let r = fit_model(&t, &[], Variant::C, &small_fit(), &ObjectiveConfig::default(), 4).unwrap();
    let back = FitResult::parse(&r.to_text()).unwrap();
    assert_eq!(back.variant, r.variant);
    assert_eq!(back.params.repulsion.to_vec(), r.params.repulsion.to_vec());
    assert_eq!(back.relaxation_time, r.relaxation_time);
    assert_eq!(back.s_cal, r.s_cal);
}

#[test]
fn replay_all_matches_single_replays() {
    let t = tasks(&scenario(400.0, 5));
    let params = ModelParams::new(Repulsion::Circular { a: 1.0, b: 0.5 });
    let (all, rejected) = replay_all(&t, &params, 0.5);
    assert!(rejected.is_empty());
    assert_eq!(all.len(), t.len());
    for (task, traj) in t.iter().zip(&all) {
        assert_eq!(&replay_simulate(task, &params, 0.5).unwrap(), traj);
    }
}

#[test]
fn split_partitions_the_dataset() {
    let data = scenario(600.0, 7);
    let (cal, val) = split_dataset(&data.set, 0.76, 11).unwrap();
    assert_eq!(cal.len() + val.len(), data.set.len());
    assert_eq!(cal.len(), (0.76 * data.set.len() as f64).round() as usize);
    let ids = |s: &TrajectorySet| s.iter().map(|t| t.id().clone()).collect::<BTreeSet<TrajectoryId>>();
    assert!(ids(&cal).is_disjoint(&ids(&val)));
    let again = split_dataset(&data.set, 0.76, 11).unwrap();
    assert_eq!(again, (cal, val));
}

#[test]
fn generating_model_passes_its_own_ks_check() {
    let data = scenario(900.0, 10);
    let measured = walking_time_cdf(&data.set, &data.gates);
    assert!(measured.times.len() >= 10, "only {} walking times", measured.times.len());
    let same = ks_two_sample(&measured.times, &measured.times).unwrap();
    assert_eq!(same.statistic, 0.0);
    assert!(!same.rejects(0.05));

    let t = tasks(&data);
    let truth = ModelParams::new(Repulsion::Circular { a: 2.0, b: 0.3 });
    let (replays, _) = replay_all(&t, &truth, CorridorScenario::default().relaxation_time);
    let subjects = TrajectorySet::new(t.iter().map(|t| t.subject().clone()).collect(), 30.0).unwrap();
    let observed = walking_time_cdf(&subjects, &data.gates);
    let simulated = walking_time_cdf(&TrajectorySet::new(replays, 30.0).unwrap(), &data.gates);
    let ks = ks_two_sample(&simulated.times, &observed.times).unwrap();
    assert!(!ks.rejects(0.05), "D {} p {}", ks.statistic, ks.p_value);
}
