use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL_CAMERA: &str = "camera.width = 160\ncamera.height = 120\ncamera.focal_length_px = 145\n";

fn crowdcal(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crowdcal")).current_dir(dir).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

/// Non-comment lines of a text output.
fn body(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().filter(|l| !l.starts_with('#')).map(str::to_owned).collect()
}

/// `key: value` lines of the evaluation report.
fn report(path: &Path) -> BTreeMap<String, String> {
    body(path)
        .iter()
        .filter_map(|l| l.split_once(": ").map(|(k, v)| (k.to_owned(), v.to_owned())))
        .collect()
}

fn all_files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn small_corridor(dir: &Path, out: &str, seed: &str) -> Output {
    corridor(dir, out, seed, 4.0)
}

fn corridor(dir: &Path, out: &str, seed: &str, duration: f64) -> Output {
    write(dir, "corridor.conf", &format!("{SMALL_CAMERA}synth.walkers = 3\nsynth.duration = {duration}\n\
         synth.lanes = -0.3, 0.3\n"));
    crowdcal(dir, &["synth", "--config", "corridor.conf", "--seed", seed, "--out", out])
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&crowdcal(tmp.path(), &[])), 1);
    assert_eq!(code(&crowdcal(tmp.path(), &["frobnicate"])), 1);
    assert_eq!(code(&crowdcal(tmp.path(), &["stitch", "--no-such-flag", "a.txt"])), 1);
    assert_eq!(code(&crowdcal(tmp.path(), &["--help"])), 0);
    assert_eq!(code(&crowdcal(tmp.path(), &["evaluate", "missing.txt", "missing.txt"])), 1);
}

#[test]
fn unknown_or_duplicate_config_keys_are_input_errors() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "typo.conf", "stitch.h_strat = 3\n");
    write(tmp.path(), "dup.conf", "stitch.h_start = 3\nstitch.h_start = 4\n");
    write(tmp.path(), "a.txt", "trajectory_id,t_seconds,x_m,y_m,z_m\n");
    let o = crowdcal(tmp.path(), &["stitch", "--config", "typo.conf", "a.txt"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("stitch.h_strat"));
    assert_eq!(code(&crowdcal(tmp.path(), &["stitch", "--config", "dup.conf", "a.txt"])), 1);
}

#[test]
fn synth_writes_one_frame_per_sensor_and_tick() {
    let tmp = TempDir::new().unwrap();
    let o = small_corridor(tmp.path(), "s", "3");
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let frames: Vec<_> = fs::read_dir(tmp.path().join("s/frames")).unwrap().collect();
    // Three sensors, 4 s at 30 Hz.
    assert_eq!(frames.len(), 3 * 120);
    assert!(body(&tmp.path().join("s/scene.csv")).contains(&"frames_per_sensor,120".to_string()));
}

#[test]
fn same_seed_gives_identical_outputs_and_other_seed_differs() {
    let tmp = TempDir::new().unwrap();
    for (out, seed) in [("a", "5"), ("b", "5"), ("c", "6")] {
        assert_eq!(code(&small_corridor(tmp.path(), out, seed)), 0);
    }
    let a = all_files(&tmp.path().join("a"));
    assert_eq!(a, all_files(&tmp.path().join("b")));
    assert_ne!(a.get(Path::new("truth_global.txt")), all_files(&tmp.path().join("c")).get(Path::new("truth_global.txt")));
}

#[test]
fn full_tracking_chain_runs_on_synthetic_frames() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    // Long enough for every walker to cross all three sensors.
    assert_eq!(code(&corridor(d, "s", "1", 8.0)), 0);
    write(d, "cam.conf", SMALL_CAMERA);
    let cal = crowdcal(d, &["calibrate-sensors", "s/matches.txt", "--out", "c"]);
    assert_eq!(code(&cal), 0, "{}", stderr(&cal));
    let rmse = body(&d.join("c/calibration_rmse.csv"));
    assert_eq!(rmse.len(), 4);
    assert!(rmse[1..].iter().all(|l| l.ends_with(",ok")));

    let tr = crowdcal(
        d,
        &["track", "s/frames", "--background", "s/background.txt", "--calibration", "c/calibration.txt", "--config", "cam.conf", "--out", "t"],
    );
    assert_eq!(code(&tr), 0, "{}", stderr(&tr));
    let st = crowdcal(d, &["stitch", "t/tracks_sensor1.txt", "t/tracks_sensor2.txt", "t/tracks_sensor3.txt", "--out", "st"]);
    assert_eq!(code(&st), 0, "{}", stderr(&st));
    assert!(d.join("st/stitched.txt").exists());
    for id in 1..=3 {
        let (auto, truth, out) = (format!("t/tracks_sensor{id}.txt"), format!("s/truth_sensor{id}.txt"), format!("e{id}"));
        let ev = crowdcal(d, &["evaluate", &auto, &truth, "--out", &out]);
        assert_eq!(code(&ev), 0, "{}", stderr(&ev));
        let r = report(&d.join(out).join("eval_report.txt"));
        let pdr: f64 = r["pdr"].parse().unwrap();
        assert!(pdr >= 2.0 / 3.0, "sensor {id}: {r:?}");
    }
}

#[test]
fn missing_sensor_gives_partial_output_and_strict_failure() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    assert_eq!(code(&small_corridor(d, "s", "1")), 0);
    write(d, "expect.conf", "calibrate.expected_sensors = 1, 2, 3, 4\n");
    let lax = crowdcal(d, &["calibrate-sensors", "s/matches.txt", "--config", "expect.conf", "--out", "c"]);
    assert_eq!(code(&lax), 0);
    assert!(stderr(&lax).contains("sensor 4"));
    let rows = body(&d.join("c/calibration_rmse.csv"));
    assert!(rows.contains(&"4,0,nan,missing".to_string()));
    assert_eq!(rows.iter().filter(|l| l.ends_with(",ok")).count(), 3);
    let cal = fs::read_to_string(d.join("c/calibration.txt")).unwrap();
    assert!(!cal.is_empty());

    let strict =
        crowdcal(d, &["calibrate-sensors", "s/matches.txt", "--config", "expect.conf", "--strict", "--out", "c2"]);
    assert_eq!(code(&strict), 2);
}

#[test]
fn empty_frames_directory_gives_empty_tracks() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    assert_eq!(code(&small_corridor(d, "s", "1")), 0);
    fs::create_dir(d.join("empty")).unwrap();
    write(d, "cam.conf", SMALL_CAMERA);
    let args = [
        "track", "empty", "--background", "s/background.txt", "--calibration", "s/calibration_true.txt",
        "--config", "cam.conf", "--out", "t",
    ];
    let o = crowdcal(d, &args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for id in 1..=3 {
        assert_eq!(body(&d.join(format!("t/tracks_sensor{id}.txt"))), ["trajectory_id,t_seconds,x_m,y_m,z_m"]);
    }
    let mut strict = args.to_vec();
    strict.push("--strict");
    assert_eq!(code(&crowdcal(d, &strict)), 2);
}

#[test]
fn single_file_stitch_is_a_passthrough() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    assert_eq!(code(&small_corridor(d, "s", "2")), 0);
    let o = crowdcal(d, &["stitch", "s/truth_sensor1.txt", "--out", "st"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(body(&d.join("st/stitched.txt")), body(&d.join("s/truth_sensor1.txt")));
    assert!(body(&d.join("st/stitch_summary.csv")).contains(&"accepted_pairs,0".to_string()));
}

#[test]
fn evaluating_truth_against_itself_is_perfect() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    assert_eq!(code(&small_corridor(d, "s", "4")), 0);
    let o = crowdcal(d, &["evaluate", "s/truth_global.txt", "s/truth_global.txt", "--out", "e"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = report(&d.join("e/eval_report.txt"));
    assert_eq!(r["pdr"], "1.000000");
    assert_eq!(r["motp_m"], "0.000000");
    assert_eq!(r["false_positives"], "0");
}

#[test]
fn seam_synth_and_stitch_report_tpr() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write(d, "seam.conf", "synth.kind = seam\nsynth.walkers = 20\n");
    assert_eq!(code(&crowdcal(d, &["synth", "--config", "seam.conf", "--seed", "3", "--out", "s"])), 0);
    let o = crowdcal(
        d,
        &["stitch", "s/fragments_sensor1.txt", "s/fragments_sensor2.txt", "--pairs", "s/truth_pairs.csv", "--out", "st"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let tpr = body(&d.join("st/stitch_summary.csv")).into_iter().find_map(|l| l.strip_prefix("tpr,").map(str::to_owned));
    let tpr: f64 = tpr.expect("tpr row").parse().unwrap();
    assert!(tpr >= 0.9, "tpr {tpr}");
}

#[test]
fn fit_and_validate_share_one_scene_config() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write(d, "crowd.conf", "synth.kind = crowd\ncrowd.duration = 500\n");
    let o = crowdcal(d, &["synth", "--config", "crowd.conf", "--seed", "1", "--out", "cr"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let scene = fs::read_to_string(d.join("cr/scene.conf")).unwrap();
    write(d, "run.conf", &format!("{scene}fit.population = 8\nfit.generations = 3\nfit.nm_max_evaluations = 20\nvalidate.subset = all\n"));

    let f = crowdcal(d, &["fit", "cr/trajectories.txt", "--config", "run.conf", "--variant", "A,C", "--seed", "2", "--out", "f"]);
    assert_eq!(code(&f), 0, "{}", stderr(&f));
    let table = body(&d.join("f/model_comparison.csv"));
    assert_eq!(table.len(), 3);
    assert!(table[0].starts_with("model,parameters"));

    let v = crowdcal(
        d,
        &["validate", "cr/trajectories.txt", "--config", "run.conf", "--fit", "f/fit_A.txt", "--fit", "f/fit_C.txt", "--seed", "2", "--out", "v"],
    );
    assert_eq!(code(&v), 0, "{}", stderr(&v));
    let ks = body(&d.join("v/ks.csv"));
    assert_eq!(ks.len(), 3);
    assert!(ks[1].starts_with("A,") && ks[2].starts_with("C,"));
    assert!(d.join("v/cdf_measured.csv").exists());
}

#[test]
fn split_flag_overrides_the_config_ratio() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write(d, "crowd.conf", "synth.kind = crowd\ncrowd.duration = 400\n");
    assert_eq!(code(&crowdcal(d, &["synth", "--config", "crowd.conf", "--out", "cr"])), 0);
    let scene = fs::read_to_string(d.join("cr/scene.conf")).unwrap();
    write(d, "run.conf", &format!("{scene}fit.population = 6\nfit.generations = 2\nfit.nm_max_evaluations = 10\n"));
    let o = crowdcal(d, &["fit", "cr/trajectories.txt", "--config", "run.conf", "--variant", "A", "--split", "0.5", "--out", "f"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(d.join("f/fit_A.txt")).unwrap();
    assert!(text.contains("objective.split_ratio = 0.5"), "{text}");
    let bad = crowdcal(d, &["fit", "cr/trajectories.txt", "--config", "run.conf", "--split", "1.5", "--out", "g"]);
    assert_eq!(code(&bad), 1);
}
