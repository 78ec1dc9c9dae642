use crowdcal_core::TrajectoryId;
use crowdcal_tracking::detection::{detect_frame, BackgroundModel, DetectionConfig};
use crowdcal_tracking::metrics::evaluate;
use crowdcal_tracking::pipeline::{track_sensor, PipelineConfig};
use crowdcal_tracking::synth::{
    default_sensor_layout, generate_corridor, ground_truth, render_depth, render_sequence, CorridorConfig,
    SyntheticScene, WalkerSpec, DEFAULT_VIEW_MARGIN_PX,
};

fn noiseless_error(x: f64, y: f64, h: f64, seed: u64) -> f64 {
    let walker = WalkerSpec {
        id: TrajectoryId::new("w"),
        height: h,
        shoulder_width: 0.44,
        lane_y: y,
        x_enter: x,
        velocity_x: 0.0,
        t_enter: 0.0,
        t_exit: 1.0,
        sway_amplitude: 0.0,
        sway_period: 1.0,
        sway_phase: 0.0,
    };
    let scene = SyntheticScene {
        walkers: vec![walker],
        sensors: default_sensor_layout(),
        noise_sigma: 0.0,
        seed,
        frame_rate: 30.0,
        duration: 1.0,
    };
    let view = &scene.sensors[1];
    let bg = BackgroundModel::new(vec![]).unwrap();
    let points = view.world_points(&render_depth(&scene, view, 0.0)).unwrap();
    let dets = detect_frame(&points, &bg, &DetectionConfig::default(), seed, 0.0, view.sensor_id);
    assert_eq!(dets.len(), 1);
    let p = dets[0].position;
    ((p.x - x).powi(2) + (p.y - y).powi(2) + (p.z - h).powi(2)).sqrt()
}

#[test]
fn noiseless_head_is_localized_within_two_centimeters_near_nadir() {
    // Shoulders (at 0.82 H) stay below the 1.5 m cutoff up to H ≈ 1.83 m.
    let cases = [(0.0, 0.0, 1.75), (0.3, -0.3, 1.62), (-0.4, 0.2, 1.82), (0.2, 0.4, 1.7), (0.45, 0.0, 1.8)];
    for (k, &(x, y, h)) in cases.iter().enumerate() {
        let err = noiseless_error(x, y, h, k as u64);
        assert!(err < 0.02, "walker {k}: error {err}");
    }
}

#[test]
fn oblique_views_shift_the_top_percentile_slightly() {
    let cases = [(-0.9, 0.7, 1.82), (1.1, 0.8, 1.75), (0.9, 0.0, 1.65), (-1.1, -0.7, 1.8)];
    for (k, &(x, y, h)) in cases.iter().enumerate() {
        let err = noiseless_error(x, y, h, k as u64);
        assert!(err < 0.025, "walker {k}: error {err}");
    }
}

#[test]
fn tall_walkers_are_localized_within_shoulder_spread() {
    // Shoulder points inside the height band widen the top percentile.
    for (k, &(x, y, h)) in [(-0.9, 0.7, 1.93), (0.3, 0.2, 2.05), (0.0, 0.0, 1.9)].iter().enumerate() {
        let err = noiseless_error(x, y, h, k as u64);
        assert!(err < 0.06, "walker {k}: error {err}");
    }
}

#[test]
fn short_corridor_run_finds_every_walker() {
    let cfg = CorridorConfig { walkers: 6, duration: 20.0, ..Default::default() };
    let scene = generate_corridor(&cfg, 21).unwrap();
    let truth = ground_truth(&scene, DEFAULT_VIEW_MARGIN_PX).unwrap();
    let bg = BackgroundModel::new(vec![]).unwrap();
    let pc = PipelineConfig { seed: 21, ..Default::default() };
    let view = &scene.sensors[1];
    let frames = render_sequence(&scene, view);
    assert_eq!(frames.len(), 600);
    let auto = track_sensor(&frames, view, &bg, &pc).unwrap();
    let report = evaluate(&auto, &truth.per_sensor[1].1, 0.5).unwrap();
    assert_eq!(report.pdr, 1.0);
    assert_eq!(report.false_positives, 0);
    assert!(report.motp <= 0.05, "motp {}", report.motp);
    assert_eq!(auto, track_sensor(&frames, view, &bg, &pc).unwrap());
}

