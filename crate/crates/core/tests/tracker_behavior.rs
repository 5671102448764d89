use tbd_core::eval::score_sequence;
use tbd_core::synth::{ballistic_spec, synthesize_sequence, Backgrounds, BallisticMotion, SyntheticSpec};
use tbd_core::tracker::{track_frames, FrameStatus, Tracker, TrackerConfig, TrackerMode, WARMUP_FRAMES};

fn linear_spec(frames: usize, noise: f64) -> SyntheticSpec {
    let motion = BallisticMotion {
        start: [30.0, 50.0],
        velocity: [18.0, 4.0],
        gravity: 0.0,
        walls: None,
        restitution: 1.0,
        frames,
    };
    ballistic_spec(240, 140, &motion, 5.0, [0.9, 0.5, 0.1], noise, 21).unwrap()
}

fn statuses(results: &[tbd_core::tracker::FrameResult]) -> String {
    results
        .iter()
        .map(|r| match r.status {
            FrameStatus::Tracked => 'T',
            FrameStatus::Extrapolated => 'E',
            FrameStatus::Redetected => 'R',
            FrameStatus::Lost => 'L',
        })
        .collect()
}

#[test]
fn clean_linear_sequence_is_tracked() {
    let spec = linear_spec(10, 0.0);
    let (frames, truth) = synthesize_sequence(&spec, 1).unwrap();
    let results = track_frames(&frames, &TrackerConfig::default(), Some(spec.object_model().unwrap())).unwrap();
    let s = statuses(&results);
    assert!(s.starts_with("LLLR"), "{s}");
    assert!(s[WARMUP_FRAMES + 1..].chars().filter(|&c| c == 'T').count() >= 5, "{s}");
    let report = score_sequence(&results[WARMUP_FRAMES..], &truth[WARMUP_FRAMES..]).unwrap();
    assert!(report.mean_tiou >= 0.7, "TIoU {}", report.mean_tiou);
}

#[test]
fn seeded_background_detects_on_the_first_frame() {
    let spec = linear_spec(3, 0.0);
    let (frames, _) = synthesize_sequence(&spec, 1).unwrap();
    let bg = Backgrounds::load(&spec).unwrap();
    let mut tracker = Tracker::new(TrackerConfig::default(), Some(spec.object_model().unwrap())).unwrap();
    tracker.seed_background(bg.get(0)).unwrap();
    let first = tracker.step(&frames[0]).unwrap();
    assert_eq!(first.status, FrameStatus::Redetected);
    assert!(first.curve.is_some());
    assert_eq!(tracker.mode(), TrackerMode::Tracking);
}

#[test]
fn occlusion_extrapolates_then_recovers() {
    let mut spec = linear_spec(11, 0.0);
    spec.hidden_frames = vec![7];
    let (frames, _) = synthesize_sequence(&spec, 1).unwrap();
    let results = track_frames(&frames, &TrackerConfig::default(), Some(spec.object_model().unwrap())).unwrap();
    let s = statuses(&results);
    assert_eq!(&s[7..8], "E", "{s}");
    assert!(results[7].curve.is_some());
    assert!(s[8..10].contains(['T', 'R']), "{s}");
    assert!(s[8..11].contains('T'), "{s}");
}

#[test]
fn locked_template_never_changes() {
    let spec = linear_spec(8, 0.01);
    let (frames, _) = synthesize_sequence(&spec, 3).unwrap();
    let model = spec.object_model().unwrap();
    let config = TrackerConfig { gamma: 1.0, ..TrackerConfig::default() };
    let mut tracker = Tracker::new(config, Some(model.clone())).unwrap();
    for f in &frames {
        tracker.step(f).unwrap();
        assert_eq!(tracker.model(), Some(&model));
    }
}

#[test]
fn learning_replaces_a_missing_model() {
    let spec = linear_spec(8, 0.0);
    let (frames, _) = synthesize_sequence(&spec, 1).unwrap();
    let mut tracker = Tracker::new(TrackerConfig::default(), None).unwrap();
    for f in &frames {
        tracker.step(f).unwrap();
    }
    let model = tracker.model().expect("a model after accepted frames");
    assert!(model.max_violation().unwrap() <= 1e-9);
}

#[test]
fn results_depend_only_on_past_frames() {
    let spec = linear_spec(9, 0.01);
    let (frames, _) = synthesize_sequence(&spec, 5).unwrap();
    let config = TrackerConfig { gamma: 0.5, ..TrackerConfig::default() };
    let full = track_frames(&frames, &config, None).unwrap();
    let prefix = track_frames(&frames[..6], &config, None).unwrap();
    assert_eq!(&full[..6], &prefix[..]);
    assert_eq!(full, track_frames(&frames, &config, None).unwrap());
}

#[test]
fn mismatched_frame_sizes_are_rejected() {
    let spec = linear_spec(1, 0.0);
    let (frames, _) = synthesize_sequence(&spec, 1).unwrap();
    let mut tracker = Tracker::new(TrackerConfig::default(), None).unwrap();
    tracker.step(&frames[0]).unwrap();
    let small = tbd_core::imaging::RasterImage::filled(10, 10, &[0.0, 0.0, 0.0]);
    assert!(tracker.step(&small).is_err());
}
