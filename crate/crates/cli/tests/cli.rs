use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tbd_core::curve::{CurveRecord, PiecewiseCurve, Vec2};
use tbd_core::eval::read_truth_csv;
use tbd_core::formation::rasterize_curve;
use tbd_core::imaging::io::write_png;
use tbd_core::imaging::RasterImage;
use tbd_core::tracker::{FrameRecord, FrameStatus, WARMUP_FRAMES};

fn tbd(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tbd")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn synth(dir: &Path, name: &str, frames: usize, seed: &str) {
    ok(&tbd(&["synth", "--out", name, "--seed", seed, "--speed", "20", "--frames", &frames.to_string(), "--noise", "0"], dir));
}

fn write_jsonl(path: &Path, records: &[FrameRecord]) {
    let text: Vec<String> = records.iter().map(|r| serde_json::to_string(r).unwrap()).collect();
    fs::write(path, text.join("\n") + "\n").unwrap();
}

fn truth_records(dir: &Path, shift: Vec2) -> Vec<FrameRecord> {
    read_truth_csv(dir.join("seq/truth.csv"))
        .unwrap()
        .iter()
        .map(|t| {
            let moved = PiecewiseCurve::segment(t.curve.start() + shift, t.curve.end() + shift);
            let curve = if shift.norm() == 0.0 { t.curve.clone() } else { moved };
            FrameRecord {
                frame_index: t.frame_index,
                status: FrameStatus::Tracked,
                fit_error: None,
                curve: Some(CurveRecord::new(&curve, t.frame_index)),
            }
        })
        .collect()
}

fn report(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn synth_writes_a_reproducible_sequence() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "a", 5, "7");
    synth(dir.path(), "b", 5, "7");
    let a = dir.path().join("a");
    assert_eq!(fs::read_dir(a.join("frames")).unwrap().count(), 5);
    for f in ["truth.csv", "template.png", "background.png", "config.json"] {
        assert!(a.join(f).exists(), "{f}");
    }
    for k in 1..=5 {
        let name = format!("frames/frame_{k:06}.png");
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(dir.path().join("b").join(&name)).unwrap());
    }
    assert_eq!(fs::read(a.join("truth.csv")).unwrap(), fs::read(dir.path().join("b/truth.csv")).unwrap());
    ok(&tbd(&["synth", "--config", "a/config.json", "--out", "c"], dir.path()));
    assert_eq!(fs::read(a.join("frames/frame_000003.png")).unwrap(), fs::read(dir.path().join("c/frames/frame_000003.png")).unwrap());
}

#[test]
fn eval_scores_truth_and_shifted_predictions() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "seq", 6, "1");
    write_jsonl(&dir.path().join("perfect.jsonl"), &truth_records(dir.path(), Vec2::zeros()));
    ok(&tbd(&["eval", "--pred", "perfect.jsonl", "--truth", "seq/truth.csv", "--out", "perfect.json"], dir.path()));
    let r = report(&dir.path().join("perfect.json"));
    for key in ["mean_tiou", "recall", "precision"] {
        assert!((r[key].as_f64().unwrap() - 1.0).abs() < 1e-12, "{key}: {}", r[key]);
    }

    let radius = read_truth_csv(dir.path().join("seq/truth.csv")).unwrap()[0].radius;
    write_jsonl(&dir.path().join("shifted.jsonl"), &truth_records(dir.path(), Vec2::new(0.0, 2.0 * radius)));
    ok(&tbd(&["eval", "--pred", "shifted.jsonl", "--truth", "seq/truth.csv", "--out", "shifted.json"], dir.path()));
    let r = report(&dir.path().join("shifted.json"));
    assert_eq!(r["mean_tiou"].as_f64().unwrap(), 0.0);
    assert_eq!(r["recall"].as_f64().unwrap(), 0.0);
}

#[test]
fn eval_baseline_points_use_linear_interpolation() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "seq", 6, "1");
    let truth = read_truth_csv(dir.path().join("seq/truth.csv")).unwrap();
    let mut csv = String::from("frame_index,x,y\n");
    for t in &truth {
        let p = t.curve.start();
        csv += &format!("{},{},{}\n", t.frame_index, p.x, p.y);
    }
    fs::write(dir.path().join("points.csv"), csv).unwrap();
    ok(&tbd(&["eval", "--baseline-points", "--pred", "points.csv", "--truth", "seq/truth.csv", "--out", "base.json"], dir.path()));
    let r = report(&dir.path().join("base.json"));
    let expect = tbd_core::eval::tiou_linear_baseline(
        &truth.iter().map(|t| t.curve.start()).collect::<Vec<_>>(),
        &truth,
        tbd_core::eval::DEFAULT_TIOU_SAMPLES,
    )
    .unwrap();
    assert!((r["mean_tiou"].as_f64().unwrap() - expect).abs() < 1e-12);
    assert!(expect > 0.5);
}

#[test]
fn track_emits_one_record_per_frame_after_warm_up() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "seq", 8, "2");
    ok(&tbd(&["track", "seq/frames", "--out", "run", "--template", "seq/template.png"], dir.path()));
    let run = dir.path().join("run");
    let lines: Vec<FrameRecord> = fs::read_to_string(run.join("trajectory.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 8 - WARMUP_FRAMES);
    assert!(lines.iter().all(|r| r.curve.is_some()));
    assert_eq!(fs::read_dir(run.join("overlays")).unwrap().count(), 8 - WARMUP_FRAMES);
    let cfg: Value = serde_json::from_str(&fs::read_to_string(run.join("config.json")).unwrap()).unwrap();
    assert_eq!(cfg["tracker"]["gamma"].as_f64(), Some(1.0));

    // Re-running from the dumped configuration reproduces the output.
    ok(&tbd(&["track", "--config", "run/config.json", "--out", "again"], dir.path()));
    assert_eq!(fs::read(run.join("trajectory.jsonl")).unwrap(), fs::read(dir.path().join("again/trajectory.jsonl")).unwrap());
}

#[test]
fn track_with_background_and_debug_dumps() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "seq", 4, "4");
    ok(&tbd(
        &["track", "seq/frames", "--out", "run", "--background", "seq/background.png", "--gamma", "0.5", "--tau", "0.7", "--debug-dumps"],
        dir.path(),
    ));
    let run = dir.path().join("run");
    assert_eq!(fs::read_to_string(run.join("trajectory.jsonl")).unwrap().lines().count(), 4);
    assert!(fs::read_dir(run.join("debug")).unwrap().count() > 0);
    let cfg: Value = serde_json::from_str(&fs::read_to_string(run.join("config.json")).unwrap()).unwrap();
    assert_eq!(cfg["tracker"]["fit"]["tau"].as_f64(), Some(0.7));
}

#[test]
fn track_rejects_missing_or_empty_input() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("empty")).unwrap();
    let out = tbd(&["track", "empty", "--out", "run"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no frame"));
    assert!(!tbd(&["track", "missing", "--out", "run"], dir.path()).status.success());
}

fn write_psf(dir: &Path, name: &str, curve: &PiecewiseCurve) {
    let h = rasterize_curve(curve, (80, 60), 1.0).unwrap();
    let peak = h.max_weight();
    let img = RasterImage::from_fn(80, 60, 1, |x, y, _| h.weight_at(x as i64, y as i64) / peak);
    write_png(&img, dir.join(name)).unwrap();
}

fn fitted(dir: &Path, out: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(out).join("curve.json")).unwrap()).unwrap()
}

#[test]
fn fitpsf_recovers_lines_and_bounces() {
    let dir = tempfile::tempdir().unwrap();
    write_psf(dir.path(), "line.png", &PiecewiseCurve::segment(Vec2::new(10.0, 12.0), Vec2::new(60.0, 40.0)));
    ok(&tbd(&["fitpsf", "line.png", "--out", "line"], dir.path()));
    let v = fitted(dir.path(), "line");
    assert_eq!(v["curve"]["pieces"].as_array().unwrap().len(), 1);
    assert!(dir.path().join("line/residual.png").exists());
    assert!(dir.path().join("line/overlay.png").exists());

    let bounce = PiecewiseCurve::polyline(Vec2::new(10.0, 10.0), Vec2::new(40.0, 50.0), Vec2::new(70.0, 12.0)).unwrap();
    write_psf(dir.path(), "bounce.png", &bounce);
    ok(&tbd(&["fitpsf", "bounce.png", "--out", "bounce"], dir.path()));
    let v = fitted(dir.path(), "bounce");
    assert_eq!(v["curve"]["pieces"].as_array().unwrap().len(), 2);
    let tb = v["curve"]["tbreak"].as_f64().unwrap();
    assert!(tb > 0.0 && tb < 1.0);
}

#[test]
fn fitpsf_fails_on_blank_kernel() {
    let dir = tempfile::tempdir().unwrap();
    write_png(&RasterImage::filled(30, 30, &[0.0]), dir.path().join("blank.png")).unwrap();
    let out = tbd(&["fitpsf", "blank.png", "--out", "fit"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("salient"));
}
