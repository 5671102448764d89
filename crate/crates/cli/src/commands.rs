use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use tbd_core::curve::{CurveRecord, Vec2};
use tbd_core::eval::{
    predictions_from_frame_records, read_truth_csv, report_table, score_predictions, tiou_linear_baseline,
    write_truth_csv, DEFAULT_TIOU_SAMPLES,
};
use tbd_core::formation::{rasterize_curve, ObjectModel};
use tbd_core::imaging::io::{frame_file_name, list_frames, read_png, write_frames, write_png};
use tbd_core::imaging::{Psf, RasterImage};
use tbd_core::synth::{one_bounce_spec, synthesize_sequence, Backgrounds, SyntheticSpec};
use tbd_core::tracker::{FrameRecord, FrameResult, Tracker, WARMUP_FRAMES};
use tbd_core::trajfit::{consistency_check, fit_trajectory};

use crate::config::{dump, load, FitConfig, RunConfig, SynthConfig};
use crate::overlay::{draw_curve, rgb};
use crate::{EvalArgs, FitpsfArgs, SynthArgs, TrackArgs};

const TRAJECTORY_FILE: &str = "trajectory.jsonl";
const CURVE_COLOR: [f64; 3] = [0.1, 1.0, 0.2];

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let mut cfg: SynthConfig = load(args.config.as_deref())?;
    if let Some(path) = &args.spec {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        cfg.spec = Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?);
    }
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    cfg.speed = args.speed.unwrap_or(cfg.speed);
    cfg.frames = args.frames.unwrap_or(cfg.frames);
    cfg.noise_sigma = args.noise.unwrap_or(cfg.noise_sigma);

    let spec: SyntheticSpec = match &cfg.spec {
        Some(s) => s.clone(),
        None => one_bounce_spec(cfg.seed, cfg.speed, cfg.frames, cfg.noise_sigma)?,
    };
    let (frames, truth) = synthesize_sequence(&spec, cfg.seed)?;
    create_dir(&args.out)?;
    write_frames(&frames, args.out.join("frames"))?;
    write_truth_csv(&truth, args.out.join("truth.csv"))?;
    write_png(&spec.object_model()?.to_rgba(), args.out.join("template.png"))?;
    write_png(Backgrounds::load(&spec)?.get(0), args.out.join("background.png"))?;
    // The dump pins the rendered spec so re-running reproduces it exactly.
    cfg.spec = Some(spec);
    dump(&cfg, &args.out)?;
    eprintln!("wrote {} frames to {}", frames.len(), args.out.display());
    Ok(())
}

fn read_frames(dir: &Path) -> Result<Vec<RasterImage>> {
    let paths = list_frames(dir).with_context(|| format!("listing {}", dir.display()))?;
    ensure!(!paths.is_empty(), "no frame_*.png files in {}", dir.display());
    paths
        .iter()
        .map(|p| {
            let img = read_png(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(rgb(&img))
        })
        .collect()
}

fn resolve_run_config(args: &TrackArgs) -> Result<RunConfig> {
    let mut cfg: RunConfig = load(args.config.as_deref())?;
    if args.frames.is_some() {
        cfg.frames = args.frames.clone();
    }
    if args.template.is_some() {
        cfg.template = args.template.clone();
        // A template alone means a fixed, known object.
        if args.gamma.is_none() {
            cfg.tracker.gamma = 1.0;
        }
    }
    if args.background.is_some() {
        cfg.background = args.background.clone();
    }
    if let Some(g) = args.gamma {
        cfg.tracker.gamma = g;
    }
    if let Some(t) = args.tau {
        cfg.tracker.fit.tau = t;
    }
    if let Some(s) = args.seed {
        cfg.tracker.fit.seed = s;
    }
    cfg.debug_dumps |= args.debug_dumps;
    ensure!(cfg.frames.is_some(), "no frame directory given");
    cfg.validate()?;
    Ok(cfg)
}

fn dump_estimates(r: &FrameResult, dir: &Path) -> Result<()> {
    let name = frame_file_name(r.frame_index);
    if let Some(h) = &r.h {
        let peak = h.max_weight().max(1e-12);
        let img = h.to_image();
        let scaled = RasterImage::from_fn(img.width(), img.height(), 1, |x, y, _| img.at(x, y, 0) / peak);
        write_png(&scaled, dir.join(format!("h_{name}")))?;
    }
    if let Some(f) = &r.f {
        write_png(&rgb(f), dir.join(format!("f_{name}")))?;
    }
    if let Some(m) = &r.m {
        write_png(m, dir.join(format!("m_{name}")))?;
    }
    Ok(())
}

pub fn track(args: &TrackArgs) -> Result<()> {
    let cfg = resolve_run_config(args)?;
    let frames = read_frames(cfg.frames.as_deref().expect("validated"))?;
    let template = match &cfg.template {
        Some(p) => Some(ObjectModel::from_rgba(&read_png(p)?).with_context(|| format!("template {}", p.display()))?),
        None => None,
    };
    let mut tracker = Tracker::new(cfg.tracker.clone(), template)?;
    let seeded = cfg.background.is_some();
    if let Some(p) = &cfg.background {
        tracker.seed_background(&rgb(&read_png(p)?))?;
    }

    create_dir(&args.out)?;
    let overlays = args.out.join("overlays");
    create_dir(&overlays)?;
    let debug = args.out.join("debug");
    if cfg.debug_dumps {
        create_dir(&debug)?;
    }
    let mut out = BufWriter::new(File::create(args.out.join(TRAJECTORY_FILE))?);
    let first = if seeded { 0 } else { WARMUP_FRAMES };
    for (i, frame) in frames.iter().enumerate() {
        let r = tracker.step(frame)?;
        if i < first {
            continue;
        }
        serde_json::to_writer(&mut out, &FrameRecord::from(&r))?;
        out.write_all(b"\n")?;
        let mut img = frame.clone();
        if let Some(c) = &r.curve {
            draw_curve(&mut img, c, &CURVE_COLOR);
        }
        write_png(&img, overlays.join(frame_file_name(i)))?;
        if cfg.debug_dumps {
            dump_estimates(&r, &debug)?;
        }
    }
    out.flush()?;
    dump(&cfg, &args.out)?;
    eprintln!("tracked {} frames into {}", frames.len().saturating_sub(first), args.out.display());
    Ok(())
}

fn read_records(path: &Path) -> Result<Vec<FrameRecord>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut records = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), n + 1))?);
    }
    Ok(records)
}

#[derive(Deserialize)]
struct PointRow {
    frame_index: usize,
    x: f64,
    y: f64,
}

#[derive(Serialize)]
struct BaselineReport {
    mean_tiou: f64,
    frames: usize,
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let mut truth = read_truth_csv(&args.truth).with_context(|| format!("reading {}", args.truth.display()))?;
    ensure!(args.skip < truth.len(), "--skip {} leaves no ground truth", args.skip);
    truth.drain(..args.skip);
    let name = args.pred.file_stem().and_then(|s| s.to_str()).unwrap_or("sequence").to_string();
    if args.baseline_points {
        let mut reader = csv::Reader::from_path(&args.pred).with_context(|| format!("reading {}", args.pred.display()))?;
        let mut rows: Vec<PointRow> = reader.deserialize().collect::<std::result::Result<_, _>>()?;
        rows.sort_by_key(|r| r.frame_index);
        let positions: Vec<Vec2> = truth
            .iter()
            .map(|t| match rows.binary_search_by_key(&t.frame_index, |r| r.frame_index) {
                Ok(k) => Ok(Vec2::new(rows[k].x, rows[k].y)),
                Err(_) => bail!("no position for frame {}", t.frame_index),
            })
            .collect::<Result<_>>()?;
        let mean_tiou = tiou_linear_baseline(&positions, &truth, DEFAULT_TIOU_SAMPLES)?;
        let report = BaselineReport { mean_tiou, frames: truth.len() };
        fs::write(&args.out, serde_json::to_string_pretty(&report)? + "\n")?;
        println!("{name}: baseline TIoU {mean_tiou:.3} over {} frames", truth.len());
        return Ok(());
    }
    let preds = predictions_from_frame_records(&read_records(&args.pred)?)?;
    let preds: Vec<_> = preds.into_iter().filter(|p| p.frame_index >= truth[0].frame_index).collect();
    let report = score_predictions(&preds, &truth, DEFAULT_TIOU_SAMPLES)?;
    fs::write(&args.out, serde_json::to_string_pretty(&report)? + "\n")?;
    print!("{}", report_table(&[(name, report)]));
    Ok(())
}

#[derive(Serialize)]
struct FitOutput {
    curve: CurveRecord,
    fit_error: f64,
    consistent: bool,
}

pub fn fitpsf(args: &FitpsfArgs) -> Result<()> {
    let mut cfg: FitConfig = load(args.config.as_deref())?;
    if let Some(t) = args.tau {
        cfg.fit.tau = t;
    }
    if let Some(s) = args.seed {
        cfg.fit.seed = s;
    }
    cfg.fit.validate()?;
    let img = read_png(&args.psf).with_context(|| format!("reading {}", args.psf.display()))?;
    let h = Psf::from_image(&img, (0, 0))?;
    let fit = fit_trajectory(&h, &cfg.fit).with_context(|| format!("fitting {}", args.psf.display()))?;

    create_dir(&args.out)?;
    let output = FitOutput {
        curve: CurveRecord::new(&fit.curve, 0),
        fit_error: fit.fit_error,
        consistent: consistency_check(fit.fit_error, &cfg.fit),
    };
    fs::write(args.out.join("curve.json"), serde_json::to_string_pretty(&output)? + "\n")?;

    let (w, hgt) = (img.width(), img.height());
    let fitted = rasterize_curve(&fit.curve, (w, hgt), h.mass())?;
    let peak = h.max_weight().max(1e-12);
    let residual = RasterImage::from_fn(w, hgt, 1, |x, y, _| {
        (fitted.weight_at(x as i64, y as i64) - h.weight_at(x as i64, y as i64)).abs() / peak
    });
    write_png(&residual, args.out.join("residual.png"))?;
    let mut overlay = RasterImage::from_fn(w, hgt, 3, |x, y, _| h.weight_at(x as i64, y as i64) / peak);
    draw_curve(&mut overlay, &fit.curve, &CURVE_COLOR);
    write_png(&overlay, args.out.join("overlay.png"))?;
    dump(&cfg, &args.out)?;
    eprintln!("fit error {:.3}", fit.fit_error);
    Ok(())
}
