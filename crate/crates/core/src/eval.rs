//! Trajectory IoU, recall/precision and ground-truth files.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::curve::{CurveRecord, Piece, PiecewiseCurve, Vec2};
use crate::error::{Error, Result};
use crate::tracker::{FrameRecord, FrameResult, FrameStatus};

pub const DEFAULT_TIOU_SAMPLES: usize = 11;

/// Ground-truth trajectory of one frame and the object radius.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthEntry {
    pub frame_index: usize,
    pub curve: PiecewiseCurve,
    pub radius: f64,
}

/// IoU of two disks of radius `r` whose centers are `dist` apart.
pub fn disk_iou(dist: f64, r: f64) -> f64 {
    let d = dist.abs();
    if d >= 2.0 * r {
        return 0.0;
    }
    let inter = 2.0 * r * r * (d / (2.0 * r)).acos() - 0.5 * d * (4.0 * r * r - d * d).sqrt();
    inter / (2.0 * PI * r * r - inter)
}

/// Mean disk IoU between `pred(t)` and `truth(t)` over `n_samples` evenly
/// spaced times in `[0, 1]`.
pub fn tiou(pred: &PiecewiseCurve, truth: &GroundTruthEntry, n_samples: usize) -> Result<f64> {
    if n_samples < 2 {
        return Err(Error::InvalidArgument(format!(
            "n_samples = {n_samples} < 2"
        )));
    }
    if !(truth.radius > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "radius {} must be positive",
            truth.radius
        )));
    }
    if !pred.is_finite() || !truth.curve.is_finite() {
        return Err(Error::NonFinite("curve"));
    }
    let sum: f64 = (0..n_samples)
        .map(|k| {
            let t = k as f64 / (n_samples - 1) as f64;
            disk_iou((pred.eval(t) - truth.curve.eval(t)).norm(), truth.radius)
        })
        .sum();
    Ok(sum / n_samples as f64)
}

/// Linear inter-frame curves through per-frame point positions. The curve of
/// the last frame continues the previous displacement.
pub fn linear_curves_from_positions(positions: &[Vec2]) -> Result<Vec<PiecewiseCurve>> {
    if positions.len() < 2 {
        return Err(Error::InvalidArgument("need at least two positions".into()));
    }
    let n = positions.len();
    Ok((0..n)
        .map(|i| {
            let (a, b) = if i + 1 < n {
                (positions[i], positions[i + 1])
            } else {
                (positions[i], 2.0 * positions[i] - positions[i - 1])
            };
            PiecewiseCurve::single(Piece::linear(a, b - a))
        })
        .collect())
}

/// Mean TIoU of point-output trackers after converting positions to linear
/// inter-frame curves. `positions[i]` pairs with `truth[i]`.
pub fn tiou_linear_baseline(
    positions: &[Vec2],
    truth: &[GroundTruthEntry],
    n_samples: usize,
) -> Result<f64> {
    let curves = linear_curves_from_positions(positions)?;
    let n = curves.len().min(truth.len());
    if n == 0 {
        return Err(Error::InvalidArgument("no ground truth to score".into()));
    }
    let mut sum = 0.0;
    for (c, t) in curves.iter().zip(truth).take(n) {
        sum += tiou(c, t, n_samples)?;
    }
    Ok(sum / n as f64)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusCounts {
    pub tracked: usize,
    pub extrapolated: usize,
    pub redetected: usize,
    pub lost: usize,
}

impl StatusCounts {
    fn add(&mut self, s: FrameStatus) {
        match s {
            FrameStatus::Tracked => self.tracked += 1,
            FrameStatus::Extrapolated => self.extrapolated += 1,
            FrameStatus::Redetected => self.redetected += 1,
            FrameStatus::Lost => self.lost += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameScore {
    pub frame_index: usize,
    pub tiou: f64,
    pub predicted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceReport {
    pub frames: Vec<FrameScore>,
    pub mean_tiou: f64,
    pub recall: f64,
    pub precision: f64,
    /// Set when there were no predictions and precision is 1 by convention.
    pub precision_vacuous: bool,
    pub counts: StatusCounts,
}

/// A prediction for one frame, independent of where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub frame_index: usize,
    pub curve: Option<PiecewiseCurve>,
    pub status: Option<FrameStatus>,
}

impl From<&FrameResult> for Prediction {
    fn from(r: &FrameResult) -> Self {
        Self {
            frame_index: r.frame_index,
            curve: r.curve.clone(),
            status: Some(r.status),
        }
    }
}

/// Score tracker output against ground truth. Missing predictions count as
/// TIoU 0; a prediction for a frame without ground truth is an error.
pub fn score_sequence(
    results: &[FrameResult],
    truth: &[GroundTruthEntry],
) -> Result<SequenceReport> {
    let preds: Vec<Prediction> = results.iter().map(Prediction::from).collect();
    score_predictions(&preds, truth, DEFAULT_TIOU_SAMPLES)
}

pub fn score_predictions(
    preds: &[Prediction],
    truth: &[GroundTruthEntry],
    n_samples: usize,
) -> Result<SequenceReport> {
    let truth_idx: HashMap<usize, &GroundTruthEntry> =
        truth.iter().map(|t| (t.frame_index, t)).collect();
    if truth_idx.len() != truth.len() {
        return Err(Error::Misaligned(
            "duplicate ground-truth frame index".into(),
        ));
    }
    let mut by_frame: HashMap<usize, &Prediction> = HashMap::new();
    for p in preds {
        if !truth_idx.contains_key(&p.frame_index) {
            return Err(Error::Misaligned(format!(
                "prediction for frame {} has no ground truth",
                p.frame_index
            )));
        }
        if by_frame.insert(p.frame_index, p).is_some() {
            return Err(Error::Misaligned(format!(
                "duplicate prediction for frame {}",
                p.frame_index
            )));
        }
    }

    let mut counts = StatusCounts::default();
    let mut frames = Vec::with_capacity(truth.len());
    let (mut emitted, mut overlapping) = (0usize, 0usize);
    for t in truth {
        let pred = by_frame.get(&t.frame_index);
        if let Some(s) = pred.and_then(|p| p.status) {
            counts.add(s);
        }
        let (score, predicted) = match pred.and_then(|p| p.curve.as_ref()) {
            Some(c) => {
                emitted += 1;
                let s = tiou(c, t, n_samples)?;
                if s > 0.0 {
                    overlapping += 1;
                }
                (s, true)
            }
            None => (0.0, false),
        };
        frames.push(FrameScore {
            frame_index: t.frame_index,
            tiou: score,
            predicted,
        });
    }
    let n = truth.len().max(1) as f64;
    let mean_tiou = frames.iter().map(|f| f.tiou).sum::<f64>() / n;
    let recall = frames.iter().filter(|f| f.tiou > 0.0).count() as f64 / n;
    let (precision, precision_vacuous) = if emitted == 0 {
        (1.0, true)
    } else {
        (overlapping as f64 / emitted as f64, false)
    };
    Ok(SequenceReport {
        frames,
        mean_tiou,
        recall,
        precision,
        precision_vacuous,
        counts,
    })
}

/// Plain-text table with one row per sequence and an average row.
pub fn report_table(rows: &[(String, SequenceReport)]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<20} {:>7} {:>7} {:>6} {:>6} {:>5} {:>5} {:>5} {:>5}",
        "sequence", "frames", "TIoU", "Rcl", "Prec", "TRK", "EXT", "RED", "LOST"
    );
    for (name, r) in rows {
        let _ = writeln!(
            s,
            "{:<20} {:>7} {:>7.3} {:>6.2} {:>6.2} {:>5} {:>5} {:>5} {:>5}",
            name,
            r.frames.len(),
            r.mean_tiou,
            r.recall,
            r.precision,
            r.counts.tracked,
            r.counts.extrapolated,
            r.counts.redetected,
            r.counts.lost
        );
    }
    if !rows.is_empty() {
        let n = rows.len() as f64;
        let avg = |f: fn(&SequenceReport) -> f64| rows.iter().map(|(_, r)| f(r)).sum::<f64>() / n;
        let _ = writeln!(
            s,
            "{:<20} {:>7} {:>7.3} {:>6.2} {:>6.2}",
            "Average",
            rows.iter().map(|(_, r)| r.frames.len()).sum::<usize>(),
            avg(|r| r.mean_tiou),
            avg(|r| r.recall),
            avg(|r| r.precision)
        );
    }
    s
}

#[derive(Debug, Serialize, Deserialize)]
struct TruthRow {
    frame_index: usize,
    tbreak: f64,
    p1c0x: f64,
    p1c0y: f64,
    p1c1x: f64,
    p1c1y: f64,
    p1c2x: f64,
    p1c2y: f64,
    p2c0x: f64,
    p2c0y: f64,
    p2c1x: f64,
    p2c1y: f64,
    p2c2x: f64,
    p2c2y: f64,
    radius: f64,
}

pub fn write_truth_csv(entries: &[GroundTruthEntry], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for e in entries {
        let f = e.curve.to_flat();
        w.serialize(TruthRow {
            frame_index: e.frame_index,
            tbreak: f[0],
            p1c0x: f[1],
            p1c0y: f[2],
            p1c1x: f[3],
            p1c1y: f[4],
            p1c2x: f[5],
            p1c2y: f[6],
            p2c0x: f[7],
            p2c0y: f[8],
            p2c1x: f[9],
            p2c1y: f[10],
            p2c2x: f[11],
            p2c2y: f[12],
            radius: e.radius,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_truth_csv(path: impl AsRef<Path>) -> Result<Vec<GroundTruthEntry>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        let row: TruthRow = row?;
        let flat = [
            row.tbreak, row.p1c0x, row.p1c0y, row.p1c1x, row.p1c1y, row.p1c2x, row.p1c2y,
            row.p2c0x, row.p2c0y, row.p2c1x, row.p2c1y, row.p2c2x, row.p2c2y,
        ];
        if !(row.radius > 0.0) {
            return Err(Error::Parse(format!(
                "frame {}: radius must be positive",
                row.frame_index
            )));
        }
        out.push(GroundTruthEntry {
            frame_index: row.frame_index,
            curve: PiecewiseCurve::from_flat(&flat)?,
            radius: row.radius,
        });
    }
    Ok(out)
}

/// Parse a trajectory JSON list into per-frame predictions.
pub fn predictions_from_records(records: &[CurveRecord]) -> Result<Vec<Prediction>> {
    records
        .iter()
        .map(|r| {
            Ok(Prediction {
                frame_index: r.frame_index,
                curve: Some(r.to_curve()?),
                status: None,
            })
        })
        .collect()
}

/// Predictions with status from tracker output lines.
pub fn predictions_from_frame_records(records: &[FrameRecord]) -> Result<Vec<Prediction>> {
    records
        .iter()
        .map(|r| {
            Ok(Prediction {
                frame_index: r.frame_index,
                curve: r.curve.as_ref().map(CurveRecord::to_curve).transpose()?,
                status: Some(r.status),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn static_truth(p: Vec2, r: f64) -> GroundTruthEntry {
        GroundTruthEntry {
            frame_index: 0,
            curve: PiecewiseCurve::constant(p),
            radius: r,
        }
    }

    /// Fraction of a fine grid covered by both disks over the union.
    fn pixel_iou(d: f64, r: f64, step: f64) -> f64 {
        let (mut inter, mut union) = (0usize, 0usize);
        let nx = ((d + 2.0 * r) / step).ceil() as usize;
        let ny = (2.0 * r / step).ceil() as usize;
        for j in 0..ny {
            let y = -r + (j as f64 + 0.5) * step;
            for i in 0..nx {
                let x = -r + (i as f64 + 0.5) * step;
                let a = x * x + y * y <= r * r;
                let b = (x - d) * (x - d) + y * y <= r * r;
                inter += (a && b) as usize;
                union += (a || b) as usize;
            }
        }
        inter as f64 / union as f64
    }

    #[test]
    fn identical_curves_score_one() {
        let c = PiecewiseCurve::segment(Vec2::new(0.0, 0.0), Vec2::new(30.0, 5.0));
        let t = GroundTruthEntry {
            frame_index: 0,
            curve: c.clone(),
            radius: 4.0,
        };
        assert_eq!(tiou(&c, &t, 11).unwrap(), 1.0);
    }

    #[test]
    fn far_apart_curves_score_zero() {
        let a = PiecewiseCurve::segment(Vec2::new(0.0, 0.0), Vec2::new(30.0, 0.0));
        let b = a.translated(Vec2::new(0.0, 8.0));
        let t = GroundTruthEntry {
            frame_index: 0,
            curve: b,
            radius: 4.0,
        };
        assert_eq!(tiou(&a, &t, 11).unwrap(), 0.0);
    }

    #[test]
    fn offset_by_radius_matches_closed_form_and_pixels() {
        let a = (0.5f64).acos();
        let closed = (2.0 * a - 3f64.sqrt() / 2.0) / (2.0 * PI - 2.0 * a + 3f64.sqrt() / 2.0);
        let t = static_truth(Vec2::new(0.0, 0.0), 1.0);
        let v = tiou(&PiecewiseCurve::constant(Vec2::new(1.0, 0.0)), &t, 11).unwrap();
        assert!((v - closed).abs() < 1e-12);
        assert!((v - 0.2430).abs() < 1e-3);
        assert!((pixel_iou(1.0, 1.0, 0.01) - v).abs() < 1e-2);
    }

    #[test]
    fn too_few_samples_or_nan_rejected() {
        let t = static_truth(Vec2::zeros(), 1.0);
        assert!(tiou(&PiecewiseCurve::constant(Vec2::zeros()), &t, 1).is_err());
        assert!(matches!(
            tiou(&PiecewiseCurve::constant(Vec2::new(f64::NAN, 0.0)), &t, 11),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn static_iou_non_increasing_in_distance() {
        let t = static_truth(Vec2::zeros(), 3.0);
        let mut prev = 1.0;
        for k in 0..=70 {
            let v = tiou(
                &PiecewiseCurve::constant(Vec2::new(k as f64 * 0.1, 0.0)),
                &t,
                11,
            )
            .unwrap();
            assert!(v <= prev + 1e-15);
            prev = v;
        }
        assert_eq!(prev, 0.0);
    }

    #[test]
    fn linear_baseline_on_exact_positions() {
        let truth: Vec<_> = (0..5)
            .map(|i| GroundTruthEntry {
                frame_index: i,
                curve: PiecewiseCurve::segment(
                    Vec2::new(10.0 * i as f64, 3.0),
                    Vec2::new(10.0 * (i + 1) as f64, 3.0),
                ),
                radius: 2.0,
            })
            .collect();
        let pos: Vec<_> = (0..5).map(|i| Vec2::new(10.0 * i as f64, 3.0)).collect();
        assert!((tiou_linear_baseline(&pos, &truth, 11).unwrap() - 1.0).abs() < 1e-3);
        assert!(tiou_linear_baseline(&pos[..1], &truth, 11).is_err());
    }

    #[test]
    fn linear_baseline_static_matches_tiou() {
        let truth = vec![GroundTruthEntry {
            frame_index: 0,
            curve: PiecewiseCurve::segment(Vec2::new(0.0, 0.0), Vec2::new(4.0, 0.0)),
            radius: 2.0,
        }];
        let pos = vec![Vec2::zeros(), Vec2::zeros()];
        let expect = tiou(&PiecewiseCurve::constant(Vec2::zeros()), &truth[0], 11).unwrap();
        assert!((tiou_linear_baseline(&pos, &truth, 11).unwrap() - expect).abs() < 1e-12);
    }

    fn truth_seq(n: usize) -> Vec<GroundTruthEntry> {
        (0..n)
            .map(|i| GroundTruthEntry {
                frame_index: i,
                curve: PiecewiseCurve::segment(
                    Vec2::new(20.0 * i as f64, 0.0),
                    Vec2::new(20.0 * (i + 1) as f64, 0.0),
                ),
                radius: 3.0,
            })
            .collect()
    }

    #[test]
    fn perfect_and_missing_predictions() {
        let truth = truth_seq(4);
        let perfect: Vec<_> = truth
            .iter()
            .map(|t| Prediction {
                frame_index: t.frame_index,
                curve: Some(t.curve.clone()),
                status: None,
            })
            .collect();
        let r = score_predictions(&perfect, &truth, 11).unwrap();
        assert_eq!((r.mean_tiou, r.recall, r.precision), (1.0, 1.0, 1.0));
        assert!(!r.precision_vacuous);

        let r = score_predictions(&[], &truth, 11).unwrap();
        assert_eq!((r.mean_tiou, r.recall, r.precision), (0.0, 0.0, 1.0));
        assert!(r.precision_vacuous);

        let shifted: Vec<_> = truth
            .iter()
            .map(|t| Prediction {
                frame_index: t.frame_index,
                curve: Some(t.curve.translated(Vec2::new(0.0, 6.0))),
                status: None,
            })
            .collect();
        let r = score_predictions(&shifted, &truth, 11).unwrap();
        assert_eq!((r.mean_tiou, r.recall, r.precision), (0.0, 0.0, 0.0));
    }

    #[test]
    fn misaligned_prediction_rejected() {
        let truth = truth_seq(2);
        let p = vec![Prediction {
            frame_index: 7,
            curve: None,
            status: None,
        }];
        assert!(matches!(
            score_predictions(&p, &truth, 11),
            Err(Error::Misaligned(_))
        ));
    }

    #[test]
    fn truth_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut truth = truth_seq(2);
        truth.push(GroundTruthEntry {
            frame_index: 2,
            curve: PiecewiseCurve::polyline(
                Vec2::new(0.0, 0.0),
                Vec2::new(5.0, 5.0),
                Vec2::new(10.0, 0.0),
            )
            .unwrap(),
            radius: 2.5,
        });
        let path = dir.path().join("gt.csv");
        write_truth_csv(&truth, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("frame_index,tbreak,"));
        assert_eq!(read_truth_csv(&path).unwrap(), truth);
    }

    #[test]
    fn table_has_average_row() {
        let truth = truth_seq(2);
        let r = score_predictions(&[], &truth, 11).unwrap();
        let t = report_table(&[("a".into(), r.clone()), ("b".into(), r)]);
        assert!(t.lines().last().unwrap().starts_with("Average"));
    }

    proptest! {
        #[test]
        fn analytic_matches_pixel_counting(d in 0.0f64..2.5, r in 0.8f64..1.5) {
            let v = disk_iou(d, r);
            prop_assert!((pixel_iou(d, r, 0.01) - v).abs() < 1e-2);
        }

        #[test]
        fn symmetric_and_translation_invariant(
            ax in -20.0f64..20.0, ay in -20.0f64..20.0, bx in -20.0f64..20.0, by in -20.0f64..20.0,
            sx in -50.0f64..50.0, sy in -50.0f64..50.0, r in 1.0f64..8.0,
        ) {
            let a = PiecewiseCurve::segment(Vec2::new(ax, ay), Vec2::new(ax + 10.0, ay));
            let b = PiecewiseCurve::segment(Vec2::new(bx, by), Vec2::new(bx, by + 7.0));
            let ta = GroundTruthEntry { frame_index: 0, curve: a.clone(), radius: r };
            let tb = GroundTruthEntry { frame_index: 0, curve: b.clone(), radius: r };
            let ab = tiou(&a, &tb, 11).unwrap();
            prop_assert!((ab - tiou(&b, &ta, 11).unwrap()).abs() < 1e-12);
            let s = Vec2::new(sx, sy);
            let shifted = GroundTruthEntry { frame_index: 0, curve: b.translated(s), radius: r };
            prop_assert!((ab - tiou(&a.translated(s), &shifted, 11).unwrap()).abs() < 1e-12);
        }
    }
}
