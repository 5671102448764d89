//! Causal long-term tracker: per-frame deblatting and trajectory fitting in
//! a predicted region, a consistency check, model update and prediction,
//! with difference-image re-detection when the check fails.

use serde::{Deserialize, Serialize};

use crate::curve::{CurveRecord, PiecewiseCurve, Vec2};
use crate::deblatting::{deblatt, DeblatParams, DeblatResult};
use crate::detector::{
    detect_fmo_in, min_area_for, search_schedule, BackgroundBuffer, DetectorParams, FmoDetection, DEFAULT_MIN_AREA,
};
use crate::error::{Error, Result};
use crate::formation::{ball_model, support_side, ObjectModel};
use crate::imaging::{Psf, RasterImage, Rect, Region};
use crate::trajfit::{consistency_check, fit_trajectory, FitParams, TrajectoryFit};

/// Frames buffered before the background median is trusted.
pub const WARMUP_FRAMES: usize = 3;
/// Parameter samples used for region bounds.
const REGION_SAMPLES: usize = 41;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FrameStatus {
    Tracked,
    Extrapolated,
    Redetected,
    Lost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TrackerMode {
    Uninitialized,
    Tracking,
    Lost,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub frame_index: usize,
    pub curve: Option<PiecewiseCurve>,
    pub h: Option<Psf>,
    pub f: Option<RasterImage>,
    pub m: Option<RasterImage>,
    pub fit_error: Option<f64>,
    pub status: FrameStatus,
}

/// Serializable summary of a [`FrameResult`], one JSON line per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_index: usize,
    pub status: FrameStatus,
    pub fit_error: Option<f64>,
    pub curve: Option<CurveRecord>,
}

impl From<&FrameResult> for FrameRecord {
    fn from(r: &FrameResult) -> Self {
        Self {
            frame_index: r.frame_index,
            status: r.status,
            fit_error: r.fit_error,
            curve: r.curve.as_ref().map(|c| CurveRecord::new(c, r.frame_index)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    pub deblat: DeblatParams,
    pub fit: FitParams,
    pub detector: DetectorParams,
    /// Forgetting factor of the appearance model; 1 keeps it fixed.
    pub gamma: f64,
    /// A fitted curve closer than this to the region border triggers a re-run, pixels.
    pub boundary_band: f64,
    pub max_reruns: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            deblat: DeblatParams::tracking(),
            fit: FitParams::default(),
            detector: DetectorParams::default(),
            gamma: 0.5,
            boundary_band: 1.0,
            max_reruns: 2,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        self.deblat.validate()?;
        self.fit.validate()?;
        self.detector.validate()?;
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidArgument(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if !(self.boundary_band >= 0.0 && self.boundary_band.is_finite()) {
            return Err(Error::InvalidArgument(format!("boundary_band {} must be >= 0", self.boundary_band)));
        }
        Ok(())
    }
}

/// `γ·prev + (1 − γ)·new`, pixelwise.
pub fn update_model(prev: &RasterImage, new: &RasterImage, gamma: f64) -> Result<RasterImage> {
    if !prev.same_shape(new) {
        return Err(Error::SizeMismatch("model update between different shapes".into()));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!("gamma {gamma} outside [0, 1]")));
    }
    let mut out = prev.clone();
    for (o, n) in out.data_mut().iter_mut().zip(new.data()) {
        *o = gamma * *o + (1.0 - gamma) * n;
    }
    Ok(out)
}

fn neighborhood(curve: &PiecewiseCurve, t0: f64, t1: f64, d: f64) -> Rect {
    let (lo, hi) = curve.bounds(t0, t1, REGION_SAMPLES);
    Rect::covering(lo.x - d, lo.y - d, hi.x + d, hi.y + d)
}

/// Region where the object is expected in the next frame: the extrapolated
/// curve over `t ∈ [1, 2]` dilated by `diameter` and clipped to the frame.
pub fn predict_region(curve: &PiecewiseCurve, diameter: f64, frame_size: (usize, usize)) -> Result<Region> {
    let (w, h) = (frame_size.0 as f64, frame_size.1 as f64);
    let inside = (0..REGION_SAMPLES).any(|k| {
        let p = curve.eval(1.0 + k as f64 / (REGION_SAMPLES - 1) as f64);
        p.x >= 0.0 && p.y >= 0.0 && p.x <= w - 1.0 && p.y <= h - 1.0
    });
    if !inside {
        return Err(Error::ObjectExit);
    }
    Region::clipped(neighborhood(curve, 1.0, 2.0, diameter), frame_size.0, frame_size.1).map_err(|_| Error::ObjectExit)
}

/// Whether any curve point lies within `band` of the border of `rect`.
fn touches_boundary(curve: &PiecewiseCurve, rect: Rect, band: f64) -> bool {
    (0..REGION_SAMPLES).any(|k| {
        let p = curve.eval(k as f64 / (REGION_SAMPLES - 1) as f64);
        p.x < rect.x0 as f64 + band
            || p.y < rect.y0 as f64 + band
            || p.x > (rect.x1 - 1) as f64 - band
            || p.y > (rect.y1 - 1) as f64 - band
    })
}

/// Object color seen through the blur along `path`: the frame is
/// `α·F + (1 − α)·B` there, with `α` the fraction of the exposure the
/// object covers a path pixel.
fn color_along(frame: &RasterImage, b: &RasterImage, path: &PiecewiseCurve, diameter: f64) -> Vec<f64> {
    let length = path.length(REGION_SAMPLES);
    let alpha = (diameter / length.max(1e-9)).min(1.0);
    let k = frame.channels();
    let mut sum = vec![0.0; k];
    let mut n = 0usize;
    for j in 0..REGION_SAMPLES {
        let p = path.eval(j as f64 / (REGION_SAMPLES - 1) as f64);
        let (x, y) = (p.x.round(), p.y.round());
        if x < 0.0 || y < 0.0 || x >= frame.width() as f64 || y >= frame.height() as f64 {
            continue;
        }
        let (x, y) = (x as usize, y as usize);
        for (c, s) in sum.iter_mut().enumerate() {
            let bv = b.at(x, y, c);
            *s += (bv + (frame.at(x, y, c) - bv) / alpha).clamp(0.0, 1.0);
        }
        n += 1;
    }
    if n == 0 {
        return vec![1.0; k];
    }
    sum.iter().map(|s| s / n as f64).collect()
}

struct Solve {
    deblat: DeblatResult,
    fit: TrajectoryFit,
}

/// Causal tracker state, advanced one frame at a time by [`Tracker::step`].
#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    template_locked: bool,
    model: Option<ObjectModel>,
    diameter: Option<f64>,
    background: BackgroundBuffer,
    region: Option<Region>,
    last_curve: Option<PiecewiseCurve>,
    /// Whether the direction of `last_curve` is known from its predecessor.
    oriented: bool,
    mode: TrackerMode,
    frame_index: usize,
    shape: Option<(usize, usize, usize)>,
}

impl Tracker {
    /// A tracker learning the object on the fly, or starting from
    /// `template` when given. With `gamma = 1` the model never changes.
    pub fn new(config: TrackerConfig, template: Option<ObjectModel>) -> Result<Self> {
        config.validate()?;
        let background = BackgroundBuffer::new(config.detector.background_frames)?;
        let diameter = template.as_ref().map(ObjectModel::diameter);
        Ok(Self {
            template_locked: config.gamma == 1.0 && template.is_some(),
            config,
            model: template,
            diameter,
            background,
            region: None,
            last_curve: None,
            oriented: false,
            mode: TrackerMode::Uninitialized,
            frame_index: 0,
            shape: None,
        })
    }

    pub fn mode(&self) -> TrackerMode {
        self.mode
    }

    pub fn model(&self) -> Option<&ObjectModel> {
        self.model.as_ref()
    }

    pub fn region(&self) -> Option<&Region> {
        self.region.as_ref()
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// Fill the background buffer with a known clean background, skipping
    /// the warm-up.
    pub fn seed_background(&mut self, b: &RasterImage) -> Result<()> {
        self.check_shape(b)?;
        for _ in 0..self.background.capacity() {
            self.background.update(b)?;
        }
        Ok(())
    }

    fn check_shape(&mut self, frame: &RasterImage) -> Result<()> {
        let shape = (frame.width(), frame.height(), frame.channels());
        match self.shape {
            Some(s) if s != shape => Err(Error::SizeMismatch(format!("frame {shape:?}, expected {s:?}"))),
            _ => {
                self.shape = Some(shape);
                Ok(())
            }
        }
    }

    fn frame_size(&self) -> (usize, usize) {
        let s = self.shape.expect("shape known after the first frame");
        (s.0, s.1)
    }

    fn diameter_or(&self, fallback: f64) -> f64 {
        self.diameter.unwrap_or(fallback)
    }

    /// Appearance, mask initialization and template weight for deblatting.
    fn appearance(&self, frame: &RasterImage, b: &RasterImage, hint: &PiecewiseCurve) -> Result<(RasterImage, RasterImage, f64)> {
        if let Some(model) = &self.model {
            let tmpl = model.appearance().with_channels(frame.channels().max(3))?;
            return Ok((tmpl, model.m.clone(), self.config.deblat.lambda_tmpl));
        }
        let d = self.diameter_or(DEFAULT_MIN_AREA.sqrt());
        let side = support_side(d);
        let color = color_along(frame, b, hint, d);
        let tmpl = RasterImage::filled(side, side, &color).with_channels(frame.channels().max(3))?;
        let m = ball_model(d / 2.0, &[1.0], side)?.m;
        Ok((tmpl, m, 0.0))
    }

    /// Deblatting and fitting in `rect`, re-run on the curve neighborhood
    /// while the curve touches the region border.
    fn solve(&self, frame: &RasterImage, b: &RasterImage, rect: Rect, hint: &PiecewiseCurve) -> Result<Option<(Solve, Region)>> {
        let (w, h) = self.frame_size();
        let (tmpl, m_init, lambda) = self.appearance(frame, b, hint)?;
        let params = DeblatParams {
            lambda_tmpl: lambda,
            ..self.config.deblat.clone()
        };
        let d = self.diameter_or(tmpl.width() as f64 / 2.0);
        let fit_params = FitParams {
            join_dist: self.config.fit.join_dist.or(Some(1.5 * d)),
            ..self.config.fit.clone()
        };
        let mut rect = rect;
        for attempt in 0..=self.config.max_reruns {
            let region = match Region::clipped(rect, w, h) {
                Ok(r) => r,
                Err(_) => return Ok(None),
            };
            let deblat = deblatt(frame, b, &region, &tmpl, &m_init, &params)?;
            let fit = match fit_trajectory(&deblat.h, &fit_params) {
                Ok(f) => f,
                Err(Error::NoSalientSegment) => return Ok(None),
                Err(e) => return Err(e),
            };
            if attempt < self.config.max_reruns && touches_boundary(&fit.curve, region.rect(), self.config.boundary_band) {
                let next = neighborhood(&fit.curve, 0.0, 1.0, d).intersect(&Rect::frame(w, h));
                if next != region.rect() && !next.is_empty() {
                    rect = next;
                    continue;
                }
            }
            return Ok(Some((Solve { deblat, fit }, region)));
        }
        unreachable!("the last attempt always returns")
    }

    /// Direct `curve` to continue the previous one.
    fn orient(&self, curve: PiecewiseCurve) -> (PiecewiseCurve, bool) {
        let Some(last) = &self.last_curve else { return (curve, false) };
        let anchors: Vec<Vec2> = if self.oriented { vec![last.end()] } else { vec![last.start(), last.end()] };
        let gap = |p: Vec2| anchors.iter().map(|a| (p - a).norm()).fold(f64::INFINITY, f64::min);
        if gap(curve.end()) < gap(curve.start()) {
            (curve.reversed(), true)
        } else {
            (curve, true)
        }
    }

    fn next_region(&self, curve: &PiecewiseCurve, oriented: bool) -> Result<Region> {
        let d = self.diameter_or(DEFAULT_MIN_AREA.sqrt());
        let size = self.frame_size();
        if oriented {
            return predict_region(curve, d, size);
        }
        let fwd = predict_region(curve, d, size);
        let back = predict_region(&curve.reversed(), d, size);
        match (fwd, back) {
            (Ok(a), Ok(b)) => Region::clipped(a.rect().union(&b.rect()), size.0, size.1),
            (Ok(a), Err(_)) | (Err(_), Ok(a)) => Ok(a),
            (Err(e), Err(_)) => Err(e),
        }
    }

    fn accept_model(&mut self, estimate: &DeblatResult) -> Result<()> {
        if self.template_locked {
            return Ok(());
        }
        let fresh = estimate.model();
        self.model = Some(match &self.model {
            Some(prev) if prev.f.same_shape(&fresh.f) && prev.m.same_shape(&fresh.m) => ObjectModel {
                f: update_model(&prev.f, &fresh.f, self.config.gamma)?,
                m: update_model(&prev.m, &fresh.m, self.config.gamma)?,
            },
            _ => fresh,
        });
        Ok(())
    }

    /// Record a curve for this frame and set up the next one.
    fn commit(&mut self, curve: PiecewiseCurve) -> Result<PiecewiseCurve> {
        let (curve, oriented) = self.orient(curve);
        match self.next_region(&curve, oriented) {
            Ok(r) => {
                self.region = Some(r);
                self.mode = TrackerMode::Tracking;
            }
            Err(Error::ObjectExit) => {
                self.region = None;
                self.mode = TrackerMode::Lost;
            }
            Err(e) => return Err(e),
        }
        self.last_curve = Some(curve.clone());
        self.oriented = oriented;
        Ok(curve)
    }

    fn result(&self, status: FrameStatus, curve: Option<PiecewiseCurve>, solve: Option<&Solve>) -> FrameResult {
        FrameResult {
            frame_index: self.frame_index,
            curve,
            h: solve.map(|s| s.deblat.h.clone()),
            f: solve.map(|s| s.deblat.f.clone()),
            m: solve.map(|s| s.deblat.m.clone()),
            fit_error: solve.map(|s| s.fit.fit_error),
            status,
        }
    }

    /// Search `rects` in order with the difference detector, then solve in
    /// the detected region.
    fn redetect(&mut self, frame: &RasterImage, b: &RasterImage, rects: &[Rect]) -> Result<Option<FrameResult>> {
        let min_area = self.diameter.map_or(DEFAULT_MIN_AREA, min_area_for);
        let mut found: Option<FmoDetection> = None;
        for &r in rects {
            if let Some(det) = detect_fmo_in(frame, b, r, &self.config.detector, min_area)? {
                found = Some(det);
                break;
            }
        }
        let Some(det) = found else { return Ok(None) };
        if self.diameter.is_none() {
            self.diameter = Some(det.diameter.max(1.0));
        }
        let coarse = PiecewiseCurve::segment(det.segment.0, det.segment.1);
        let solved = self.solve(frame, b, det.region.rect(), &coarse)?;
        match solved {
            Some((s, _)) if consistency_check(s.fit.fit_error, &self.config.fit) => {
                self.accept_model(&s.deblat)?;
                let curve = self.commit(s.fit.curve.clone())?;
                Ok(Some(self.result(FrameStatus::Redetected, Some(curve), Some(&s))))
            }
            other => {
                let curve = self.commit(coarse)?;
                Ok(Some(self.result(FrameStatus::Redetected, Some(curve), other.as_ref().map(|(s, _)| s))))
            }
        }
    }

    fn track(&mut self, frame: &RasterImage, b: &RasterImage) -> Result<FrameResult> {
        if self.mode != TrackerMode::Tracking {
            let full = Rect::frame(frame.width(), frame.height());
            return Ok(match self.redetect(frame, b, &[full])? {
                Some(r) => r,
                None => {
                    self.mode = TrackerMode::Lost;
                    self.result(FrameStatus::Lost, None, None)
                }
            });
        }
        let region = self.region.clone().expect("tracking mode has a region");
        let last = self.last_curve.clone().expect("tracking mode has a curve");
        let hint = last.extrapolated_next();
        let solved = self.solve(frame, b, region.rect(), &hint)?;
        if let Some((s, _)) = &solved {
            if consistency_check(s.fit.fit_error, &self.config.fit) {
                self.accept_model(&s.deblat)?;
                let curve = self.commit(s.fit.curve.clone())?;
                return Ok(self.result(FrameStatus::Tracked, Some(curve), Some(s)));
            }
        }
        let (w, h) = self.frame_size();
        let rects = search_schedule(region.rect(), w, h, &self.config.detector);
        if let Some(r) = self.redetect(frame, b, &rects)? {
            return Ok(r);
        }
        self.mode = TrackerMode::Lost;
        self.region = None;
        self.last_curve = Some(hint.clone());
        self.oriented = false;
        Ok(self.result(FrameStatus::Extrapolated, Some(hint), solved.as_ref().map(|(s, _)| s)))
    }

    /// Process the next frame.
    pub fn step(&mut self, frame: &RasterImage) -> Result<FrameResult> {
        self.check_shape(frame)?;
        if !frame.is_finite() {
            return Err(Error::NonFinite("frame"));
        }
        let warm = self.background.len() >= WARMUP_FRAMES.min(self.background.capacity());
        let result = if warm {
            let b = self.background.median().expect("warm buffer has a median").clone();
            let r = self.track(frame, &b)?;
            self.background.update(&self.masked(frame, &b, r.curve.as_ref()))?;
            r
        } else {
            self.background.update(frame)?;
            self.result(FrameStatus::Lost, None, None)
        };
        self.frame_index += 1;
        Ok(result)
    }

    /// `frame` with the neighborhood of the object replaced by `b`.
    fn masked(&self, frame: &RasterImage, b: &RasterImage, curve: Option<&PiecewiseCurve>) -> RasterImage {
        let Some(curve) = curve else { return frame.clone() };
        let d = self.diameter_or(DEFAULT_MIN_AREA.sqrt());
        let rect = neighborhood(curve, 0.0, 1.0, d).intersect(&frame.full_rect());
        if rect.is_empty() {
            return frame.clone();
        }
        let mut out = frame.clone();
        out.paste(&b.crop(rect), rect.x0, rect.y0);
        out
    }
}

/// Run a fresh tracker over every frame.
pub fn track_frames(frames: &[RasterImage], config: &TrackerConfig, template: Option<ObjectModel>) -> Result<Vec<FrameResult>> {
    let mut tracker = Tracker::new(config.clone(), template)?;
    frames.iter().map(|f| tracker.step(f)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_update_extremes() {
        let prev = RasterImage::filled(3, 3, &[0.2]);
        let new = RasterImage::filled(3, 3, &[0.6]);
        assert_eq!(update_model(&prev, &new, 0.0).unwrap(), new);
        assert_eq!(update_model(&prev, &new, 1.0).unwrap(), prev);
        let half = update_model(&prev, &new, 0.5).unwrap();
        assert!(half.data().iter().all(|v| (v - 0.4).abs() < 1e-15));
        assert!(update_model(&prev, &RasterImage::filled(2, 2, &[0.0]), 0.5).is_err());
    }

    #[test]
    fn static_curve_region_is_its_neighborhood() {
        let c = PiecewiseCurve::constant(Vec2::new(50.0, 40.0));
        let r = predict_region(&c, 6.0, (200, 100)).unwrap().rect();
        assert_eq!(r, Rect::covering(44.0, 34.0, 56.0, 46.0));
    }

    #[test]
    fn linear_motion_region_is_ahead() {
        let c = PiecewiseCurve::segment(Vec2::new(20.0, 50.0), Vec2::new(50.0, 50.0));
        let r = predict_region(&c, 8.0, (300, 100)).unwrap().rect();
        let cx = 0.5 * (r.x0 + r.x1 - 1) as f64;
        assert!((cx - (20.0 + 45.0)).abs() <= 1.0, "{r:?}");
    }

    #[test]
    fn exiting_curve_is_reported() {
        let c = PiecewiseCurve::segment(Vec2::new(80.0, 50.0), Vec2::new(130.0, 50.0));
        assert!(matches!(predict_region(&c, 5.0, (100, 100)), Err(Error::ObjectExit)));
    }

    #[test]
    fn boundary_touch_uses_the_band() {
        let rect = Rect::new(0, 0, 20, 20);
        let inner = PiecewiseCurve::segment(Vec2::new(5.0, 5.0), Vec2::new(15.0, 15.0));
        let edge = PiecewiseCurve::segment(Vec2::new(5.0, 5.0), Vec2::new(18.5, 10.0));
        assert!(!touches_boundary(&inner, rect, 1.0));
        assert!(touches_boundary(&edge, rect, 1.0));
    }

    #[test]
    fn config_rejects_bad_gamma() {
        let c = TrackerConfig { gamma: 1.5, ..TrackerConfig::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn frame_size_change_is_an_error() {
        let mut t = Tracker::new(TrackerConfig::default(), None).unwrap();
        t.step(&RasterImage::new(10, 10, 3)).unwrap();
        assert!(matches!(t.step(&RasterImage::new(12, 10, 3)), Err(Error::SizeMismatch(_))));
    }

    #[test]
    fn warm_up_frames_are_lost() {
        let mut t = Tracker::new(TrackerConfig::default(), None).unwrap();
        for _ in 0..WARMUP_FRAMES {
            let r = t.step(&RasterImage::new(10, 10, 3)).unwrap();
            assert_eq!(r.status, FrameStatus::Lost);
            assert!(r.curve.is_none());
        }
    }
}
