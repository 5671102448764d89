//! Background maintenance and a difference-image detector for fast moving
//! objects, used to start tracking and to recover after a failure.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::curve::Vec2;
use crate::error::{Error, Result};
use crate::imaging::{RasterImage, Rect, Region};

/// Minimum component area used when the object size is unknown, pixels.
pub const DEFAULT_MIN_AREA: f64 = 12.0;
const REGION_MARGIN: i64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorParams {
    /// Threshold on the channel-summed absolute difference to the background.
    pub diff_threshold: f64,
    /// Smallest ratio of the principal axes of a component.
    pub min_elongation: f64,
    /// Frames in the background median.
    pub background_frames: usize,
    /// Growth factor of the search region per re-detection attempt.
    pub growth: f64,
    /// Enlarged attempts before searching the whole frame.
    pub attempts: usize,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            diff_threshold: 0.08,
            min_elongation: 1.5,
            background_frames: 5,
            growth: 1.5,
            attempts: 3,
        }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.diff_threshold > 0.0 && self.diff_threshold.is_finite()) {
            return Err(Error::InvalidArgument(format!("diff_threshold {} must be positive", self.diff_threshold)));
        }
        if !(self.min_elongation >= 1.0) {
            return Err(Error::InvalidArgument(format!("min_elongation {} must be at least 1", self.min_elongation)));
        }
        if self.background_frames == 0 {
            return Err(Error::InvalidArgument("background_frames must be positive".into()));
        }
        if !(self.growth > 1.0 && self.growth.is_finite()) {
            return Err(Error::InvalidArgument(format!("growth {} must exceed 1", self.growth)));
        }
        Ok(())
    }
}

/// Half the area of a disk of the given diameter.
pub fn min_area_for(diameter: f64) -> f64 {
    std::f64::consts::PI * (diameter / 2.0).powi(2) / 2.0
}

/// Ring of recent frames and their per-pixel median.
#[derive(Debug, Clone)]
pub struct BackgroundBuffer {
    capacity: usize,
    frames: VecDeque<RasterImage>,
    median: Option<RasterImage>,
}

impl BackgroundBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("background buffer needs room for a frame".into()));
        }
        Ok(Self {
            capacity,
            frames: VecDeque::with_capacity(capacity),
            median: None,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn median(&self) -> Option<&RasterImage> {
        self.median.as_ref()
    }

    /// Adds `frame`, evicting the oldest at capacity, and recomputes the
    /// median. With an even count the lower middle value is taken, which
    /// makes re-adding the median a no-op.
    pub fn update(&mut self, frame: &RasterImage) -> Result<()> {
        if let Some(first) = self.frames.front() {
            if !first.same_shape(frame) {
                return Err(Error::SizeMismatch(format!(
                    "frame {}x{}x{} vs background {}x{}x{}",
                    frame.width(),
                    frame.height(),
                    frame.channels(),
                    first.width(),
                    first.height(),
                    first.channels()
                )));
            }
        }
        if self.frames.len() == self.capacity {
            self.frames.pop_front();
        }
        self.frames.push_back(frame.clone());
        let n = self.frames.len();
        let rank = (n - 1) / 2;
        let mut out = RasterImage::new(frame.width(), frame.height(), frame.channels());
        let mut values = vec![0.0; n];
        for (i, o) in out.data_mut().iter_mut().enumerate() {
            for (v, f) in values.iter_mut().zip(&self.frames) {
                *v = f.data()[i];
            }
            *o = *values.select_nth_unstable_by(rank, f64::total_cmp).1;
        }
        self.median = Some(out);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FmoDetection {
    /// Bounding box of the detected component with a small margin.
    pub region: Region,
    /// Total-least-squares segment through the thinned component.
    pub segment: (Vec2, Vec2),
    /// Summed difference over the component.
    pub saliency: f64,
    /// Object diameter estimated from the component width, pixels.
    pub diameter: f64,
}

struct Component {
    pixels: Vec<(i64, i64)>,
    saliency: f64,
}

/// Channel-summed absolute difference of `frame` and `background` on `rect`.
fn difference(frame: &RasterImage, background: &RasterImage, rect: Rect) -> Vec<f64> {
    let mut out = vec![0.0; rect.area()];
    let w = rect.width();
    for c in 0..frame.channels() {
        let (f, b) = (frame.channel(c), background.channel(c));
        for j in 0..rect.height() {
            let row = (rect.y0 as usize + j) * frame.width() + rect.x0 as usize;
            for i in 0..w {
                out[j * w + i] += (f[row + i] - b[row + i]).abs();
            }
        }
    }
    out
}

/// 8-connected components of `mask` (`w` columns), in local coordinates.
fn components(mask: &[bool], diff: &[f64], w: usize) -> Vec<Component> {
    let h = mask.len() / w;
    let mut seen = vec![false; mask.len()];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut comp = Component { pixels: Vec::new(), saliency: 0.0 };
        while let Some(k) = stack.pop() {
            let (x, y) = ((k % w) as i64, (k / w) as i64);
            comp.pixels.push((x, y));
            comp.saliency += diff[k];
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let n = ny as usize * w + nx as usize;
                    if mask[n] && !seen[n] {
                        seen[n] = true;
                        stack.push(n);
                    }
                }
            }
        }
        out.push(comp);
    }
    out
}

/// Mean and covariance eigen-decomposition `(mean, λmax, λmin, major axis)`.
fn principal_axes(points: &[Vec2]) -> (Vec2, f64, f64, Vec2) {
    let n = points.len() as f64;
    let mean = points.iter().fold(Vec2::zeros(), |a, p| a + p) / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let d = p - mean;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    let (sxx, sxy, syy) = (sxx / n, sxy / n, syy / n);
    let tr = 0.5 * (sxx + syy);
    let disc = (0.25 * (sxx - syy).powi(2) + sxy * sxy).sqrt();
    let (l1, l2) = (tr + disc, tr - disc);
    let axis = if sxy.abs() > 1e-12 {
        Vec2::new(l1 - syy, sxy).normalize()
    } else if sxx >= syy {
        Vec2::new(1.0, 0.0)
    } else {
        Vec2::new(0.0, 1.0)
    };
    (mean, l1, l2, axis)
}

/// Zhang–Suen thinning of a binary image with `w` columns.
pub fn thin(mask: &[bool], w: usize) -> Vec<bool> {
    let h = mask.len() / w;
    let mut img = mask.to_vec();
    let at = |img: &[bool], x: i64, y: i64| x >= 0 && y >= 0 && x < w as i64 && y < h as i64 && img[y as usize * w + x as usize];
    loop {
        let mut changed = false;
        for pass in 0..2 {
            let mut remove = Vec::new();
            for y in 0..h as i64 {
                for x in 0..w as i64 {
                    if !at(&img, x, y) {
                        continue;
                    }
                    // Neighbors P2..P9 clockwise from north.
                    let p = [
                        at(&img, x, y - 1),
                        at(&img, x + 1, y - 1),
                        at(&img, x + 1, y),
                        at(&img, x + 1, y + 1),
                        at(&img, x, y + 1),
                        at(&img, x - 1, y + 1),
                        at(&img, x - 1, y),
                        at(&img, x - 1, y - 1),
                    ];
                    let b = p.iter().filter(|v| **v).count();
                    let a = (0..8).filter(|&i| !p[i] && p[(i + 1) % 8]).count();
                    if !(2..=6).contains(&b) || a != 1 {
                        continue;
                    }
                    let ok = if pass == 0 {
                        !(p[0] && p[2] && p[4]) && !(p[2] && p[4] && p[6])
                    } else {
                        !(p[0] && p[2] && p[6]) && !(p[0] && p[4] && p[6])
                    };
                    if ok {
                        remove.push(y as usize * w + x as usize);
                    }
                }
            }
            changed |= !remove.is_empty();
            for k in remove {
                img[k] = false;
            }
        }
        if !changed {
            return img;
        }
    }
}

/// Most salient elongated moving component inside `search`, if any.
pub fn detect_fmo_in(
    frame: &RasterImage,
    background: &RasterImage,
    search: Rect,
    params: &DetectorParams,
    min_area: f64,
) -> Result<Option<FmoDetection>> {
    if !frame.same_shape(background) {
        return Err(Error::SizeMismatch("frame and background differ in shape".into()));
    }
    let rect = search.intersect(&frame.full_rect());
    if rect.is_empty() {
        return Ok(None);
    }
    let diff = difference(frame, background, rect);
    let mask: Vec<bool> = diff.iter().map(|d| *d > params.diff_threshold).collect();
    let w = rect.width();
    let mut best: Option<(Component, f64, f64, Vec2)> = None;
    for comp in components(&mask, &diff, w) {
        if (comp.pixels.len() as f64) < min_area {
            continue;
        }
        let pts: Vec<Vec2> = comp.pixels.iter().map(|&(x, y)| Vec2::new(x as f64, y as f64)).collect();
        // A pixel contributes 1/12 of variance on its own.
        let (_, l1, l2, axis) = principal_axes(&pts);
        let (l1, l2) = (l1 + 1.0 / 12.0, l2 + 1.0 / 12.0);
        if (l1 / l2).sqrt() < params.min_elongation {
            continue;
        }
        if best.as_ref().map_or(true, |b| comp.saliency > b.0.saliency) {
            best = Some((comp, l1, l2, axis));
        }
    }
    let Some((comp, _, l2, _)) = best else { return Ok(None) };

    let (x0, y0) = comp.pixels.iter().fold((i64::MAX, i64::MAX), |a, p| (a.0.min(p.0), a.1.min(p.1)));
    let (x1, y1) = comp.pixels.iter().fold((i64::MIN, i64::MIN), |a, p| (a.0.max(p.0), a.1.max(p.1)));
    let bw = (x1 - x0 + 1) as usize;
    let mut local = vec![false; bw * (y1 - y0 + 1) as usize];
    for &(x, y) in &comp.pixels {
        local[(y - y0) as usize * bw + (x - x0) as usize] = true;
    }
    let skeleton = thin(&local, bw);
    let mut line_pts: Vec<Vec2> = skeleton
        .iter()
        .enumerate()
        .filter(|(_, v)| **v)
        .map(|(k, _)| Vec2::new((x0 + (k % bw) as i64 + rect.x0) as f64, (y0 + (k / bw) as i64 + rect.y0) as f64))
        .collect();
    if line_pts.len() < 2 {
        line_pts = comp.pixels.iter().map(|&(x, y)| Vec2::new((x + rect.x0) as f64, (y + rect.y0) as f64)).collect();
    }
    let (mean, _, _, axis) = principal_axes(&line_pts);
    let (lo, hi) = line_pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        let s = (p - mean).dot(&axis);
        (lo.min(s), hi.max(s))
    });
    let bbox = Rect::new(x0 + rect.x0, y0 + rect.y0, x1 + rect.x0 + 1, y1 + rect.y0 + 1).dilate(REGION_MARGIN);
    let region = Region::clipped(bbox, frame.width(), frame.height())?;
    Ok(Some(FmoDetection {
        region,
        segment: (mean + axis * lo, mean + axis * hi),
        saliency: comp.saliency,
        // Minor-axis variance of a disk of radius r is r²/4.
        diameter: (12.0 * l2).sqrt(),
    }))
}

/// Detection over the whole frame.
pub fn detect_fmo(
    frame: &RasterImage,
    background: &RasterImage,
    params: &DetectorParams,
    min_area: f64,
) -> Result<Option<FmoDetection>> {
    detect_fmo_in(frame, background, frame.full_rect(), params, min_area)
}

/// Search rectangles for re-detection around `rect`: geometrically enlarged
/// attempts followed by the whole frame.
pub fn search_schedule(rect: Rect, frame_width: usize, frame_height: usize, params: &DetectorParams) -> Vec<Rect> {
    let full = Rect::frame(frame_width, frame_height);
    let mut out = Vec::with_capacity(params.attempts + 1);
    let mut factor = 1.0;
    for _ in 0..params.attempts {
        factor *= params.growth;
        let r = rect.scaled(factor).intersect(&full);
        if !r.is_empty() && out.last() != Some(&r) {
            out.push(r);
        }
    }
    if out.last() != Some(&full) {
        out.push(full);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::PiecewiseCurve;
    use crate::formation::{ball_model, compose_frame, rasterize_curve};
    use crate::synth::procedural_texture;

    fn image(values: &[f64]) -> RasterImage {
        RasterImage::from_data(values.len(), 1, 1, values.to_vec()).unwrap()
    }

    #[test]
    fn identical_frames_give_themselves() {
        let f = procedural_texture(16, 12, 1, 0.3);
        let mut buf = BackgroundBuffer::new(3).unwrap();
        for _ in 0..3 {
            buf.update(&f).unwrap();
        }
        assert_eq!(buf.median().unwrap(), &f);
    }

    #[test]
    fn odd_count_median() {
        let mut buf = BackgroundBuffer::new(3).unwrap();
        for v in [0.9, 0.1, 0.2] {
            buf.update(&image(&[v])).unwrap();
        }
        assert_eq!(buf.median().unwrap().data(), &[0.2]);
    }

    #[test]
    fn capacity_evicts_the_oldest() {
        let mut buf = BackgroundBuffer::new(3).unwrap();
        for v in [0.0, 1.0, 1.0, 0.0, 0.0] {
            buf.update(&image(&[v])).unwrap();
        }
        assert_eq!(buf.len(), 3);
        assert_eq!(buf.median().unwrap().data(), &[0.0]);
    }

    #[test]
    fn re_adding_the_median_changes_nothing() {
        let mut buf = BackgroundBuffer::new(4).unwrap();
        for v in [[0.1, 0.7], [0.5, 0.2], [0.9, 0.3]] {
            buf.update(&image(&v)).unwrap();
        }
        for _ in 0..6 {
            let m = buf.median().unwrap().clone();
            buf.update(&m).unwrap();
            assert_eq!(buf.median().unwrap(), &m);
        }
    }

    #[test]
    fn mismatched_frame_is_rejected() {
        let mut buf = BackgroundBuffer::new(3).unwrap();
        buf.update(&image(&[0.0, 0.0])).unwrap();
        assert!(matches!(buf.update(&image(&[0.0])), Err(Error::SizeMismatch(_))));
    }

    #[test]
    fn thinning_reduces_a_bar_to_a_line() {
        let (w, h) = (20, 7);
        let mask: Vec<bool> = (0..w * h).map(|k| (2..18).contains(&(k % w)) && (2..5).contains(&(k / w))).collect();
        let sk = thin(&mask, w);
        let n = sk.iter().filter(|v| **v).count();
        assert!(n >= 10 && n <= 16, "{n}");
        assert!(sk.iter().enumerate().all(|(k, v)| !v || k / w == 3));
    }

    fn streak_scene() -> (RasterImage, RasterImage, PiecewiseCurve) {
        let b = procedural_texture(120, 90, 4, 0.2);
        let model = ball_model(4.0, &[0.95, 0.9, 0.1], 11).unwrap();
        let curve = PiecewiseCurve::segment(Vec2::new(30.0, 30.0), Vec2::new(70.0, 50.0));
        let h = rasterize_curve(&curve, (120, 90), 1.0).unwrap();
        (compose_frame(&model, &h, &b).unwrap(), b, curve)
    }

    #[test]
    fn background_alone_gives_nothing() {
        let (_, b, _) = streak_scene();
        assert!(detect_fmo(&b, &b, &DetectorParams::default(), min_area_for(8.0)).unwrap().is_none());
    }

    #[test]
    fn streak_is_found() {
        let (frame, b, curve) = streak_scene();
        let det = detect_fmo(&frame, &b, &DetectorParams::default(), min_area_for(8.0)).unwrap().unwrap();
        let r = det.region.rect();
        for k in 0..=100 {
            let p = curve.eval(k as f64 / 100.0);
            assert!(r.contains(p.x.round() as i64, p.y.round() as i64), "{p:?} outside {r:?}");
        }
        let (a, e) = det.segment;
        let d = (e - a).normalize();
        assert!(d.dot(&Vec2::new(2.0, 1.0).normalize()).abs() > 0.99);
        assert!(det.diameter > 4.0 && det.diameter < 14.0, "{}", det.diameter);
    }

    #[test]
    fn stationary_object_is_ignored() {
        let b = procedural_texture(80, 60, 4, 0.2);
        let model = ball_model(5.0, &[0.95, 0.9, 0.1], 13).unwrap();
        let h = rasterize_curve(&PiecewiseCurve::constant(Vec2::new(40.0, 30.0)), (80, 60), 1.0).unwrap();
        let frame = compose_frame(&model, &h, &b).unwrap();
        assert!(detect_fmo(&frame, &b, &DetectorParams::default(), min_area_for(10.0)).unwrap().is_none());
    }

    #[test]
    fn global_offset_does_not_matter() {
        let (frame, b, _) = streak_scene();
        let shift = |img: &RasterImage| {
            let mut o = img.clone();
            o.data_mut().iter_mut().for_each(|v| *v += 0.03);
            o
        };
        let p = DetectorParams::default();
        let a = detect_fmo(&frame, &b, &p, 25.0).unwrap().unwrap();
        let s = detect_fmo(&shift(&frame), &shift(&b), &p, 25.0).unwrap().unwrap();
        assert_eq!(a.region, s.region);
    }

    #[test]
    fn schedule_grows_to_the_full_frame() {
        let p = DetectorParams::default();
        let s = search_schedule(Rect::new(40, 40, 50, 50), 100, 100, &p);
        assert_eq!(s.len(), 4);
        assert!(s.windows(2).all(|w| w[1].contains_rect(&w[0])));
        assert_eq!(*s.last().unwrap(), Rect::frame(100, 100));
    }
}
