//! Browser bindings for three small demos: deblatting a synthetic frame,
//! fitting a trajectory to a hand-drawn blur, and the disk TIoU.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tbd_core::curve::{Piece, PiecewiseCurve, Vec2};
use tbd_core::deblatting::{deblatt, DeblatParams};
use tbd_core::eval::disk_iou;
use tbd_core::formation::{ball_model, compose_frame, rasterize_curve, support_side};
use tbd_core::imaging::{Psf, RasterImage, Region};
use tbd_core::synth::procedural_texture;
use tbd_core::trajfit::{fit_trajectory, FitParams};
use wasm_bindgen::prelude::*;

const SCENE_WIDTH: usize = 200;
const SCENE_HEIGHT: usize = 150;
const BALL_RADIUS: f64 = 6.0;
const CURVE_SAMPLES: usize = 64;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn rgba_bytes(img: &RasterImage) -> Vec<u8> {
    let k = img.channels();
    let mut out = Vec::with_capacity(img.plane_len() * 4);
    for y in 0..img.height() {
        for x in 0..img.width() {
            for c in 0..3 {
                out.push((img.at(x, y, c.min(k - 1)).clamp(0.0, 1.0) * 255.0).round() as u8);
            }
            out.push(255);
        }
    }
    out
}

/// Blur kernel over the whole canvas, scaled to its peak.
fn psf_bytes(h: &Psf, width: usize, height: usize) -> Vec<u8> {
    let peak = h.max_weight().max(1e-12);
    let img = RasterImage::from_fn(width, height, 1, |x, y, _| h.weight_at(x as i64, y as i64) / peak);
    rgba_bytes(&img)
}

fn samples(curve: &PiecewiseCurve) -> Vec<f64> {
    (0..CURVE_SAMPLES)
        .flat_map(|k| {
            let p = curve.eval(k as f64 / (CURVE_SAMPLES - 1) as f64);
            [p.x, p.y]
        })
        .collect()
}

/// Result of [`deblatt_scene`]: images as RGBA bytes and curves as
/// flattened `x, y` samples.
#[wasm_bindgen]
pub struct Scene {
    frame: Vec<u8>,
    blur: Vec<u8>,
    truth: Vec<f64>,
    fitted: Vec<f64>,
    fit_error: f64,
    blur_error: f64,
}

#[wasm_bindgen]
impl Scene {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        SCENE_WIDTH
    }
    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        SCENE_HEIGHT
    }
    pub fn frame(&self) -> Vec<u8> {
        self.frame.clone()
    }
    pub fn blur(&self) -> Vec<u8> {
        self.blur.clone()
    }
    pub fn truth(&self) -> Vec<f64> {
        self.truth.clone()
    }
    pub fn fitted(&self) -> Vec<f64> {
        self.fitted.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn fit_error(&self) -> f64 {
        self.fit_error
    }
    /// Relative L2 error of the estimated blur against the true one.
    #[wasm_bindgen(getter)]
    pub fn blur_error(&self) -> f64 {
        self.blur_error
    }
}

/// Render a ball moving `length` pixels at `angle_deg` with a sideways
/// `bend`, add noise, then recover its blur and trajectory.
#[wasm_bindgen]
pub fn deblatt_scene(length: f64, angle_deg: f64, bend: f64, noise: f64, seed: u32) -> Result<Scene, JsError> {
    let (w, h) = (SCENE_WIDTH, SCENE_HEIGHT);
    let dir = Vec2::new(angle_deg.to_radians().cos(), angle_deg.to_radians().sin());
    let normal = Vec2::new(-dir.y, dir.x);
    let center = Vec2::new(w as f64 / 2.0, h as f64 / 2.0);
    let start = center - dir * (length / 2.0) - normal * (bend / 2.0);
    let curve = PiecewiseCurve::single(Piece::new(start, dir * length + normal * (4.0 * bend), normal * (-4.0 * bend)));

    let model = ball_model(BALL_RADIUS, &[0.95, 0.55, 0.1], support_side(2.0 * BALL_RADIUS)).map_err(js_err)?;
    let psf = rasterize_curve(&curve, (w, h), 1.0).map_err(js_err)?;
    let b = procedural_texture(w, h, 5, 0.25);
    let mut frame = compose_frame(&model, &psf, &b).map_err(js_err)?;
    if noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
        let normal = Normal::new(0.0, noise).map_err(js_err)?;
        for v in frame.data_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    frame.clamp01();

    let region = Region::clipped(psf.rect().dilate(model.side() as i64 / 2 + 4), w, h).map_err(js_err)?;
    let est = deblatt(&frame, &b, &region, &model.appearance(), &model.m, &DeblatParams::tracking()).map_err(js_err)?;
    let fit = fit_trajectory(&est.h, &FitParams::default()).map_err(js_err)?;
    Ok(Scene {
        frame: rgba_bytes(&frame),
        blur: psf_bytes(&est.h, w, h),
        truth: samples(&curve),
        fitted: samples(&fit.curve),
        fit_error: fit.fit_error,
        blur_error: est.h.distance_l2(&psf) / psf.norm_l2(),
    })
}

/// Blur kernel of a stroke given as flattened `x, y` points: equal time per
/// unit length, splatted bilinearly.
fn stroke_psf(points: &[f64], width: usize, height: usize) -> Result<Psf, String> {
    if points.len() < 4 || points.len() % 2 != 0 {
        return Err("a stroke needs at least two points".into());
    }
    let mut weights = vec![0.0; width * height];
    let mut splat = |p: Vec2, w: f64| {
        let (x0, y0) = (p.x.floor(), p.y.floor());
        let (fx, fy) = (p.x - x0, p.y - y0);
        for (dx, dy, k) in [(0, 0, (1.0 - fx) * (1.0 - fy)), (1, 0, fx * (1.0 - fy)), (0, 1, (1.0 - fx) * fy), (1, 1, fx * fy)] {
            let (x, y) = (x0 as i64 + dx, y0 as i64 + dy);
            if x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height {
                weights[y as usize * width + x as usize] += w * k;
            }
        }
    };
    for pair in points.chunks(2).collect::<Vec<_>>().windows(2) {
        let (a, b) = (Vec2::new(pair[0][0], pair[0][1]), Vec2::new(pair[1][0], pair[1][1]));
        let n = ((b - a).norm() * 10.0).ceil().max(1.0) as usize;
        for k in 0..n {
            splat(a + (b - a) * ((k as f64 + 0.5) / n as f64), (b - a).norm() / n as f64);
        }
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err("the stroke has zero length".into());
    }
    weights.iter_mut().for_each(|v| *v /= total);
    Psf::new(width, height, (0, 0), weights).map_err(|e| e.to_string())
}

/// Result of [`fit_stroke`].
#[wasm_bindgen]
pub struct StrokeFit {
    blur: Vec<u8>,
    fitted: Vec<f64>,
    fit_error: f64,
    pieces: usize,
}

#[wasm_bindgen]
impl StrokeFit {
    pub fn blur(&self) -> Vec<u8> {
        self.blur.clone()
    }
    pub fn fitted(&self) -> Vec<f64> {
        self.fitted.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn fit_error(&self) -> f64 {
        self.fit_error
    }
    #[wasm_bindgen(getter)]
    pub fn pieces(&self) -> usize {
        self.pieces
    }
}

/// Fit a piecewise-quadratic trajectory to a hand-drawn stroke.
#[wasm_bindgen]
pub fn fit_stroke(points: Vec<f64>, width: usize, height: usize) -> Result<StrokeFit, JsError> {
    let h = stroke_psf(&points, width, height).map_err(|e| JsError::new(&e))?;
    let fit = fit_trajectory(&h, &FitParams::default()).map_err(js_err)?;
    Ok(StrokeFit {
        blur: psf_bytes(&h, width, height),
        fitted: samples(&fit.curve),
        fit_error: fit.fit_error,
        pieces: fit.curve.pieces().len(),
    })
}

/// TIoU of a ball of `radius` tracked with a constant `offset` error.
#[wasm_bindgen]
pub fn constant_offset_tiou(offset: f64, radius: f64) -> f64 {
    disk_iou(offset, radius)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scene_recovers_a_straight_blur() {
        let s = deblatt_scene(30.0, 20.0, 0.0, 0.0, 1).unwrap_or_else(|_| panic!("scene fails"));
        assert_eq!(s.frame().len(), SCENE_WIDTH * SCENE_HEIGHT * 4);
        assert!(s.blur_error() < 0.3, "{}", s.blur_error());
        let (t, f) = (s.truth(), s.fitted());
        let mid = CURVE_SAMPLES; // x, y of sample CURVE_SAMPLES / 2
        let d = ((t[mid] - f[mid]).powi(2) + (t[mid + 1] - f[mid + 1]).powi(2)).sqrt();
        assert!(d < 1.5, "{d}");
    }

    #[test]
    fn corner_stroke_fits_two_pieces() {
        let pts = vec![10.0, 10.0, 40.0, 50.0, 70.0, 12.0];
        let fit = fit_stroke(pts, 80, 60).unwrap_or_else(|_| panic!("fit fails"));
        assert_eq!(fit.pieces(), 2);
        assert!(fit.fit_error() < 0.6);
    }

    #[test]
    fn stroke_needs_two_points() {
        assert!(stroke_psf(&[1.0, 2.0], 10, 10).is_err());
    }

    #[test]
    fn offset_by_radius() {
        assert!((constant_offset_tiou(5.0, 5.0) - 0.243).abs() < 1e-3);
    }
}
