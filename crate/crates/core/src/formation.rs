//! Forward image formation `I = H∗F + (1 − H∗M)·B` and curve rasterization.

use crate::curve::{PiecewiseCurve, Vec2};
use crate::error::{Error, Result};
use crate::imaging::fft::ConvGrid;
use crate::imaging::{Psf, RasterImage, Rect};
use num_complex::Complex64;

/// Uniform-in-t samples per curve piece used by [`rasterize_curve`].
pub const RASTER_SAMPLES_PER_PIECE: usize = 10_000;

/// Tolerance of the `0 ≤ F ≤ M ≤ 1` check.
pub const MODEL_TOL: f64 = 1e-9;

/// Object appearance `F` and mask `M` on a common square support centered on
/// the object position.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectModel {
    pub f: RasterImage,
    pub m: RasterImage,
}

impl ObjectModel {
    pub fn new(f: RasterImage, m: RasterImage) -> Result<Self> {
        if m.channels() != 1 {
            return Err(Error::SizeMismatch("mask must be single-channel".into()));
        }
        if f.width() != m.width() || f.height() != m.height() {
            return Err(Error::SizeMismatch(format!(
                "appearance {}x{} vs mask {}x{}",
                f.width(),
                f.height(),
                m.width(),
                m.height()
            )));
        }
        let model = Self { f, m };
        if let Some(v) = model.max_violation() {
            if v > MODEL_TOL {
                return Err(Error::InvalidArgument(format!(
                    "object model violates 0 <= F <= M <= 1 by {v:e}"
                )));
            }
        }
        Ok(model)
    }

    /// Model with `F ≡ value` and `M ≡ 1`, the cold-start initialization.
    pub fn uniform(side: usize, channels: usize, value: f64) -> Self {
        Self {
            f: RasterImage::filled(side, side, &vec![value; channels]),
            m: RasterImage::filled(side, side, &[1.0]),
        }
    }

    pub fn side(&self) -> usize {
        self.m.width()
    }

    /// Largest violation of the constraint set, `None` for an empty model.
    pub fn max_violation(&self) -> Option<f64> {
        let n = self.m.plane_len();
        if n == 0 {
            return None;
        }
        let mut worst: f64 = 0.0;
        let m = self.m.channel(0);
        for c in 0..self.f.channels() {
            for (fv, mv) in self.f.channel(c).iter().zip(m) {
                worst = worst.max(-fv).max(fv - mv).max(mv - 1.0).max(-mv);
            }
        }
        Some(worst)
    }

    /// Equivalent object diameter from the mask area.
    pub fn diameter(&self) -> f64 {
        let area: f64 = self.m.data().iter().sum();
        (4.0 * area / std::f64::consts::PI).sqrt()
    }

    /// Model from a square RGBA image: color is the appearance, alpha the mask.
    pub fn from_rgba(img: &RasterImage) -> Result<Self> {
        if img.channels() != 4 || img.width() != img.height() || img.width() == 0 {
            return Err(Error::InvalidArgument(format!(
                "template must be a square RGBA image, got {}x{} with {} channels",
                img.width(),
                img.height(),
                img.channels()
            )));
        }
        let s = img.width();
        let m = RasterImage::from_fn(s, s, 1, |x, y, _| img.at(x, y, 3));
        let f = RasterImage::from_fn(s, s, 3, |x, y, c| img.at(x, y, c) * img.at(x, y, 3));
        Self::new(f, m)
    }

    /// RGBA image holding the appearance and, in alpha, the mask.
    pub fn to_rgba(&self) -> RasterImage {
        let a = self.appearance();
        let k = a.channels();
        let s = self.side();
        RasterImage::from_fn(s, s, 4, |x, y, c| if c < 3 { a.at(x, y, c.min(k - 1)) } else { self.m.at(x, y, 0) })
    }

    /// Appearance `F / M`, zero where the mask is below 1e-3.
    pub fn appearance(&self) -> RasterImage {
        let s = self.side();
        RasterImage::from_fn(s, s, self.f.channels(), |x, y, c| {
            let m = self.m.at(x, y, 0);
            if m > 1e-3 {
                (self.f.at(x, y, c) / m).clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
    }

    /// Re-center onto a `side × side` support, cropping or zero-padding.
    pub fn resized(&self, side: usize) -> ObjectModel {
        let (w, h) = (self.m.width() as i64, self.m.height() as i64);
        let s = side as i64;
        let rect = Rect::new((w - s) / 2, (h - s) / 2, (w - s) / 2 + s, (h - s) / 2 + s);
        ObjectModel {
            f: self.f.crop(rect),
            m: self.m.crop(rect),
        }
    }
}

/// Odd support side `2·⌈d⌉ + 1` for an object of diameter `d`.
pub fn support_side(diameter: f64) -> usize {
    2 * diameter.max(1.0).ceil() as usize + 1
}

/// Anti-aliased ball of `radius` and uniform `color` centered on an odd
/// `side × side` support.
pub fn ball_model(radius: f64, color: &[f64], side: usize) -> Result<ObjectModel> {
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "radius {radius} must be positive"
        )));
    }
    if side % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "support side {side} must be odd"
        )));
    }
    const SUB: usize = 8;
    let c = (side / 2) as f64;
    let mut m = RasterImage::new(side, side, 1);
    for y in 0..side {
        for x in 0..side {
            let mut hits = 0usize;
            for sy in 0..SUB {
                for sx in 0..SUB {
                    let px = x as f64 - 0.5 + (sx as f64 + 0.5) / SUB as f64 - c;
                    let py = y as f64 - 0.5 + (sy as f64 + 0.5) / SUB as f64 - c;
                    if px * px + py * py <= radius * radius {
                        hits += 1;
                    }
                }
            }
            m.set(x, y, 0, hits as f64 / (SUB * SUB) as f64);
        }
    }
    let f = RasterImage::from_fn(side, side, color.len(), |x, y, ch| {
        color[ch] * m.at(x, y, 0)
    });
    ObjectModel::new(f, m)
}

/// Frame-sized contributions `H∗F` (per channel) and `H∗M`.
fn blur_model(
    f: &RasterImage,
    m: &RasterImage,
    h: &Psf,
    width: usize,
    height: usize,
) -> (RasterImage, RasterImage) {
    let side_w = m.width();
    let side_h = m.height();
    let (cx, cy) = ((side_w / 2) as i64, (side_h / 2) as i64);
    let full_w = h.width() + side_w - 1;
    let full_h = h.height() + side_h - 1;
    let origin = (h.offset().0 - cx, h.offset().1 - cy);
    let mut grid = ConvGrid::new(full_w, full_h);
    let hspec = grid.spectrum(h.weights(), h.width(), h.height());
    let mut buf = vec![Complex64::default(); grid.len()];
    let mut full = vec![0.0; full_w * full_h];

    let mut place =
        |src: &RasterImage, c: usize, grid: &mut ConvGrid, out: &mut RasterImage, oc: usize| {
            grid.load_real(&mut buf, src.channel(c), side_w, side_h, 0, 0);
            grid.forward(&mut buf);
            for (b, k) in buf.iter_mut().zip(&hspec) {
                *b *= k;
            }
            grid.inverse(&mut buf);
            grid.crop_real(&buf, &mut full, full_w, full_h, 0, 0);
            for j in 0..full_h {
                let y = origin.1 + j as i64;
                if y < 0 || y >= height as i64 {
                    continue;
                }
                for i in 0..full_w {
                    let x = origin.0 + i as i64;
                    if x < 0 || x >= width as i64 {
                        continue;
                    }
                    out.set(x as usize, y as usize, oc, full[j * full_w + i]);
                }
            }
        };

    let mut hf = RasterImage::new(width, height, f.channels());
    for c in 0..f.channels() {
        place(f, c, &mut grid, &mut hf, c);
    }
    let mut hm = RasterImage::new(width, height, 1);
    place(m, 0, &mut grid, &mut hm, 0);
    (hf, hm)
}

/// Compose a frame from an object model blurred by `h` over background `b`.
pub fn compose_frame(model: &ObjectModel, h: &Psf, b: &RasterImage) -> Result<RasterImage> {
    let (f, m) = (&model.f, &model.m);
    if f.channels() != b.channels() {
        return Err(Error::SizeMismatch(format!(
            "appearance has {} channels, background {}",
            f.channels(),
            b.channels()
        )));
    }
    let reach = (m.width().max(m.height()) / 2) as i64;
    let visible = Rect::frame(b.width(), b.height()).dilate(reach);
    if h.rect().intersect(&visible).is_empty() {
        return Err(Error::OutsideFrame(format!("psf at {:?}", h.rect())));
    }
    let (hf, hm) = blur_model(f, m, h, b.width(), b.height());
    let mut out = b.clone();
    let alpha = hm.channel(0);
    for c in 0..b.channels() {
        let bc = b.channel(c);
        let fc = hf.channel(c);
        for (i, o) in out.channel_mut(c).iter_mut().enumerate() {
            *o = fc[i] + (1.0 - alpha[i]) * bc[i];
        }
    }
    Ok(out)
}

/// Rasterize `curve` into a blur kernel of `total_mass` by uniform-in-t
/// sampling with bilinear splatting; mass per pixel is proportional to the
/// time the curve spends there.
pub fn rasterize_curve(
    curve: &PiecewiseCurve,
    frame_size: (usize, usize),
    total_mass: f64,
) -> Result<Psf> {
    rasterize_curve_with(curve, frame_size, total_mass, RASTER_SAMPLES_PER_PIECE)
}

pub fn rasterize_curve_with(
    curve: &PiecewiseCurve,
    frame_size: (usize, usize),
    total_mass: f64,
    samples_per_piece: usize,
) -> Result<Psf> {
    if !curve.is_finite() {
        return Err(Error::NonFinite("curve coefficients"));
    }
    if !(total_mass > 0.0) || !total_mass.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "total mass {total_mass} must be positive"
        )));
    }
    let n = samples_per_piece.max(1);
    let intervals: Vec<(usize, f64, f64)> = if curve.is_two_piece() {
        vec![(0, 0.0, curve.tbreak()), (1, curve.tbreak(), 1.0)]
    } else {
        vec![(0, 0.0, 1.0)]
    };
    let mut samples: Vec<(Vec2, f64)> = Vec::with_capacity(n * intervals.len());
    for &(k, t0, t1) in &intervals {
        let piece = &curve.pieces()[k];
        let dt = (t1 - t0) / n as f64;
        let mass = total_mass * dt;
        for s in 0..n {
            samples.push((piece.eval(t0 + (s as f64 + 0.5) * dt), mass));
        }
    }
    let (mut lo, mut hi) = (Vec2::repeat(f64::INFINITY), Vec2::repeat(f64::NEG_INFINITY));
    for (p, _) in &samples {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let rect = Rect::new(
        lo.x.floor() as i64,
        lo.y.floor() as i64,
        hi.x.floor() as i64 + 2,
        hi.y.floor() as i64 + 2,
    );
    let (fw, fh) = (frame_size.0 as i64, frame_size.1 as i64);
    let limit = Rect::new(0, 0, fw, fh).dilate(fw.max(fh).max(64));
    if !limit.contains_rect(&rect) {
        return Err(Error::DimensionOverflow(format!(
            "curve raster {rect:?} far outside the frame"
        )));
    }
    let w = rect.width();
    let mut weights = vec![0.0; rect.area()];
    for (p, mass) in samples {
        let x0 = p.x.floor();
        let y0 = p.y.floor();
        let fx = p.x - x0;
        let fy = p.y - y0;
        let i = (x0 as i64 - rect.x0) as usize;
        let j = (y0 as i64 - rect.y0) as usize;
        weights[j * w + i] += mass * (1.0 - fx) * (1.0 - fy);
        weights[j * w + i + 1] += mass * fx * (1.0 - fy);
        weights[(j + 1) * w + i] += mass * (1.0 - fx) * fy;
        weights[(j + 1) * w + i + 1] += mass * fx * fy;
    }
    Psf::new(rect.width(), rect.height(), (rect.x0, rect.y0), weights)
}
