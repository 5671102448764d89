//! Raster containers and the convolution/gradient primitives the solvers are
//! built on.
//!
//! Images are stored planar: all of channel 0 row-major, then channel 1, and
//! so on. Intensities are linear and nominally in `[0, 1]`.

mod conv;
pub(crate) mod fft;
pub mod io;

pub use conv::{
    convolve, convolve_with, correlate, correlate_with, gradient_adjoint, spatial_gradient,
    Boundary, ConvMethod, FFT_AREA_THRESHOLD,
};
pub(crate) use conv::{forward_diff, forward_diff_adjoint};
pub use fft::next_smooth_size;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Multi-channel 2-D intensity grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(channels))
            .ok_or_else(|| Error::DimensionOverflow(format!("{width}x{height}x{channels}")))?;
        if data.len() != expected {
            return Err(Error::SizeMismatch(format!(
                "data length {} != {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Image with every pixel set to `value` (one entry per channel).
    pub fn filled(width: usize, height: usize, value: &[f64]) -> Self {
        let plane = width * height;
        let mut data = Vec::with_capacity(plane * value.len());
        for &v in value {
            data.extend(std::iter::repeat_n(v, plane));
        }
        Self {
            width,
            height,
            channels: value.len(),
            data,
        }
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut img = Self::new(width, height, channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    img.data[(c * height + y) * width + x] = f(x, y, c);
                }
            }
        }
        img
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn plane_len(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn same_shape(&self, other: &RasterImage) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn clamp01(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    /// Copy with `n` channels; single-channel images are replicated.
    pub fn with_channels(&self, n: usize) -> Result<RasterImage> {
        if self.channels == n {
            return Ok(self.clone());
        }
        if self.channels != 1 {
            return Err(Error::SizeMismatch(format!(
                "cannot convert {} channels to {n}",
                self.channels
            )));
        }
        let mut data = Vec::with_capacity(self.data.len() * n);
        for _ in 0..n {
            data.extend_from_slice(&self.data);
        }
        RasterImage::from_data(self.width, self.height, n, data)
    }

    /// Channel mean as a single-channel image.
    pub fn to_gray(&self) -> RasterImage {
        let n = self.plane_len();
        let mut out = vec![0.0; n];
        for c in 0..self.channels {
            for (o, v) in out.iter_mut().zip(self.channel(c)) {
                *o += v;
            }
        }
        let k = 1.0 / self.channels.max(1) as f64;
        out.iter_mut().for_each(|v| *v *= k);
        RasterImage {
            width: self.width,
            height: self.height,
            channels: 1,
            data: out,
        }
    }

    /// Extract `rect` (which may extend beyond the image; outside pixels are zero).
    pub fn crop(&self, rect: Rect) -> RasterImage {
        let w = rect.width();
        let h = rect.height();
        let mut out = RasterImage::new(w, h, self.channels);
        for c in 0..self.channels {
            for y in 0..h {
                let sy = rect.y0 + y as i64;
                if sy < 0 || sy >= self.height as i64 {
                    continue;
                }
                for x in 0..w {
                    let sx = rect.x0 + x as i64;
                    if sx < 0 || sx >= self.width as i64 {
                        continue;
                    }
                    out.set(x, y, c, self.at(sx as usize, sy as usize, c));
                }
            }
        }
        out
    }

    /// Write `patch` into this image with its top-left corner at `(x0, y0)`,
    /// skipping pixels that fall outside.
    pub fn paste(&mut self, patch: &RasterImage, x0: i64, y0: i64) {
        let channels = self.channels.min(patch.channels);
        for c in 0..channels {
            for y in 0..patch.height {
                let ty = y0 + y as i64;
                if ty < 0 || ty >= self.height as i64 {
                    continue;
                }
                for x in 0..patch.width {
                    let tx = x0 + x as i64;
                    if tx < 0 || tx >= self.width as i64 {
                        continue;
                    }
                    self.set(tx as usize, ty as usize, c, patch.at(x, y, c));
                }
            }
        }
    }

    pub fn dot(&self, other: &RasterImage) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn full_rect(&self) -> Rect {
        Rect::new(0, 0, self.width as i64, self.height as i64)
    }
}

/// Half-open integer rectangle `[x0, x1) × [y0, y1)` in frame pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: i64,
    pub y0: i64,
    pub x1: i64,
    pub y1: i64,
}

impl Rect {
    pub const fn new(x0: i64, y0: i64, x1: i64, y1: i64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    /// Smallest rectangle containing every pixel whose center lies in the
    /// real box `[xmin, xmax] × [ymin, ymax]`.
    pub fn covering(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Self {
        Self {
            x0: xmin.floor() as i64,
            y0: ymin.floor() as i64,
            x1: xmax.ceil() as i64 + 1,
            y1: ymax.ceil() as i64 + 1,
        }
    }

    pub fn width(&self) -> usize {
        (self.x1 - self.x0).max(0) as usize
    }

    pub fn height(&self) -> usize {
        (self.y1 - self.y0).max(0) as usize
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn is_empty(&self) -> bool {
        self.x1 <= self.x0 || self.y1 <= self.y0
    }

    pub fn dilate(&self, margin: i64) -> Rect {
        Rect::new(
            self.x0 - margin,
            self.y0 - margin,
            self.x1 + margin,
            self.y1 + margin,
        )
    }

    pub fn intersect(&self, other: &Rect) -> Rect {
        Rect::new(
            self.x0.max(other.x0),
            self.y0.max(other.y0),
            self.x1.min(other.x1),
            self.y1.min(other.y1),
        )
    }

    pub fn union(&self, other: &Rect) -> Rect {
        if self.is_empty() {
            return *other;
        }
        if other.is_empty() {
            return *self;
        }
        Rect::new(
            self.x0.min(other.x0),
            self.y0.min(other.y0),
            self.x1.max(other.x1),
            self.y1.max(other.y1),
        )
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.x0 >= self.x0 && other.y0 >= self.y0 && other.x1 <= self.x1 && other.y1 <= self.y1
    }

    /// Scale about the center by `factor`.
    pub fn scaled(&self, factor: f64) -> Rect {
        let cx = 0.5 * (self.x0 + self.x1) as f64;
        let cy = 0.5 * (self.y0 + self.y1) as f64;
        let hw = 0.5 * self.width() as f64 * factor;
        let hh = 0.5 * self.height() as f64 * factor;
        Rect::new(
            (cx - hw).floor() as i64,
            (cy - hh).floor() as i64,
            (cx + hw).ceil() as i64,
            (cy + hh).ceil() as i64,
        )
    }

    pub fn frame(width: usize, height: usize) -> Rect {
        Rect::new(0, 0, width as i64, height as i64)
    }
}

/// Region of interest inside a frame, optionally restricted by a binary mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    rect: Rect,
    mask: Option<Vec<bool>>,
}

impl Region {
    pub fn new(rect: Rect, frame_width: usize, frame_height: usize) -> Result<Self> {
        if rect.is_empty() {
            return Err(Error::EmptyRegion);
        }
        if !Rect::frame(frame_width, frame_height).contains_rect(&rect) {
            return Err(Error::OutsideFrame(format!("{rect:?}")));
        }
        Ok(Self { rect, mask: None })
    }

    /// Clip `rect` to the frame; fails only when nothing remains.
    pub fn clipped(rect: Rect, frame_width: usize, frame_height: usize) -> Result<Self> {
        let r = rect.intersect(&Rect::frame(frame_width, frame_height));
        Self::new(r, frame_width, frame_height)
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.rect.area() {
            return Err(Error::SizeMismatch(format!(
                "region mask has {} entries, rectangle has {}",
                mask.len(),
                self.rect.area()
            )));
        }
        self.mask = Some(mask);
        Ok(self)
    }

    pub fn rect(&self) -> Rect {
        self.rect
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    /// Whether local pixel `(x, y)` of the rectangle belongs to the region.
    pub fn includes_local(&self, x: usize, y: usize) -> bool {
        match &self.mask {
            Some(m) => m[y * self.rect.width() + x],
            None => true,
        }
    }
}

/// Nonnegative single-channel blur kernel positioned in frame coordinates.
///
/// Weight `(i, j)` sits at frame pixel `(offset.0 + i, offset.1 + j)`. Used as
/// a convolution kernel the same position is read as a displacement, so a
/// 1×1 unit kernel at offset `(0, 0)` is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Psf {
    width: usize,
    height: usize,
    offset: (i64, i64),
    weights: Vec<f64>,
}

impl Psf {
    pub fn new(width: usize, height: usize, offset: (i64, i64), weights: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyKernel);
        }
        if weights.len() != width * height {
            return Err(Error::SizeMismatch(format!(
                "psf has {} weights for {width}x{height}",
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "psf weight {w} is not a finite nonnegative value"
            )));
        }
        Ok(Self {
            width,
            height,
            offset,
            weights,
        })
    }

    pub fn zeros(rect: Rect) -> Self {
        Self {
            width: rect.width().max(1),
            height: rect.height().max(1),
            offset: (rect.x0, rect.y0),
            weights: vec![0.0; rect.width().max(1) * rect.height().max(1)],
        }
    }

    pub fn impulse(x: i64, y: i64) -> Self {
        Self {
            width: 1,
            height: 1,
            offset: (x, y),
            weights: vec![1.0],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn offset(&self) -> (i64, i64) {
        self.offset
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn rect(&self) -> Rect {
        Rect::new(
            self.offset.0,
            self.offset.1,
            self.offset.0 + self.width as i64,
            self.offset.1 + self.height as i64,
        )
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn max_weight(&self) -> f64 {
        self.weights.iter().cloned().fold(0.0, f64::max)
    }

    pub fn norm_l2(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    #[inline]
    pub fn local(&self, i: usize, j: usize) -> f64 {
        self.weights[j * self.width + i]
    }

    /// Weight at frame pixel `(x, y)`, zero outside the raster.
    pub fn weight_at(&self, x: i64, y: i64) -> f64 {
        let i = x - self.offset.0;
        let j = y - self.offset.1;
        if i < 0 || j < 0 || i >= self.width as i64 || j >= self.height as i64 {
            0.0
        } else {
            self.weights[j as usize * self.width + i as usize]
        }
    }

    /// Weights resampled onto `rect` (zero where the raster does not reach).
    pub fn on_rect(&self, rect: Rect) -> Vec<f64> {
        let mut out = vec![0.0; rect.area()];
        let w = rect.width();
        for y in rect.y0..rect.y1 {
            for x in rect.x0..rect.x1 {
                out[(y - rect.y0) as usize * w + (x - rect.x0) as usize] = self.weight_at(x, y);
            }
        }
        out
    }

    /// L2 distance between two kernels over the union of their supports.
    pub fn distance_l2(&self, other: &Psf) -> f64 {
        let r = self.rect().union(&other.rect());
        self.on_rect(r)
            .iter()
            .zip(other.on_rect(r))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn scaled(&self, k: f64) -> Psf {
        Psf {
            weights: self.weights.iter().map(|w| w * k).collect(),
            ..self.clone()
        }
    }

    /// Sum of two kernels on the union of their rectangles.
    pub fn add(&self, other: &Psf) -> Psf {
        let r = self.rect().union(&other.rect());
        let weights = self
            .on_rect(r)
            .iter()
            .zip(other.on_rect(r))
            .map(|(a, b)| a + b)
            .collect();
        Psf {
            width: r.width(),
            height: r.height(),
            offset: (r.x0, r.y0),
            weights,
        }
    }

    /// Interpret a single-channel image as a kernel located at `offset`.
    pub fn from_image(img: &RasterImage, offset: (i64, i64)) -> Result<Psf> {
        let gray = if img.channels() == 1 {
            img.clone()
        } else {
            img.to_gray()
        };
        Psf::new(
            gray.width(),
            gray.height(),
            offset,
            gray.data().iter().map(|v| v.max(0.0)).collect(),
        )
    }

    /// Kernel raster as a single-channel image (offset dropped).
    pub fn to_image(&self) -> RasterImage {
        RasterImage::from_data(self.width, self.height, 1, self.weights.clone())
            .expect("psf raster is consistent")
    }
}
