//! Curve overlays drawn directly into raster images.

use tbd_core::curve::{PiecewiseCurve, Vec2};
use tbd_core::imaging::RasterImage;

const ARROW_LENGTH: f64 = 6.0;
const ARROW_ANGLE: f64 = 0.45;

fn plot(img: &mut RasterImage, p: Vec2, color: &[f64]) {
    let (x, y) = (p.x.round(), p.y.round());
    if x < 0.0 || y < 0.0 || x >= img.width() as f64 || y >= img.height() as f64 {
        return;
    }
    for (c, v) in color.iter().enumerate().take(img.channels()) {
        img.set(x as usize, y as usize, c, *v);
    }
}

fn line(img: &mut RasterImage, a: Vec2, b: Vec2, color: &[f64]) {
    let n = ((b - a).norm() * 2.0).ceil().max(1.0) as usize;
    for k in 0..=n {
        plot(img, a + (b - a) * (k as f64 / n as f64), color);
    }
}

/// Draw `curve` with an arrowhead at its end, the position at `t = 1`.
pub fn draw_curve(img: &mut RasterImage, curve: &PiecewiseCurve, color: &[f64]) {
    let n = (curve.length(64) * 2.0).ceil().max(2.0) as usize;
    let mut prev = curve.eval(0.0);
    for k in 1..=n {
        let p = curve.eval(k as f64 / n as f64);
        line(img, prev, p, color);
        prev = p;
    }
    let end = curve.end();
    let mut dir = curve.derivative(1.0);
    if dir.norm() < 1e-9 {
        dir = end - curve.start();
    }
    if dir.norm() < 1e-9 {
        return;
    }
    let back = -dir / dir.norm() * ARROW_LENGTH;
    for angle in [ARROW_ANGLE, -ARROW_ANGLE] {
        let (s, c) = f64::sin_cos(angle);
        let wing = Vec2::new(c * back.x - s * back.y, s * back.x + c * back.y);
        line(img, end, end + wing, color);
    }
}

/// Three-channel copy for drawing in color.
pub fn rgb(img: &RasterImage) -> RasterImage {
    match img.channels() {
        3 => img.clone(),
        1 => img.with_channels(3).expect("gray converts to rgb"),
        _ => RasterImage::from_fn(img.width(), img.height(), 3, |x, y, c| img.at(x, y, c.min(img.channels() - 1))),
    }
}
