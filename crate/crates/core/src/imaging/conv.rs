use num_complex::Complex64;

use super::fft::ConvGrid;
use super::{Psf, RasterImage};
use crate::error::{Error, Result};

/// Kernels with more taps than this go through the FFT path under
/// [`ConvMethod::Auto`].
pub const FFT_AREA_THRESHOLD: usize = 49;

/// How samples outside the image are extended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Boundary {
    #[default]
    Zero,
    Replicate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConvMethod {
    #[default]
    Auto,
    Spatial,
    Fft,
}

/// Same-size convolution: `out(p) = Σ_k K[k] · img(p − offset − k)`, applied
/// per channel.
pub fn convolve(image: &RasterImage, kernel: &Psf, boundary: Boundary) -> Result<RasterImage> {
    convolve_with(image, kernel, boundary, ConvMethod::Auto)
}

/// Exact adjoint of [`convolve`] under the same boundary rule.
pub fn correlate(image: &RasterImage, kernel: &Psf, boundary: Boundary) -> Result<RasterImage> {
    correlate_with(image, kernel, boundary, ConvMethod::Auto)
}

fn check(image: &RasterImage, kernel: &Psf) -> Result<()> {
    if kernel.weights().is_empty() {
        return Err(Error::EmptyKernel);
    }
    let ext_w = image.width().checked_add(kernel.width());
    let ext_h = image.height().checked_add(kernel.height());
    match (ext_w, ext_h) {
        (Some(w), Some(h)) if w.checked_mul(h).is_some() && w < (1 << 24) && h < (1 << 24) => {
            Ok(())
        }
        _ => Err(Error::DimensionOverflow(format!(
            "{}x{} image with {}x{} kernel",
            image.width(),
            image.height(),
            kernel.width(),
            kernel.height()
        ))),
    }
}

fn use_fft(kernel: &Psf, method: ConvMethod) -> bool {
    match method {
        ConvMethod::Auto => kernel.width() * kernel.height() > FFT_AREA_THRESHOLD,
        ConvMethod::Spatial => false,
        ConvMethod::Fft => true,
    }
}

#[inline]
fn source_index(s: i64, n: usize, boundary: Boundary) -> Option<usize> {
    if s >= 0 && (s as usize) < n {
        Some(s as usize)
    } else {
        match boundary {
            Boundary::Zero => None,
            Boundary::Replicate => Some(s.clamp(0, n as i64 - 1) as usize),
        }
    }
}

pub fn convolve_with(
    image: &RasterImage,
    kernel: &Psf,
    boundary: Boundary,
    method: ConvMethod,
) -> Result<RasterImage> {
    check(image, kernel)?;
    if use_fft(kernel, method) {
        Ok(convolve_fft(image, kernel, boundary))
    } else {
        Ok(convolve_spatial(image, kernel, boundary))
    }
}

pub fn correlate_with(
    image: &RasterImage,
    kernel: &Psf,
    boundary: Boundary,
    method: ConvMethod,
) -> Result<RasterImage> {
    check(image, kernel)?;
    if use_fft(kernel, method) {
        Ok(correlate_fft(image, kernel, boundary))
    } else {
        Ok(correlate_spatial(image, kernel, boundary))
    }
}

fn convolve_spatial(image: &RasterImage, kernel: &Psf, boundary: Boundary) -> RasterImage {
    let (w, h) = (image.width(), image.height());
    let (ox, oy) = kernel.offset();
    let mut out = RasterImage::new(w, h, image.channels());
    for c in 0..image.channels() {
        let src = image.channel(c);
        let dst = out.channel_mut(c);
        for j in 0..kernel.height() {
            for i in 0..kernel.width() {
                let k = kernel.local(i, j);
                if k == 0.0 {
                    continue;
                }
                let dx = ox + i as i64;
                let dy = oy + j as i64;
                for y in 0..h {
                    let Some(sy) = source_index(y as i64 - dy, h, boundary) else {
                        continue;
                    };
                    for x in 0..w {
                        if let Some(sx) = source_index(x as i64 - dx, w, boundary) {
                            dst[y * w + x] += k * src[sy * w + sx];
                        }
                    }
                }
            }
        }
    }
    out
}

fn correlate_spatial(image: &RasterImage, kernel: &Psf, boundary: Boundary) -> RasterImage {
    let (w, h) = (image.width(), image.height());
    let (ox, oy) = kernel.offset();
    let mut out = RasterImage::new(w, h, image.channels());
    for c in 0..image.channels() {
        let src = image.channel(c);
        let dst = out.channel_mut(c);
        for j in 0..kernel.height() {
            for i in 0..kernel.width() {
                let k = kernel.local(i, j);
                if k == 0.0 {
                    continue;
                }
                let dx = ox + i as i64;
                let dy = oy + j as i64;
                for y in 0..h {
                    let Some(sy) = source_index(y as i64 - dy, h, boundary) else {
                        continue;
                    };
                    for x in 0..w {
                        if let Some(sx) = source_index(x as i64 - dx, w, boundary) {
                            dst[sy * w + sx] += k * src[y * w + x];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Geometry of the boundary-extended source image for the FFT route.
struct Extension {
    /// First source coordinate covered by the extension.
    sx0: i64,
    sy0: i64,
    ew: usize,
    eh: usize,
}

impl Extension {
    fn new(image: &RasterImage, kernel: &Psf) -> Self {
        let (ox, oy) = kernel.offset();
        Self {
            sx0: -ox - (kernel.width() as i64 - 1),
            sy0: -oy - (kernel.height() as i64 - 1),
            ew: image.width() + kernel.width() - 1,
            eh: image.height() + kernel.height() - 1,
        }
    }
}

fn convolve_fft(image: &RasterImage, kernel: &Psf, boundary: Boundary) -> RasterImage {
    let (w, h) = (image.width(), image.height());
    let (kw, kh) = (kernel.width(), kernel.height());
    let ext = Extension::new(image, kernel);
    let mut grid = ConvGrid::new(ext.ew + kw - 1, ext.eh + kh - 1);
    let kspec = grid.spectrum(kernel.weights(), kw, kh);
    let mut out = RasterImage::new(w, h, image.channels());
    let mut extended = vec![0.0; ext.ew * ext.eh];
    let mut buf = vec![Complex64::default(); grid.len()];
    for c in 0..image.channels() {
        let src = image.channel(c);
        for v in 0..ext.eh {
            let sy = source_index(ext.sy0 + v as i64, h, boundary);
            for u in 0..ext.ew {
                let sx = source_index(ext.sx0 + u as i64, w, boundary);
                extended[v * ext.ew + u] = match (sx, sy) {
                    (Some(sx), Some(sy)) => src[sy * w + sx],
                    _ => 0.0,
                };
            }
        }
        grid.load_real(&mut buf, &extended, ext.ew, ext.eh, 0, 0);
        grid.forward(&mut buf);
        for (b, k) in buf.iter_mut().zip(&kspec) {
            *b *= k;
        }
        grid.inverse(&mut buf);
        grid.crop_real(&buf, out.channel_mut(c), w, h, kw - 1, kh - 1);
    }
    out
}

fn correlate_fft(image: &RasterImage, kernel: &Psf, boundary: Boundary) -> RasterImage {
    let (w, h) = (image.width(), image.height());
    let (kw, kh) = (kernel.width(), kernel.height());
    let ext = Extension::new(image, kernel);
    let mut grid = ConvGrid::new(ext.ew + kw - 1, ext.eh + kh - 1);
    let kspec = grid.spectrum(kernel.weights(), kw, kh);
    let mut out = RasterImage::new(w, h, image.channels());
    let mut adj_ext = vec![0.0; ext.ew * ext.eh];
    let mut buf = vec![Complex64::default(); grid.len()];
    for c in 0..image.channels() {
        // The output sits at offset (kw-1, kh-1) inside the extended frame.
        grid.load_real(&mut buf, image.channel(c), w, h, kw - 1, kh - 1);
        grid.forward(&mut buf);
        for (b, k) in buf.iter_mut().zip(&kspec) {
            *b *= k.conj();
        }
        grid.inverse(&mut buf);
        grid.crop_real(&buf, &mut adj_ext, ext.ew, ext.eh, 0, 0);
        let dst = out.channel_mut(c);
        for v in 0..ext.eh {
            let Some(sy) = source_index(ext.sy0 + v as i64, h, boundary) else {
                continue;
            };
            for u in 0..ext.ew {
                if let Some(sx) = source_index(ext.sx0 + u as i64, w, boundary) {
                    dst[sy * w + sx] += adj_ext[v * ext.ew + u];
                }
            }
        }
    }
    out
}

/// Forward differences with replicate boundary: the last column of `gx` and
/// the last row of `gy` are zero.
pub fn spatial_gradient(image: &RasterImage) -> (RasterImage, RasterImage) {
    let (w, h) = (image.width(), image.height());
    let mut gx = RasterImage::new(w, h, image.channels());
    let mut gy = RasterImage::new(w, h, image.channels());
    for c in 0..image.channels() {
        let src = image.channel(c);
        forward_diff(src, w, h, gx.channel_mut(c), gy.channel_mut(c));
    }
    (gx, gy)
}

/// Adjoint `∇ᵀ` of [`spatial_gradient`] (a negative divergence).
pub fn gradient_adjoint(gx: &RasterImage, gy: &RasterImage) -> Result<RasterImage> {
    if !gx.same_shape(gy) {
        return Err(Error::SizeMismatch(
            "gradient components differ in shape".into(),
        ));
    }
    let (w, h) = (gx.width(), gx.height());
    let mut out = RasterImage::new(w, h, gx.channels());
    for c in 0..gx.channels() {
        forward_diff_adjoint(gx.channel(c), gy.channel(c), w, h, out.channel_mut(c));
    }
    Ok(out)
}

pub(crate) fn forward_diff(src: &[f64], w: usize, h: usize, gx: &mut [f64], gy: &mut [f64]) {
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            gx[i] = if x + 1 < w { src[i + 1] - src[i] } else { 0.0 };
            gy[i] = if y + 1 < h { src[i + w] - src[i] } else { 0.0 };
        }
    }
}

pub(crate) fn forward_diff_adjoint(px: &[f64], py: &[f64], w: usize, h: usize, out: &mut [f64]) {
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let mut v = 0.0;
            if x + 1 < w {
                v -= px[i];
            }
            if x >= 1 {
                v += px[i - 1];
            }
            if y + 1 < h {
                v -= py[i];
            }
            if y >= 1 {
                v += py[i - w];
            }
            out[i] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize, c: usize) -> RasterImage {
        RasterImage::from_fn(w, h, c, |_, _, _| rng.random::<f64>())
    }

    fn random_kernel(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Psf {
        let off = (rng.random_range(-3..3), rng.random_range(-3..3));
        Psf::new(w, h, off, (0..w * h).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    /// Direct O(n²k²) summation written independently of the sliding loops.
    fn brute_convolve(img: &RasterImage, k: &Psf, boundary: Boundary) -> RasterImage {
        let (w, h) = (img.width() as i64, img.height() as i64);
        RasterImage::from_fn(img.width(), img.height(), img.channels(), |x, y, c| {
            let mut acc = 0.0;
            for j in 0..k.height() {
                for i in 0..k.width() {
                    let mut sx = x as i64 - k.offset().0 - i as i64;
                    let mut sy = y as i64 - k.offset().1 - j as i64;
                    if boundary == Boundary::Replicate {
                        sx = sx.clamp(0, w - 1);
                        sy = sy.clamp(0, h - 1);
                    }
                    if sx >= 0 && sy >= 0 && sx < w && sy < h {
                        acc += k.local(i, j) * img.at(sx as usize, sy as usize, c);
                    }
                }
            }
            acc
        })
    }

    /// Correlation with the flipped kernel, zero boundary.
    fn brute_correlate_zero(img: &RasterImage, k: &Psf) -> RasterImage {
        let (w, h) = (img.width() as i64, img.height() as i64);
        RasterImage::from_fn(img.width(), img.height(), img.channels(), |x, y, c| {
            let mut acc = 0.0;
            for j in 0..k.height() {
                for i in 0..k.width() {
                    let sx = x as i64 + k.offset().0 + i as i64;
                    let sy = y as i64 + k.offset().1 + j as i64;
                    if sx >= 0 && sy >= 0 && sx < w && sy < h {
                        acc += k.local(i, j) * img.at(sx as usize, sy as usize, c);
                    }
                }
            }
            acc
        })
    }

    fn max_abs_diff(a: &RasterImage, b: &RasterImage) -> f64 {
        a.data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn impulse_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = random_image(&mut rng, 9, 7, 3);
        let k = Psf::impulse(0, 0);
        for b in [Boundary::Zero, Boundary::Replicate] {
            for m in [ConvMethod::Spatial, ConvMethod::Fft] {
                let out = convolve_with(&img, &k, b, m).unwrap();
                assert!(max_abs_diff(&out, &img) < 1e-12);
                let out = correlate_with(&img, &k, b, m).unwrap();
                assert!(max_abs_diff(&out, &img) < 1e-12);
            }
        }
    }

    #[test]
    fn constant_image_scales_by_mass_with_replicate() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let img = RasterImage::filled(12, 10, &[0.37]);
        let k = random_kernel(&mut rng, 5, 4);
        let m = k.mass();
        for method in [ConvMethod::Spatial, ConvMethod::Fft] {
            let out = convolve_with(&img, &k, Boundary::Replicate, method).unwrap();
            assert!(out.data().iter().all(|v| (v - 0.37 * m).abs() < 1e-12));
        }
    }

    #[test]
    fn matches_brute_force_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = random_image(&mut rng, 16, 16, 1);
        let k = random_kernel(&mut rng, 5, 5);
        for b in [Boundary::Zero, Boundary::Replicate] {
            let oracle = brute_convolve(&img, &k, b);
            for m in [ConvMethod::Spatial, ConvMethod::Fft] {
                let out = convolve_with(&img, &k, b, m).unwrap();
                assert!(max_abs_diff(&out, &oracle) < 1e-10, "{b:?} {m:?}");
            }
        }
        let oracle = brute_correlate_zero(&img, &k);
        for m in [ConvMethod::Spatial, ConvMethod::Fft] {
            let out = correlate_with(&img, &k, Boundary::Zero, m).unwrap();
            assert!(max_abs_diff(&out, &oracle) < 1e-10);
        }
    }

    #[test]
    fn fft_and_spatial_paths_agree_on_size_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for &(w, h) in &[(1, 1), (3, 17), (16, 16), (33, 20), (64, 64)] {
            for &ks in &[1usize, 4, 9, 15] {
                let img = random_image(&mut rng, w, h, 2);
                let k = random_kernel(&mut rng, ks, ks.max(2) - 1);
                for b in [Boundary::Zero, Boundary::Replicate] {
                    let a = convolve_with(&img, &k, b, ConvMethod::Spatial).unwrap();
                    let f = convolve_with(&img, &k, b, ConvMethod::Fft).unwrap();
                    assert!(max_abs_diff(&a, &f) < 1e-10, "conv {w}x{h} k{ks} {b:?}");
                    let a = correlate_with(&img, &k, b, ConvMethod::Spatial).unwrap();
                    let f = correlate_with(&img, &k, b, ConvMethod::Fft).unwrap();
                    assert!(max_abs_diff(&a, &f) < 1e-10, "corr {w}x{h} k{ks} {b:?}");
                }
            }
        }
    }

    #[test]
    fn correlate_is_adjoint_of_convolve() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut worst: f64 = 0.0;
        for trial in 0..100 {
            let x = random_image(&mut rng, 16, 16, 1);
            let y = random_image(&mut rng, 16, 16, 1);
            let k = random_kernel(&mut rng, 1 + trial % 9, 1 + (trial * 7) % 9);
            for b in [Boundary::Zero, Boundary::Replicate] {
                let lhs = convolve(&x, &k, b).unwrap().dot(&y);
                let rhs = x.dot(&correlate(&y, &k, b).unwrap());
                worst = worst.max((lhs - rhs).abs());
            }
        }
        assert!(worst < 1e-8, "adjoint violation {worst}");
    }

    #[test]
    fn linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_image(&mut rng, 20, 13, 1);
        let y = random_image(&mut rng, 20, 13, 1);
        let k = random_kernel(&mut rng, 9, 9);
        let (a, b) = (0.7, -1.3);
        let mut comb = x.clone();
        for (c, v) in comb.data_mut().iter_mut().zip(y.data()) {
            *c = a * *c + b * v;
        }
        let lhs = convolve(&comb, &k, Boundary::Replicate).unwrap();
        let cx = convolve(&x, &k, Boundary::Replicate).unwrap();
        let cy = convolve(&y, &k, Boundary::Replicate).unwrap();
        for i in 0..lhs.data().len() {
            let rhs = a * cx.data()[i] + b * cy.data()[i];
            assert!((lhs.data()[i] - rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn empty_kernel_is_rejected() {
        // Empty kernels cannot be constructed, so the error surfaces here.
        assert!(matches!(
            Psf::new(0, 3, (0, 0), vec![]),
            Err(Error::EmptyKernel)
        ));
        assert!(matches!(
            Psf::new(0, 0, (0, 0), vec![]),
            Err(Error::EmptyKernel)
        ));
    }

    #[test]
    fn gradient_of_constant_and_ramp() {
        let img = RasterImage::filled(8, 6, &[0.4, 0.1]);
        let (gx, gy) = spatial_gradient(&img);
        assert!(gx.data().iter().chain(gy.data()).all(|v| *v == 0.0));

        let w = 10;
        let ramp = RasterImage::from_fn(w, 5, 1, |x, _, _| x as f64 / w as f64);
        let (gx, gy) = spatial_gradient(&ramp);
        for y in 0..5 {
            for x in 0..w {
                let expect = if x + 1 < w { 1.0 / w as f64 } else { 0.0 };
                assert!((gx.at(x, y, 0) - expect).abs() < 1e-12);
                assert_eq!(gy.at(x, y, 0), 0.0);
            }
        }
    }

    #[test]
    fn gradient_adjoint_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let u = random_image(&mut rng, 11, 7, 3);
            let px = random_image(&mut rng, 11, 7, 3);
            let py = random_image(&mut rng, 11, 7, 3);
            let (gx, gy) = spatial_gradient(&u);
            let lhs = gx.dot(&px) + gy.dot(&py);
            let rhs = u.dot(&gradient_adjoint(&px, &py).unwrap());
            assert!((lhs - rhs).abs() < 1e-8);
        }
    }
}
