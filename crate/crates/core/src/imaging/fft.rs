//! 2-D FFT plumbing for linear convolutions on zero-padded grids.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Smallest `n' >= n` of the form `2^a 3^b 5^c`.
pub fn next_smooth_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Planned 2-D complex FFT over a row-major `width × height` buffer.
pub(crate) struct Fft2 {
    width: usize,
    height: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    transposed: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Fft2 {
    pub fn new(width: usize, height: usize) -> Self {
        let mut planner = FftPlanner::new();
        let row_fwd = planner.plan_fft_forward(width);
        let row_inv = planner.plan_fft_inverse(width);
        let col_fwd = planner.plan_fft_forward(height);
        let col_inv = planner.plan_fft_inverse(height);
        let scratch_len = [&row_fwd, &row_inv, &col_fwd, &col_inv]
            .iter()
            .map(|f| f.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        Self {
            width,
            height,
            row_fwd,
            row_inv,
            col_fwd,
            col_inv,
            transposed: vec![Complex64::default(); width * height],
            scratch: vec![Complex64::default(); scratch_len],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    fn transpose_into(src: &[Complex64], dst: &mut [Complex64], w: usize, h: usize) {
        for y in 0..h {
            let row = &src[y * w..(y + 1) * w];
            for (x, v) in row.iter().enumerate() {
                dst[x * h + y] = *v;
            }
        }
    }

    fn run(&mut self, buf: &mut [Complex64], inverse: bool) {
        debug_assert_eq!(buf.len(), self.len());
        let (row, col) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        row.process_with_scratch(buf, &mut self.scratch);
        Self::transpose_into(buf, &mut self.transposed, self.width, self.height);
        col.process_with_scratch(&mut self.transposed, &mut self.scratch);
        Self::transpose_into(&self.transposed, buf, self.height, self.width);
    }

    pub fn forward(&mut self, buf: &mut [Complex64]) {
        self.run(buf, false);
    }

    /// Inverse transform including the `1 / (width·height)` normalization.
    pub fn inverse(&mut self, buf: &mut [Complex64]) {
        self.run(buf, true);
        let k = 1.0 / self.len() as f64;
        for v in buf.iter_mut() {
            *v *= k;
        }
    }
}

/// Zero-padded grid on which full linear convolutions of arrays up to a
/// fixed combined size are computed without wrap-around.
pub(crate) struct ConvGrid {
    fft: Fft2,
}

impl ConvGrid {
    /// Grid able to hold a full convolution of size `full_w × full_h`.
    pub fn new(full_w: usize, full_h: usize) -> Self {
        Self {
            fft: Fft2::new(next_smooth_size(full_w), next_smooth_size(full_h)),
        }
    }

    pub fn width(&self) -> usize {
        self.fft.width()
    }

    pub fn height(&self) -> usize {
        self.fft.height()
    }

    pub fn len(&self) -> usize {
        self.fft.len()
    }

    /// Spectrum of a real `w × h` array placed at the grid origin.
    pub fn spectrum(&mut self, data: &[f64], w: usize, h: usize) -> Vec<Complex64> {
        let mut buf = vec![Complex64::default(); self.len()];
        self.load_real(&mut buf, data, w, h, 0, 0);
        self.fft.forward(&mut buf);
        buf
    }

    /// Spectrum of two real arrays packed as real and imaginary parts. The
    /// two spectra are recovered with [`ConvGrid::unpack_pair`].
    pub fn packed_spectrum(
        &mut self,
        re: &[f64],
        im: &[f64],
        w: usize,
        h: usize,
        buf: &mut [Complex64],
    ) {
        let gw = self.width();
        buf.iter_mut().for_each(|v| *v = Complex64::default());
        for y in 0..h {
            for x in 0..w {
                buf[y * gw + x] = Complex64::new(re[y * w + x], im[y * w + x]);
            }
        }
        self.fft.forward(buf);
    }

    /// Split the transform `z` of `a + i b` (`a`, `b` real) into `Â` and `B̂`.
    pub fn unpack_pair(&self, z: &[Complex64], a: &mut [Complex64], b: &mut [Complex64]) {
        let gw = self.width();
        let gh = self.height();
        for ky in 0..gh {
            let my = (gh - ky) % gh;
            for kx in 0..gw {
                let mx = (gw - kx) % gw;
                let zk = z[ky * gw + kx];
                let zm = z[my * gw + mx].conj();
                a[ky * gw + kx] = (zk + zm) * 0.5;
                b[ky * gw + kx] = (zk - zm) * Complex64::new(0.0, -0.5);
            }
        }
    }

    pub fn load_real(
        &self,
        buf: &mut [Complex64],
        data: &[f64],
        w: usize,
        h: usize,
        ox: usize,
        oy: usize,
    ) {
        let gw = self.width();
        buf.iter_mut().for_each(|v| *v = Complex64::default());
        for y in 0..h {
            let src = &data[y * w..(y + 1) * w];
            let dst = &mut buf[(y + oy) * gw + ox..(y + oy) * gw + ox + w];
            for (d, s) in dst.iter_mut().zip(src) {
                *d = Complex64::new(*s, 0.0);
            }
        }
    }

    pub fn forward(&mut self, buf: &mut [Complex64]) {
        self.fft.forward(buf);
    }

    pub fn inverse(&mut self, buf: &mut [Complex64]) {
        self.fft.inverse(buf);
    }

    /// Copy the real part of `buf[oy.., ox..]` into a `w × h` array.
    pub fn crop_real(
        &self,
        buf: &[Complex64],
        out: &mut [f64],
        w: usize,
        h: usize,
        ox: usize,
        oy: usize,
    ) {
        let gw = self.width();
        for y in 0..h {
            let src = &buf[(y + oy) * gw + ox..(y + oy) * gw + ox + w];
            for (d, s) in out[y * w..(y + 1) * w].iter_mut().zip(src) {
                *d = s.re;
            }
        }
    }

    /// Like [`crop_real`](Self::crop_real) for the imaginary part.
    pub fn crop_imag(
        &self,
        buf: &[Complex64],
        out: &mut [f64],
        w: usize,
        h: usize,
        ox: usize,
        oy: usize,
    ) {
        let gw = self.width();
        for y in 0..h {
            let src = &buf[(y + oy) * gw + ox..(y + oy) * gw + ox + w];
            for (d, s) in out[y * w..(y + 1) * w].iter_mut().zip(src) {
                *d = s.im;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_sizes() {
        assert_eq!(next_smooth_size(1), 1);
        assert_eq!(next_smooth_size(7), 8);
        assert_eq!(next_smooth_size(11), 12);
        assert_eq!(next_smooth_size(121), 125);
        assert_eq!(next_smooth_size(129), 135);
    }

    #[test]
    fn forward_inverse_round_trip() {
        let mut f = Fft2::new(6, 10);
        let orig: Vec<Complex64> = (0..60)
            .map(|i| Complex64::new((i as f64).sin(), (i as f64 * 0.3).cos()))
            .collect();
        let mut buf = orig.clone();
        f.forward(&mut buf);
        f.inverse(&mut buf);
        for (a, b) in buf.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn packed_pair_matches_separate_spectra() {
        let mut g = ConvGrid::new(7, 5);
        let a: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).sin()).collect();
        let b: Vec<f64> = (0..12).map(|i| (i as f64 * 1.3).cos()).collect();
        let sa = g.spectrum(&a, 4, 3);
        let sb = g.spectrum(&b, 4, 3);
        let mut z = vec![Complex64::default(); g.len()];
        g.packed_spectrum(&a, &b, 4, 3, &mut z);
        let mut ua = vec![Complex64::default(); g.len()];
        let mut ub = vec![Complex64::default(); g.len()];
        g.unpack_pair(&z, &mut ua, &mut ub);
        for i in 0..g.len() {
            assert!((ua[i] - sa[i]).norm() < 1e-12);
            assert!((ub[i] - sb[i]).norm() < 1e-12);
        }
    }
}
