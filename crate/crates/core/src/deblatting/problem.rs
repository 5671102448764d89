//! Geometry and matrix-free operators of one deblatting problem.
//!
//! The blur `H` lives on the region `D` (`dw × dh`), the object on an odd
//! `s × s` support centered at `s / 2`. Their full convolution covers the
//! window `W` of size `(dw + s − 1) × (dh + s − 1)`; pixels of `W` outside the
//! frame are excluded by the observation mask, so no boundary extension is
//! needed.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::imaging::fft::ConvGrid;
use crate::imaging::{forward_diff, RasterImage, Rect, Region};

type C = Complex64;

/// Spectra of the object appearance channels and mask.
pub(crate) struct ModelSpectra {
    pub f: Vec<Vec<C>>,
    pub m: Vec<C>,
}

pub(crate) struct Problem {
    pub k: usize,
    pub s: usize,
    pub dw: usize,
    pub dh: usize,
    pub ww: usize,
    pub wh: usize,
    pub d_rect: Rect,
    pub hmask: Vec<f64>,
    pub obs: Vec<f64>,
    /// Background per channel on `W`, zero outside the frame.
    pub b: Vec<Vec<f64>>,
    /// `obs ⊙ (I − B)` per channel.
    pub y: Vec<Vec<f64>>,
    grid: ConvGrid,
    obs_spec: Vec<C>,
    obs_b_spec: Vec<Vec<C>>,
    obs_b2_spec: Vec<C>,
}

impl Problem {
    pub fn new(i: &RasterImage, b: &RasterImage, d: &Region, side: usize) -> Result<Self> {
        if !i.same_shape(b) {
            return Err(Error::SizeMismatch(
                "frame and background differ in shape".into(),
            ));
        }
        if side % 2 == 0 || side == 0 {
            return Err(Error::InvalidArgument(format!(
                "support side {side} must be odd"
            )));
        }
        let d_rect = d.rect();
        if d_rect.is_empty() {
            return Err(Error::EmptyRegion);
        }
        if !i.is_finite() || !b.is_finite() {
            return Err(Error::NonFinite("input image"));
        }
        let (dw, dh) = (d_rect.width(), d_rect.height());
        let (ww, wh) = (dw + side - 1, dh + side - 1);
        let c = (side / 2) as i64;
        let origin = (d_rect.x0 - c, d_rect.y0 - c);
        let k = i.channels();
        let (fw, fh) = (i.width() as i64, i.height() as i64);

        let mut obs = vec![0.0; ww * wh];
        let mut bw = vec![vec![0.0; ww * wh]; k];
        let mut yw = vec![vec![0.0; ww * wh]; k];
        for v in 0..wh {
            let fy = origin.1 + v as i64;
            if fy < 0 || fy >= fh {
                continue;
            }
            for u in 0..ww {
                let fx = origin.0 + u as i64;
                if fx < 0 || fx >= fw {
                    continue;
                }
                let idx = v * ww + u;
                obs[idx] = 1.0;
                for ch in 0..k {
                    let bv = b.at(fx as usize, fy as usize, ch);
                    bw[ch][idx] = bv;
                    yw[ch][idx] = i.at(fx as usize, fy as usize, ch) - bv;
                }
            }
        }
        let hmask: Vec<f64> = (0..dh)
            .flat_map(|y| (0..dw).map(move |x| (x, y)))
            .map(|(x, y)| if d.includes_local(x, y) { 1.0 } else { 0.0 })
            .collect();

        let mut grid = ConvGrid::new(ww, wh);
        let obs_spec = grid.spectrum(&obs, ww, wh);
        let obs_b_spec = bw.iter().map(|bc| grid.spectrum(bc, ww, wh)).collect();
        let b2: Vec<f64> = (0..ww * wh)
            .map(|p| bw.iter().map(|bc| bc[p] * bc[p]).sum())
            .collect();
        let obs_b2_spec = grid.spectrum(&b2, ww, wh);
        Ok(Self {
            k,
            s: side,
            dw,
            dh,
            ww,
            wh,
            d_rect,
            hmask,
            obs,
            b: bw,
            y: yw,
            grid,
            obs_spec,
            obs_b_spec,
            obs_b2_spec,
        })
    }

    pub fn h_len(&self) -> usize {
        self.dw * self.dh
    }

    pub fn s2(&self) -> usize {
        self.s * self.s
    }

    /// Spectra of several real arrays, two per transform.
    fn spectra(&mut self, arrays: &[&[f64]], w: usize, h: usize) -> Vec<Vec<C>> {
        let n = self.grid.len();
        let mut out = Vec::with_capacity(arrays.len());
        let mut buf = vec![C::default(); n];
        for pair in arrays.chunks(2) {
            if pair.len() == 2 {
                self.grid.packed_spectrum(pair[0], pair[1], w, h, &mut buf);
                let mut a = vec![C::default(); n];
                let mut b = vec![C::default(); n];
                self.grid.unpack_pair(&buf, &mut a, &mut b);
                out.push(a);
                out.push(b);
            } else {
                out.push(self.grid.spectrum(pair[0], w, h));
            }
        }
        out
    }

    /// Inverse transforms of spectra of real signals, cropped to
    /// `w × h` at the grid origin, two per transform.
    fn inverse_real(&mut self, spectra: &[Vec<C>], w: usize, h: usize) -> Vec<Vec<f64>> {
        let n = self.grid.len();
        let mut out = Vec::with_capacity(spectra.len());
        let mut buf = vec![C::default(); n];
        for pair in spectra.chunks(2) {
            if pair.len() == 2 {
                for ((d, a), b) in buf.iter_mut().zip(&pair[0]).zip(&pair[1]) {
                    *d = a + C::new(-b.im, b.re);
                }
            } else {
                buf.copy_from_slice(&pair[0]);
            }
            self.grid.inverse(&mut buf);
            let mut re = vec![0.0; w * h];
            self.grid.crop_real(&buf, &mut re, w, h, 0, 0);
            out.push(re);
            if pair.len() == 2 {
                let mut im = vec![0.0; w * h];
                self.grid.crop_imag(&buf, &mut im, w, h, 0, 0);
                out.push(im);
            }
        }
        out
    }

    pub fn model_spectra(&mut self, f: &[Vec<f64>], m: &[f64]) -> ModelSpectra {
        let s = self.s;
        let mut arrays: Vec<&[f64]> = f.iter().map(|v| v.as_slice()).collect();
        arrays.push(m);
        let mut sp = self.spectra(&arrays, s, s);
        let m = sp.pop().expect("mask spectrum");
        ModelSpectra { f: sp, m }
    }

    pub fn h_spectrum(&mut self, h: &[f64]) -> Vec<C> {
        let (dw, dh) = (self.dw, self.dh);
        let masked: Vec<f64> = h.iter().zip(&self.hmask).map(|(a, b)| a * b).collect();
        self.grid.spectrum(&masked, dw, dh)
    }

    /// Object contribution `obs ⊙ (H∗F_c − B_c ⊙ (H∗M))` on `W`.
    pub fn render(&mut self, hs: &[C], ms: &ModelSpectra) -> Vec<Vec<f64>> {
        let mut spectra: Vec<Vec<C>> = ms.f.iter().map(|fc| mul(hs, fc)).collect();
        spectra.push(mul(hs, &ms.m));
        let (ww, wh) = (self.ww, self.wh);
        let mut out = self.inverse_real(&spectra, ww, wh);
        let hm = out.pop().expect("mask channel");
        for (c, oc) in out.iter_mut().enumerate() {
            for p in 0..ww * wh {
                oc[p] = self.obs[p] * (oc[p] - self.b[c][p] * hm[p]);
            }
        }
        out
    }

    /// Adjoint of `H ↦ render(H)` for fixed `(F, M)`; `r` must vanish outside
    /// the observation mask.
    pub fn h_adjoint(&mut self, r: &[Vec<f64>], ms: &ModelSpectra) -> Vec<f64> {
        let (ww, wh) = (self.ww, self.wh);
        let br: Vec<f64> = (0..ww * wh)
            .map(|p| (0..self.k).map(|c| self.b[c][p] * r[c][p]).sum())
            .collect();
        let mut arrays: Vec<&[f64]> = r.iter().map(|v| v.as_slice()).collect();
        arrays.push(&br);
        let rs = self.spectra(&arrays, ww, wh);
        let mut acc = vec![C::default(); self.grid.len()];
        for (rc, fc) in rs.iter().zip(&ms.f) {
            for ((a, x), y) in acc.iter_mut().zip(rc).zip(fc) {
                *a += x * y.conj();
            }
        }
        for ((a, x), y) in acc.iter_mut().zip(&rs[self.k]).zip(&ms.m) {
            *a -= x * y.conj();
        }
        let (dw, dh) = (self.dw, self.dh);
        let mut g = self.inverse_real(&[acc], dw, dh).pop().expect("one output");
        for (v, mk) in g.iter_mut().zip(&self.hmask) {
            *v *= mk;
        }
        g
    }

    /// Adjoint of `(F, M) ↦ render` for fixed `H`.
    pub fn fm_adjoint(&mut self, r: &[Vec<f64>], hs: &[C]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let (ww, wh) = (self.ww, self.wh);
        let br: Vec<f64> = (0..ww * wh)
            .map(|p| (0..self.k).map(|c| self.b[c][p] * r[c][p]).sum())
            .collect();
        let mut arrays: Vec<&[f64]> = r.iter().map(|v| v.as_slice()).collect();
        arrays.push(&br);
        let rs = self.spectra(&arrays, ww, wh);
        let corr: Vec<Vec<C>> = rs.iter().map(|x| mul_conj(x, hs)).collect();
        let s = self.s;
        let mut out = self.inverse_real(&corr, s, s);
        let mut m = out.pop().expect("mask part");
        m.iter_mut().for_each(|v| *v = -*v);
        (out, m)
    }

    /// `Σ_q K(q) · G(q + u)` for `u` in the `w × h` box, from spectra.
    fn correlate_spectra(&mut self, g: &[C], k: &[C], w: usize, h: usize) -> Vec<f64> {
        let prod = mul_conj(g, k);
        self.inverse_real(&[prod], w, h).pop().expect("one output")
    }

    /// Diagonal of `AᵀA` for the blur step.
    pub fn h_diagonal(&mut self, f: &[Vec<f64>], m: &[f64]) -> Vec<f64> {
        let s2 = self.s2();
        let s = self.s;
        let f2: Vec<f64> = (0..s2)
            .map(|u| f.iter().map(|fc| fc[u] * fc[u]).sum())
            .collect();
        let m2: Vec<f64> = m.iter().map(|v| v * v).collect();
        let mut arrays: Vec<Vec<f64>> = vec![f2, m2];
        for fc in f {
            arrays.push(fc.iter().zip(m).map(|(a, b)| a * b).collect());
        }
        let refs: Vec<&[f64]> = arrays.iter().map(|v| v.as_slice()).collect();
        let ks = self.spectra(&refs, s, s);
        let n = self.grid.len();
        let mut acc = vec![C::default(); n];
        for p in 0..n {
            let mut v = self.obs_spec[p] * ks[0][p].conj() + self.obs_b2_spec[p] * ks[1][p].conj();
            for c in 0..self.k {
                v -= 2.0 * self.obs_b_spec[c][p] * ks[2 + c][p].conj();
            }
            acc[p] = v;
        }
        let (dw, dh) = (self.dw, self.dh);
        let mut d = self.inverse_real(&[acc], dw, dh).pop().expect("one output");
        for (v, mk) in d.iter_mut().zip(&self.hmask) {
            *v = v.max(0.0) * mk;
        }
        d
    }

    /// Fourier symbol of the blur-step `AᵀA` with the background replaced by
    /// its mean over the observed window.
    pub fn h_symbol(&self, ms: &ModelSpectra) -> Vec<f64> {
        let seen = self.obs.iter().sum::<f64>().max(1.0);
        let mean: Vec<f64> = self
            .b
            .iter()
            .map(|bc| bc.iter().sum::<f64>() / seen)
            .collect();
        (0..self.grid.len())
            .map(|p| {
                ms.f.iter()
                    .zip(&mean)
                    .map(|(fc, bc)| (fc[p] - *bc * ms.m[p]).norm_sqr())
                    .sum()
            })
            .collect()
    }

    /// Multiply a blur-sized array by a real Fourier symbol.
    pub fn filter_h(&mut self, x: &[f64], symbol: &[f64]) -> Vec<f64> {
        let (dw, dh) = (self.dw, self.dh);
        let mut buf = self.grid.spectrum(x, dw, dh);
        for (v, g) in buf.iter_mut().zip(symbol) {
            *v *= g;
        }
        self.grid.inverse(&mut buf);
        let mut out = vec![0.0; dw * dh];
        self.grid.crop_real(&buf, &mut out, dw, dh, 0, 0);
        out
    }

    /// Per-pixel blocks of `AᵀA` for the object step: `(a, b_c, e)` with
    /// `a = Σ H² obs`, `b_c = −Σ H² obs B_c`, `e = Σ H² obs ΣB²`.
    pub fn fm_diagonal_blocks(&mut self, h: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>, Vec<f64>) {
        let (dw, dh) = (self.dw, self.dh);
        let h2: Vec<f64> = h
            .iter()
            .zip(&self.hmask)
            .map(|(v, mk)| v * v * mk)
            .collect();
        let ks = self.grid.spectrum(&h2, dw, dh);
        let s = self.s;
        let obs = self.obs_spec.clone();
        let a = self.correlate_spectra(&obs, &ks, s, s);
        let mut b = Vec::with_capacity(self.k);
        for c in 0..self.k {
            let g = self.obs_b_spec[c].clone();
            b.push(
                self.correlate_spectra(&g, &ks, s, s)
                    .into_iter()
                    .map(|v| -v)
                    .collect(),
            );
        }
        let g = self.obs_b2_spec.clone();
        let e = self.correlate_spectra(&g, &ks, s, s);
        (a, b, e)
    }

    /// Data, template, TV and L1 terms of the objective.
    pub fn objective(
        &mut self,
        h: &[f64],
        f: &[Vec<f64>],
        m: &[f64],
        tmpl: &Template,
        w: &Weights,
    ) -> f64 {
        let hs = self.h_spectrum(h);
        let ms = self.model_spectra(f, m);
        let r = self.render(&hs, &ms);
        let mut data = 0.0;
        for (rc, yc) in r.iter().zip(&self.y) {
            data += rc
                .iter()
                .zip(yc)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        let l1: f64 = h.iter().zip(&self.hmask).map(|(v, mk)| v.abs() * mk).sum();
        0.5 * data
            + template_term(f, m, tmpl, w.lambda)
            + w.alpha_f * tv(f, self.s)
            + w.alpha_h * l1
    }
}

/// Template appearance `F̂` per channel on the object support.
pub(crate) struct Template {
    pub f: Vec<Vec<f64>>,
}

#[derive(Clone, Copy)]
pub(crate) struct Weights {
    pub lambda: f64,
    pub alpha_f: f64,
    pub alpha_h: f64,
}

pub(crate) fn template_term(f: &[Vec<f64>], m: &[f64], tmpl: &Template, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for (fc, tc) in f.iter().zip(&tmpl.f) {
        for ((a, t), mv) in fc.iter().zip(tc).zip(m) {
            let d = a - mv * t;
            acc += d * d;
        }
    }
    0.5 * lambda * acc
}

pub(crate) fn tv(f: &[Vec<f64>], s: usize) -> f64 {
    let mut gx = vec![0.0; s * s];
    let mut gy = vec![0.0; s * s];
    let mut acc = 0.0;
    for fc in f {
        forward_diff(fc, s, s, &mut gx, &mut gy);
        acc += gx.iter().chain(&gy).map(|v| v.abs()).sum::<f64>();
    }
    acc
}

fn mul(a: &[C], b: &[C]) -> Vec<C> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

fn mul_conj(a: &[C], b: &[C]) -> Vec<C> {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).collect()
}
