//! ADMM sub-solvers for the blur and for the object model, with conjugate
//! gradients on the matrix-free normal operators.

use std::cell::RefCell;

use nalgebra::DMatrix;

use super::problem::{ModelSpectra, Problem, Template};
use super::projection::project_in_place;
use super::DeblatParams;
use crate::imaging::{forward_diff, forward_diff_adjoint};

const ADMM_ABS_TOL: f64 = 1e-9;
const SCALE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct CgOutcome {
    pub iterations: usize,
    pub converged: bool,
}

/// Preconditioned conjugate gradients for an SPD operator, warm-started at
/// `x`. Stops when `‖b − Ax‖ ≤ tol · ‖b‖`.
pub(crate) fn pcg(
    mut apply: impl FnMut(&[f64]) -> Vec<f64>,
    mut precond: impl FnMut(&[f64]) -> Vec<f64>,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> CgOutcome {
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return CgOutcome {
            iterations: 0,
            converged: true,
        };
    }
    let target = tol * bnorm;
    let ax = apply(x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(a, c)| a - c).collect();
    if norm(&r) <= target {
        return CgOutcome {
            iterations: 0,
            converged: true,
        };
    }
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return CgOutcome {
                iterations: it,
                converged: false,
            };
        }
        let alpha = rz / pap;
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if norm(&r) <= target {
            return CgOutcome {
                iterations: it,
                converged: true,
            };
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..p.len() {
            p[i] = z[i] + beta * p[i];
        }
    }
    CgOutcome {
        iterations: max_iter,
        converged: false,
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `(AᵀA + ρ) x` for the blur step.
pub(crate) fn h_normal(p: &mut Problem, ms: &ModelSpectra, x: &[f64], rho: f64) -> Vec<f64> {
    let hs = p.h_spectrum(x);
    let r = p.render(&hs, ms);
    let mut g = p.h_adjoint(&r, ms);
    for (gv, xv) in g.iter_mut().zip(x) {
        *gv += rho * xv;
    }
    g
}

/// Scaled dual and penalty of the blur step, carried between outer iterations.
pub(crate) struct HDual {
    u: Vec<f64>,
    rho: f64,
}

/// Scaled duals and penalties of the object step.
pub(crate) struct FmDual {
    u_tv: Vec<f64>,
    u_c: Vec<f64>,
    rho_tv: f64,
    rho_c: f64,
}

pub(crate) struct StepOutcome {
    pub cg_converged: bool,
}

/// Blur sub-problem: data term, L1 weight and nonnegativity on `D`.
pub(crate) fn h_step(
    p: &mut Problem,
    f: &[Vec<f64>],
    m: &[f64],
    h0: &[f64],
    dual: &mut Option<HDual>,
    params: &DeblatParams,
) -> (Vec<f64>, StepOutcome) {
    let n = p.h_len();
    let ms = p.model_spectra(f, m);
    let diag = p.h_diagonal(f, m);
    let active = p.hmask.iter().sum::<f64>().max(1.0);
    let scale = (diag.iter().sum::<f64>() / active).max(SCALE_FLOOR);
    let (mut rho, mut u) = match dual.take() {
        Some(d) => (d.rho, d.u),
        None => (params.rho_h * scale, vec![0.0; n]),
    };
    let y = p.y.clone();
    let rhs0 = p.h_adjoint(&y, &ms);
    let data_scale = norm(&rhs0);
    let symbol = p.h_symbol(&ms);
    let inv_symbol = |rho: f64| symbol.iter().map(|g| 1.0 / (g + rho)).collect::<Vec<f64>>();

    let mut x = h0.to_vec();
    let mut z: Vec<f64> = h0
        .iter()
        .zip(&p.hmask)
        .map(|(v, mk)| v.max(0.0) * mk)
        .collect();
    let mut inv = inv_symbol(rho);
    let mut cg_ok = true;
    for _ in 0..params.max_inner_iters {
        let rhs: Vec<f64> = (0..n).map(|i| rhs0[i] + rho * (z[i] - u[i])).collect();
        let cell = RefCell::new(&mut *p);
        let out = pcg(
            |v| h_normal(&mut cell.borrow_mut(), &ms, v, rho),
            |r| {
                let mut q = cell.borrow_mut();
                let mut out = q.filter_h(r, &inv);
                for ((o, rv), mk) in out.iter_mut().zip(r).zip(&q.hmask) {
                    if *mk == 0.0 {
                        *o = rv / rho;
                    }
                }
                out
            },
            &rhs,
            &mut x,
            params.cg_tol,
            params.cg_max_iters,
        );
        cg_ok &= out.converged;

        let shrink = params.alpha_h / rho;
        let z_old = z.clone();
        for i in 0..n {
            z[i] = (x[i] + u[i] - shrink).max(0.0) * p.hmask[i];
            u[i] += x[i] - z[i];
        }
        let res = Residuals::new(&x, &z, &u, rho, rho * dist(&z, &z_old), data_scale);
        if res.done(params.admm_tol) {
            break;
        }
        if res.rebalance(&mut rho, &mut u) {
            inv = inv_symbol(rho);
        }
    }
    *dual = Some(HDual { u, rho });
    (
        z,
        StepOutcome {
            cg_converged: cg_ok,
        },
    )
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Primal and dual residuals of one splitting `x = z` with scaled dual `u`.
struct Residuals {
    primal: f64,
    dual: f64,
    eps_pri: f64,
    eps_dual: f64,
}

impl Residuals {
    /// `scale` is the magnitude of the data gradient, which bounds the dual
    /// reference from below when the constraints are inactive.
    fn new(x: &[f64], z: &[f64], u: &[f64], rho: f64, dual: f64, scale: f64) -> Self {
        let sq = (x.len() as f64).sqrt();
        Self {
            primal: dist(x, z),
            dual,
            eps_pri: sq * ADMM_ABS_TOL + norm(x).max(norm(z)),
            eps_dual: sq * ADMM_ABS_TOL + (rho * norm(u)).max(scale),
        }
    }

    fn done(&self, tol: f64) -> bool {
        self.primal <= tol * self.eps_pri && self.dual <= tol * self.eps_dual
    }

    /// Residual balancing: adjust `rho` when one residual dominates and
    /// rescale the scaled dual accordingly.
    fn rebalance(&self, rho: &mut f64, u: &mut [f64]) -> bool {
        const MU: f64 = 10.0;
        const TAU: f64 = 2.0;
        let factor = if self.primal > MU * self.dual {
            TAU
        } else if self.dual > MU * self.primal {
            1.0 / TAU
        } else {
            return false;
        };
        *rho *= factor;
        u.iter_mut().for_each(|v| *v /= factor);
        true
    }
}

/// Weights of the object sub-problem.
pub(crate) struct FmWeights {
    pub lambda: f64,
    pub rho_tv: f64,
    pub rho_c: f64,
}

/// `(AᵀA + λTᵀT + ρ₁∇ᵀ∇ + ρ₂) x` on the stacked vector `[F_0, …, F_{K−1}, M]`.
pub(crate) fn fm_normal(
    p: &mut Problem,
    hs: &[num_complex::Complex64],
    tmpl: &Template,
    w: &FmWeights,
    x: &[f64],
) -> Vec<f64> {
    let (k, s) = (p.k, p.s);
    let s2 = s * s;
    let (f, m) = split(x, k, s2);
    let ms = p.model_spectra(&f, &m);
    let r = p.render(hs, &ms);
    let (gf, gm) = p.fm_adjoint(&r, hs);
    let mut out = vec![0.0; (k + 1) * s2];
    let mut gx = vec![0.0; s2];
    let mut gy = vec![0.0; s2];
    let mut tv = vec![0.0; s2];
    for c in 0..k {
        forward_diff(&f[c], s, s, &mut gx, &mut gy);
        forward_diff_adjoint(&gx, &gy, s, s, &mut tv);
        for u in 0..s2 {
            let t = f[c][u] - tmpl.f[c][u] * m[u];
            out[c * s2 + u] = gf[c][u] + w.lambda * t + w.rho_tv * tv[u] + w.rho_c * f[c][u];
            out[k * s2 + u] -= w.lambda * tmpl.f[c][u] * t;
        }
    }
    for u in 0..s2 {
        out[k * s2 + u] += gm[u] + w.rho_c * m[u];
    }
    out
}

fn split(x: &[f64], k: usize, s2: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let f = (0..k).map(|c| x[c * s2..(c + 1) * s2].to_vec()).collect();
    (f, x[k * s2..(k + 1) * s2].to_vec())
}

fn stack(f: &[Vec<f64>], m: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = f.iter().flatten().copied().collect();
    v.extend_from_slice(m);
    v
}

fn neighbor_count(x: usize, y: usize, s: usize) -> f64 {
    ((x + 1 < s) as u8 + (x >= 1) as u8 + (y + 1 < s) as u8 + (y >= 1) as u8) as f64
}

fn fm_preconditioner(
    k: usize,
    s: usize,
    blocks_data: &(Vec<f64>, Vec<Vec<f64>>, Vec<f64>),
    tmpl: &Template,
    w: &FmWeights,
) -> Vec<DMatrix<f64>> {
    let (a, b, e) = blocks_data;
    (0..s * s)
        .map(|u| {
            let mut blk = DMatrix::<f64>::zeros(k + 1, k + 1);
            let nb = neighbor_count(u % s, u / s, s);
            let mut mm = e[u].max(0.0) + w.rho_c;
            for c in 0..k {
                let t = tmpl.f[c][u];
                blk[(c, c)] = a[u].max(0.0) + w.lambda + w.rho_tv * nb + w.rho_c;
                blk[(c, k)] = b[c][u] - w.lambda * t;
                blk[(k, c)] = blk[(c, k)];
                mm += w.lambda * t * t;
            }
            blk[(k, k)] = mm;
            blk.clone().try_inverse().unwrap_or_else(|| {
                DMatrix::from_diagonal(&blk.diagonal().map(|d| if d > 0.0 { 1.0 / d } else { 1.0 }))
            })
        })
        .collect()
}

fn apply_blocks(blocks: &[DMatrix<f64>], r: &[f64], k: usize, s2: usize) -> Vec<f64> {
    let mut out = vec![0.0; r.len()];
    let mut v = nalgebra::DVector::<f64>::zeros(k + 1);
    for u in 0..s2 {
        for c in 0..=k {
            v[c] = r[c * s2 + u];
        }
        let z = &blocks[u] * &v;
        for c in 0..=k {
            out[c * s2 + u] = z[c];
        }
    }
    out
}

/// Object sub-problem: data, template and TV terms with `(F, M) ∈ C`.
pub(crate) fn fm_step(
    p: &mut Problem,
    h: &[f64],
    f0: &[Vec<f64>],
    m0: &[f64],
    tmpl: &Template,
    lambda: f64,
    dual: &mut Option<FmDual>,
    params: &DeblatParams,
) -> (Vec<Vec<f64>>, Vec<f64>, StepOutcome) {
    let (k, s) = (p.k, p.s);
    let s2 = s * s;
    let n = (k + 1) * s2;
    let hs = p.h_spectrum(h);
    let diag_blocks = p.fm_diagonal_blocks(h);
    let scale = (diag_blocks.0.iter().sum::<f64>() / s2 as f64).max(SCALE_FLOOR);
    let (mut u1, mut u2, rho_tv, rho_c) = match dual.take() {
        Some(d) => (d.u_tv, d.u_c, d.rho_tv, d.rho_c),
        None => (
            vec![0.0; 2 * k * s2],
            vec![0.0; n],
            params.rho_tv * scale,
            params.rho_c * scale,
        ),
    };
    let mut w = FmWeights {
        lambda,
        rho_tv,
        rho_c,
    };
    let mut blocks = fm_preconditioner(k, s, &diag_blocks, tmpl, &w);

    let y = p.y.clone();
    let (af, am) = p.fm_adjoint(&y, &hs);
    let rhs0 = stack(&af, &am);
    let data_scale = norm(&rhs0);

    let grad = |x: &[f64]| {
        let mut g = vec![0.0; 2 * k * s2];
        let mut gx = vec![0.0; s2];
        let mut gy = vec![0.0; s2];
        for c in 0..k {
            forward_diff(&x[c * s2..(c + 1) * s2], s, s, &mut gx, &mut gy);
            g[2 * c * s2..(2 * c + 1) * s2].copy_from_slice(&gx);
            g[(2 * c + 1) * s2..(2 * c + 2) * s2].copy_from_slice(&gy);
        }
        g
    };
    let grad_adjoint = |g: &[f64]| {
        let mut out = vec![0.0; k * s2];
        for c in 0..k {
            forward_diff_adjoint(
                &g[2 * c * s2..(2 * c + 1) * s2],
                &g[(2 * c + 1) * s2..(2 * c + 2) * s2],
                s,
                s,
                &mut out[c * s2..(c + 1) * s2],
            );
        }
        out
    };

    let mut x = stack(f0, m0);
    let mut z2 = x.clone();
    project_stack(&mut z2, k, s2);
    let mut z1 = grad(&x);
    let mut cg_ok = true;
    for _ in 0..params.max_inner_iters {
        let mut rhs = rhs0.clone();
        let d1: Vec<f64> = z1.iter().zip(&u1).map(|(a, b)| a - b).collect();
        for (r, v) in rhs.iter_mut().zip(grad_adjoint(&d1)) {
            *r += w.rho_tv * v;
        }
        for i in 0..n {
            rhs[i] += w.rho_c * (z2[i] - u2[i]);
        }
        let out = pcg(
            |v| fm_normal(p, &hs, tmpl, &w, v),
            |r| apply_blocks(&blocks, r, k, s2),
            &rhs,
            &mut x,
            params.cg_tol,
            params.cg_max_iters,
        );
        cg_ok &= out.converged;

        let g = grad(&x);
        let shrink = params.alpha_f / w.rho_tv;
        let z1_old = std::mem::take(&mut z1);
        z1 = g
            .iter()
            .zip(&u1)
            .map(|(gv, uv)| {
                let v = gv + uv;
                v.signum() * (v.abs() - shrink).max(0.0)
            })
            .collect();
        for i in 0..u1.len() {
            u1[i] += g[i] - z1[i];
        }
        let z2_old = std::mem::replace(&mut z2, x.iter().zip(&u2).map(|(a, b)| a + b).collect());
        project_stack(&mut z2, k, s2);
        for i in 0..n {
            u2[i] += x[i] - z2[i];
        }

        let dz1: Vec<f64> = z1.iter().zip(&z1_old).map(|(a, b)| a - b).collect();
        let tv_split = Residuals::new(
            &g,
            &z1,
            &u1,
            w.rho_tv,
            w.rho_tv * norm(&grad_adjoint(&dz1)),
            data_scale,
        );
        let c_split = Residuals::new(
            &x,
            &z2,
            &u2,
            w.rho_c,
            w.rho_c * dist(&z2, &z2_old),
            data_scale,
        );
        if tv_split.done(params.admm_tol) && c_split.done(params.admm_tol) {
            break;
        }
        let changed_tv = tv_split.rebalance(&mut w.rho_tv, &mut u1);
        let changed_c = c_split.rebalance(&mut w.rho_c, &mut u2);
        if changed_tv || changed_c {
            blocks = fm_preconditioner(k, s, &diag_blocks, tmpl, &w);
        }
    }
    let (f, m) = split(&z2, k, s2);
    *dual = Some(FmDual {
        u_tv: u1,
        u_c: u2,
        rho_tv: w.rho_tv,
        rho_c: w.rho_c,
    });
    (
        f,
        m,
        StepOutcome {
            cg_converged: cg_ok,
        },
    )
}

/// Project every pixel of a stacked `[F_0, …, M]` vector onto the constraint set.
pub(crate) fn project_stack(x: &mut [f64], k: usize, s2: usize) {
    let mut f = vec![0.0; k];
    for u in 0..s2 {
        for c in 0..k {
            f[c] = x[c * s2 + u];
        }
        let mut m = x[k * s2 + u];
        project_in_place(&mut f, &mut m);
        for c in 0..k {
            x[c * s2 + u] = f[c];
        }
        x[k * s2 + u] = m;
    }
}
