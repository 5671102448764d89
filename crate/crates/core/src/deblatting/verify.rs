//! Checks of the matrix-free normal operators against dense matrices built
//! entry by entry from the forward model on small random problems.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::admm::{fm_normal, h_normal, FmWeights};
use super::problem::{Problem, Template};
use crate::imaging::{RasterImage, Rect, Region};

fn rand_image(rng: &mut ChaCha8Rng, w: usize, h: usize, c: usize) -> RasterImage {
    RasterImage::from_fn(w, h, c, |_, _, _| rng.random_range(0.0..1.0))
}

/// Random feasible model on an `s × s` support.
fn rand_model(rng: &mut ChaCha8Rng, s: usize, k: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let m: Vec<f64> = (0..s * s).map(|_| rng.random_range(0.0..1.0)).collect();
    let f = (0..k)
        .map(|_| m.iter().map(|mv| mv * rng.random_range(0.0..1.0)).collect())
        .collect();
    (f, m)
}

/// Problem with an 8 × 8 observation window that sticks out of the frame
/// on the left and top.
fn toy_problem(rng: &mut ChaCha8Rng) -> Problem {
    let i = rand_image(rng, 10, 9, 3);
    let b = rand_image(rng, 10, 9, 3);
    let d = Region::new(Rect::new(0, 1, 4, 5), 10, 9).expect("valid toy region");
    Problem::new(&i, &b, &d, 5).expect("valid toy problem")
}

fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[i] = 1.0;
    e
}

/// `Σ w·rowᵀrow` over weighted rows.
fn gram(rows: &[(f64, Vec<f64>)], n: usize) -> Vec<Vec<f64>> {
    let mut g = vec![vec![0.0; n]; n];
    for (wt, row) in rows {
        for i in 0..n {
            if row[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                g[i][j] += wt * row[i] * row[j];
            }
        }
    }
    g
}

/// Largest entrywise gap between `apply(e_j)` and column `j` of `dense + shift·I`.
fn max_gap(dense: &[Vec<f64>], shift: f64, mut apply: impl FnMut(&[f64]) -> Vec<f64>) -> f64 {
    let n = dense.len();
    let mut worst: f64 = 0.0;
    for j in 0..n {
        let col = apply(&unit(n, j));
        for i in 0..n {
            let expect = dense[i][j] + if i == j { shift } else { 0.0 };
            worst = worst.max((col[i] - expect).abs());
        }
    }
    worst
}

/// Max abs entry of the implicit blur-step operator minus its dense
/// counterpart, plus the gap of the diagonal used for preconditioning.
pub fn blur_operator_discrepancy(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = toy_problem(&mut rng);
    let (f, m) = rand_model(&mut rng, p.s, p.k);
    let rho = 0.37;
    let (ww, wh, s, n) = (p.ww, p.wh, p.s, p.h_len());
    let mut rows = vec![(1.0, vec![0.0; n]); p.k * ww * wh];
    for qy in 0..p.dh {
        for qx in 0..p.dw {
            let q = qy * p.dw + qx;
            if p.hmask[q] == 0.0 {
                continue;
            }
            for v in 0..s {
                for u in 0..s {
                    let pi = (qy + v) * ww + qx + u;
                    for c in 0..p.k {
                        rows[c * ww * wh + pi].1[q] += p.obs[pi] * (f[c][v * s + u] - p.b[c][pi] * m[v * s + u]);
                    }
                }
            }
        }
    }
    let dense = gram(&rows, n);
    let ms = p.model_spectra(&f, &m);
    let op = max_gap(&dense, rho, |x| h_normal(&mut p, &ms, x, rho));
    let diag = p.h_diagonal(&f, &m);
    let dg = (0..n).map(|i| (diag[i] - dense[i][i]).abs()).fold(0.0, f64::max);
    op.max(dg)
}

/// Max abs entry of the implicit appearance/mask operator minus its dense
/// counterpart.
pub fn object_operator_discrepancy(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = toy_problem(&mut rng);
    let (k, s, ww, wh) = (p.k, p.s, p.ww, p.wh);
    let s2 = s * s;
    let n = (k + 1) * s2;
    let h: Vec<f64> = (0..p.h_len()).map(|_| rng.random_range(0.0..0.3)).collect();
    let tmpl = Template {
        f: (0..k).map(|_| (0..s2).map(|_| rng.random_range(0.0..1.0)).collect()).collect(),
    };
    let w = FmWeights {
        lambda: 0.7,
        rho_tv: 0.3,
        rho_c: 0.2,
    };

    // Rows: data, template, then forward differences.
    let mut rows: Vec<(f64, Vec<f64>)> = Vec::new();
    for c in 0..k {
        for py in 0..wh {
            for px in 0..ww {
                let pi = py * ww + px;
                let mut row = vec![0.0; n];
                for v in 0..s {
                    for u in 0..s {
                        if px < u || py < v || px - u >= p.dw || py - v >= p.dh {
                            continue;
                        }
                        let hv = h[(py - v) * p.dw + (px - u)];
                        row[c * s2 + v * s + u] += p.obs[pi] * hv;
                        row[k * s2 + v * s + u] -= p.obs[pi] * p.b[c][pi] * hv;
                    }
                }
                rows.push((1.0, row));
            }
        }
        for u in 0..s2 {
            let mut row = vec![0.0; n];
            row[c * s2 + u] = 1.0;
            row[k * s2 + u] = -tmpl.f[c][u];
            rows.push((w.lambda, row));
        }
        for y in 0..s {
            for x in 0..s {
                let i0 = c * s2 + y * s + x;
                let mut gx = vec![0.0; n];
                if x + 1 < s {
                    gx[i0 + 1] = 1.0;
                    gx[i0] = -1.0;
                }
                let mut gy = vec![0.0; n];
                if y + 1 < s {
                    gy[i0 + s] = 1.0;
                    gy[i0] = -1.0;
                }
                rows.push((w.rho_tv, gx));
                rows.push((w.rho_tv, gy));
            }
        }
    }
    let dense = gram(&rows, n);
    let hs = p.h_spectrum(&h);
    max_gap(&dense, w.rho_c, |x| fm_normal(&mut p, &hs, &tmpl, &w, x))
}
