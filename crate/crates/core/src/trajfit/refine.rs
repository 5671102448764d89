//! Local refinement of a candidate curve: closest-point correspondences
//! alternated with reweighted least squares on the curve coefficients.

use nalgebra::{DMatrix, DVector};

use super::{FitParams, PsfPointSet};
use crate::curve::{Piece, PiecewiseCurve, Vec2};

/// Dense parameter samples used to seed closest-point searches.
pub const CLOSEST_SAMPLES: usize = 1000;
pub const ICP_MAX_ITERS: usize = 10;
/// ICP stops when no curve point moves by more than this, pixels.
pub const ICP_TOL: f64 = 1e-4;
const IRLS_ITERS: usize = 20;
const IRLS_FLOOR: f64 = 1e-3;
/// Parameter grid of the curve-to-points term.
const LENGTH_SAMPLES: usize = 50;
/// Curve samples this close to a point are inside the point cloud and
/// leave the curve-to-points term inactive, pixels.
const LENGTH_DEADZONE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub curve: PiecewiseCurve,
    /// False when no point lay within the inlier distance of the input.
    pub refined: bool,
    pub iterations: usize,
}

/// Curve sampled at uniform parameters for nearest-sample lookups.
pub(crate) struct CurveSamples<'a> {
    curve: &'a PiecewiseCurve,
    ts: Vec<f64>,
    ps: Vec<Vec2>,
    lo: Vec2,
    hi: Vec2,
}

impl<'a> CurveSamples<'a> {
    pub fn new(curve: &'a PiecewiseCurve, n: usize) -> Self {
        let ts: Vec<f64> = (0..n).map(|k| k as f64 / (n - 1) as f64).collect();
        let ps: Vec<Vec2> = ts.iter().map(|&t| curve.eval(t)).collect();
        let (lo, hi) = ps.iter().fold(
            (Vec2::repeat(f64::INFINITY), Vec2::repeat(f64::NEG_INFINITY)),
            |(lo, hi), p| (lo.inf(p), hi.sup(p)),
        );
        Self { curve, ts, ps, lo, hi }
    }

    /// Whether `x` may lie within `r` of the curve.
    pub fn near(&self, x: Vec2, r: f64) -> bool {
        x.x >= self.lo.x - r && x.x <= self.hi.x + r && x.y >= self.lo.y - r && x.y <= self.hi.y + r
    }

    /// Closest curve parameter in `[0, 1]` and the distance.
    pub fn closest(&self, x: Vec2) -> (f64, f64) {
        let mut k_best = 0;
        let mut d_best = f64::INFINITY;
        for (k, p) in self.ps.iter().enumerate() {
            let d = (p - x).norm_squared();
            if d < d_best {
                d_best = d;
                k_best = k;
            }
        }
        let n = self.ts.len();
        let lo = self.ts[k_best.saturating_sub(1)];
        let hi = self.ts[(k_best + 1).min(n - 1)];
        let mut best = (self.ts[k_best], d_best);
        let pieces = self.curve.pieces();
        let tb = self.curve.tbreak();
        let intervals: &[(usize, f64, f64)] = if pieces.len() == 2 {
            &[(0, 0.0, tb), (1, tb, 1.0)]
        } else {
            &[(0, 0.0, 1.0)]
        };
        for &(k, a, b) in intervals {
            let (a, b) = (a.max(lo), b.min(hi));
            if a > b {
                continue;
            }
            let t = local_minimum(&pieces[k], x, a, b, best.0.clamp(a, b));
            let d = (pieces[k].eval(t) - x).norm_squared();
            if d < best.1 {
                best = (t, d);
            }
        }
        (best.0, best.1.sqrt())
    }
}

/// Newton iterations on the squared distance restricted to `[a, b]`.
fn local_minimum(piece: &Piece, x: Vec2, a: f64, b: f64, mut t: f64) -> f64 {
    let c2 = piece.coeffs[2] * 2.0;
    for _ in 0..8 {
        let d = piece.eval(t) - x;
        let v = piece.derivative(t);
        let g = d.dot(&v);
        let h = v.dot(&v) + d.dot(&c2);
        if !(h > 0.0) {
            break;
        }
        let next = (t - g / h).clamp(a, b);
        if (next - t).abs() < 1e-14 {
            t = next;
            break;
        }
        t = next;
    }
    t
}

/// Basis row of the continuity-preserving parametrization: one quadratic
/// piece, or a second piece expanded around the breakpoint that keeps the
/// acceleration of the first and only changes velocity, as in a bounce.
fn basis(t: f64, tb: Option<f64>) -> Vec<f64> {
    match tb {
        None => vec![1.0, t, t * t],
        Some(tb) if t <= tb => vec![1.0, t, t * t, 0.0],
        Some(tb) => {
            let d = t - tb;
            vec![1.0, tb, tb * tb + d * d, d]
        }
    }
}

fn coefficients(curve: &PiecewiseCurve) -> (DMatrix<f64>, Option<f64>) {
    let p = &curve.pieces()[0];
    let mut rows = vec![p.coeffs[0], p.coeffs[1], p.coeffs[2]];
    let tb = curve.is_two_piece().then(|| curve.tbreak());
    if let Some(tb) = tb {
        rows.push(curve.pieces()[1].derivative(tb));
    }
    (DMatrix::from_fn(rows.len(), 2, |i, j| rows[i][j]), tb)
}

fn curve_from(theta: &DMatrix<f64>, tb: Option<f64>) -> Option<PiecewiseCurve> {
    let v = |i: usize| Vec2::new(theta[(i, 0)], theta[(i, 1)]);
    let first = Piece::new(v(0), v(1), v(2));
    if !first.is_finite() {
        return None;
    }
    let Some(tb) = tb else {
        return Some(PiecewiseCurve::single(first));
    };
    let mut second = Piece::new(first.eval(tb), v(3), v(2)).compose_affine(1.0, -tb);
    second.coeffs[0] += first.eval(tb) - second.eval(tb);
    PiecewiseCurve::two_piece(first, second, tb).ok()
}

/// One observation `x ≈ C(t)` with weight `w`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Obs {
    pub t: f64,
    pub x: Vec2,
    pub w: f64,
}

/// Minimizer of `Σ ω ‖x − C(t)‖² + μ ‖θ − θ₀‖²` over the curve coefficients.
fn weighted_solve(obs: &[Obs], omega: &[f64], tb: Option<f64>, theta0: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let dim = theta0.nrows();
    let mut ata = DMatrix::<f64>::zeros(dim, dim);
    let mut atb = DMatrix::<f64>::zeros(dim, 2);
    for (o, &om) in obs.iter().zip(omega) {
        let row = DVector::from_vec(basis(o.t, tb));
        ata += &row * row.transpose() * om;
        for j in 0..2 {
            for i in 0..dim {
                atb[(i, j)] += row[i] * om * o.x[j];
            }
        }
    }
    let mu = 1e-9 * (ata.trace() / dim as f64).max(1e-12);
    for i in 0..dim {
        ata[(i, i)] += mu;
    }
    atb += theta0 * mu;
    let sol = ata.cholesky()?.solve(&atb);
    sol.iter().all(|v| v.is_finite()).then_some(sol)
}

/// Weighted least-squares fit of the curve coefficients to `(t, x)` pairs,
/// with an optional breakpoint.
pub(crate) fn fit_curve(obs: &[Obs], tb: Option<f64>) -> Option<PiecewiseCurve> {
    let dim = if tb.is_some() { 4 } else { 3 };
    let omega: Vec<f64> = obs.iter().map(|o| o.w).collect();
    let theta = weighted_solve(obs, &omega, tb, &DMatrix::zeros(dim, 2))?;
    curve_from(&theta, tb)
}

/// Huber-smoothed distance, majorized by the reweighted quadratic.
fn robust(r: f64) -> f64 {
    if r >= IRLS_FLOOR {
        r
    } else {
        r * r / (2.0 * IRLS_FLOOR) + IRLS_FLOOR / 2.0
    }
}

/// IRLS on `Σ w ρ(‖x − C(t)‖)`; returns the curve and the objective after
/// every reweighting.
pub(crate) fn irls(obs: &[Obs], curve: &PiecewiseCurve) -> (PiecewiseCurve, Vec<f64>) {
    let (mut theta, tb) = coefficients(curve);
    let mut current = curve.clone();
    let objective = |c: &PiecewiseCurve| obs.iter().map(|o| o.w * robust((c.eval(o.t) - o.x).norm())).sum::<f64>();
    let mut trace = vec![objective(&current)];
    for _ in 0..IRLS_ITERS {
        let omega: Vec<f64> = obs
            .iter()
            .map(|o| o.w / (current.eval(o.t) - o.x).norm().max(IRLS_FLOOR))
            .collect();
        let Some(next) = weighted_solve(obs, &omega, tb, &theta) else { break };
        let Some(c) = curve_from(&next, tb) else { break };
        let e = objective(&c);
        let change = (&next - &theta).abs().max();
        theta = next;
        current = c;
        trace.push(e);
        if change < 1e-10 {
            break;
        }
    }
    (current, trace)
}

/// Largest displacement between two curves over a uniform parameter grid.
fn displacement(a: &PiecewiseCurve, b: &PiecewiseCurve) -> f64 {
    (0..=100)
        .map(|k| {
            let t = k as f64 / 100.0;
            (a.eval(t) - b.eval(t)).norm()
        })
        .fold(0.0, f64::max)
}

/// Observations of one ICP iteration: inlier correspondences and the
/// curve-to-points term on a fixed parameter grid.
fn correspondences(curve: &PiecewiseCurve, points: &PsfPointSet, params: &FitParams) -> Vec<Obs> {
    let rho = params.inlier_dist;
    let samples = CurveSamples::new(curve, CLOSEST_SAMPLES);
    let mut obs = Vec::new();
    for (x, &w) in points.points().iter().zip(points.weights()) {
        if !samples.near(*x, rho) {
            continue;
        }
        let (t, d) = samples.closest(*x);
        if d < rho {
            obs.push(Obs { t, x: *x, w });
        }
    }
    if obs.is_empty() {
        return obs;
    }
    let inlier_weight: f64 = obs.iter().map(|o| o.w).sum();
    let w = params.length_weight * inlier_weight / LENGTH_SAMPLES as f64;
    for j in 0..LENGTH_SAMPLES {
        let t = (j as f64 + 0.5) / LENGTH_SAMPLES as f64;
        let y = curve.eval(t);
        let nearest = points
            .points()
            .iter()
            .min_by(|a, b| (*a - y).norm_squared().total_cmp(&(*b - y).norm_squared()))
            .expect("nonempty point set");
        if (nearest - y).norm() > LENGTH_DEADZONE {
            obs.push(Obs { t, x: *nearest, w });
        }
    }
    obs
}

/// Locally optimal robust fit of `curve` to the points.
pub fn refine_curve(curve: &PiecewiseCurve, points: &PsfPointSet, params: &FitParams) -> Refinement {
    let mut current = curve.clone();
    let mut iterations = 0;
    for it in 0..ICP_MAX_ITERS {
        let obs = correspondences(&current, points, params);
        if obs.is_empty() {
            return Refinement { curve: current, refined: it > 0, iterations };
        }
        let (next, _) = irls(&obs, &current);
        iterations = it + 1;
        let moved = displacement(&next, &current);
        current = next;
        if moved < ICP_TOL {
            break;
        }
    }
    Refinement { curve: current, refined: true, iterations }
}
