//! Sequential RANSAC search for salient line segments and parabolic arcs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FitParams, PsfPointSet};
use crate::curve::{Piece, PiecewiseCurve, Vec2};

/// Orientation of an axis-aligned parabola.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParabolaAxis {
    /// `y = a x² + b x + c`.
    Vertical,
    /// `x = a y² + b y + c`.
    Horizontal,
}

impl ParabolaAxis {
    /// Coordinates `(u, v)` in which the parabola reads `v = f(u)`.
    fn local(self, p: Vec2) -> (f64, f64) {
        match self {
            ParabolaAxis::Vertical => (p.x, p.y),
            ParabolaAxis::Horizontal => (p.y, p.x),
        }
    }

    fn global(self, u: f64, v: f64) -> Vec2 {
        match self {
            ParabolaAxis::Vertical => Vec2::new(u, v),
            ParabolaAxis::Horizontal => Vec2::new(v, u),
        }
    }
}

/// A straight segment or a parabolic arc, traversed from its start to its end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Segment {
    Line { a: Vec2, b: Vec2 },
    /// Arc of `v = coef[0] u² + coef[1] u + coef[2]` for `u` from `u0` to `u1`.
    Parabola { axis: ParabolaAxis, coef: [f64; 3], u0: f64, u1: f64 },
}

impl Segment {
    pub fn start(&self) -> Vec2 {
        self.piece().eval(0.0)
    }

    pub fn end(&self) -> Vec2 {
        self.piece().eval(1.0)
    }

    /// Polynomial traversal on `t ∈ [0, 1]`, uniform in the line direction or
    /// in the parabola's free coordinate.
    pub fn piece(&self) -> Piece {
        match *self {
            Segment::Line { a, b } => Piece::linear(a, b - a),
            Segment::Parabola { axis, coef: [a, b, c], u0, u1 } => {
                let d = u1 - u0;
                let v = [a * u0 * u0 + b * u0 + c, (2.0 * a * u0 + b) * d, a * d * d];
                Piece::new(axis.global(u0, v[0]), axis.global(d, v[1]), axis.global(0.0, v[2]))
            }
        }
    }

    pub fn curve(&self) -> PiecewiseCurve {
        PiecewiseCurve::single(self.piece())
    }

    pub fn length(&self) -> f64 {
        match *self {
            Segment::Line { a, b } => (b - a).norm(),
            Segment::Parabola { coef, u0, u1, .. } => (arc_length(&coef, u1) - arc_length(&coef, u0)).abs(),
        }
    }

    /// Distance from `p` to the segment (not its extension).
    pub fn distance(&self, p: Vec2) -> f64 {
        match *self {
            Segment::Line { a, b } => {
                let d = b - a;
                let l2 = d.norm_squared();
                let s = if l2 > 0.0 { ((p - a).dot(&d) / l2).clamp(0.0, 1.0) } else { 0.0 };
                (a + d * s - p).norm()
            }
            Segment::Parabola { axis, coef, u0, u1 } => {
                let (u, v) = axis.local(p);
                let (lo, hi) = (u0.min(u1), u0.max(u1));
                let (uc, _) = closest_on_parabola(&coef, u, v);
                let uc = uc.clamp(lo, hi);
                (axis.global(uc, eval_parabola(&coef, uc)) - p).norm()
            }
        }
    }
}

/// A segment found by RANSAC with its saliency and the indices of its run.
#[derive(Debug, Clone, PartialEq)]
pub struct FoundSegment {
    pub segment: Segment,
    pub saliency: f64,
    pub inliers: Vec<usize>,
}

pub(crate) fn eval_parabola(coef: &[f64; 3], u: f64) -> f64 {
    (coef[0] * u + coef[1]) * u + coef[2]
}

/// Arc length of the parabola from `u = 0` to `u`, up to a constant.
pub(crate) fn arc_length(coef: &[f64; 3], u: f64) -> f64 {
    let (a, b) = (coef[0], coef[1]);
    if a.abs() < 1e-12 {
        return u * (1.0 + b * b).sqrt();
    }
    let z = 2.0 * a * u + b;
    (z * (1.0 + z * z).sqrt() + z.asinh()) / (4.0 * a)
}

/// Closest point of the whole parabola to `(u, v)`: its coordinate and distance.
pub(crate) fn closest_on_parabola(coef: &[f64; 3], u: f64, v: f64) -> (f64, f64) {
    let [a, b, c] = *coef;
    let cv = c - v;
    // Stationarity of the squared distance is a cubic in the free coordinate.
    let k3 = 2.0 * a * a;
    let k2 = 3.0 * a * b;
    let k1 = 1.0 + b * b + 2.0 * a * cv;
    let k0 = b * cv - u;
    let dist2 = |x: f64| {
        let dv = eval_parabola(coef, x) - v;
        (x - u) * (x - u) + dv * dv
    };
    let polish = |mut x: f64| {
        for _ in 0..3 {
            let g = ((k3 * x + k2) * x + k1) * x + k0;
            let dg = (3.0 * k3 * x + 2.0 * k2) * x + k1;
            if dg.abs() < 1e-300 {
                break;
            }
            x -= g / dg;
        }
        x
    };
    let mut best = (u, dist2(u));
    let candidates = roots::find_roots_cubic(k3, k2, k1, k0);
    for &r in candidates.as_ref() {
        let x = polish(r);
        let d = dist2(x);
        if d.is_finite() && d < best.1 {
            best = (x, d);
        }
    }
    if candidates.as_ref().is_empty() && k1.abs() > 0.0 {
        let x = polish(-k0 / k1);
        let d = dist2(x);
        if d < best.1 {
            best = (x, d);
        }
    }
    (best.0, best.1.sqrt())
}

/// Weighted least-squares parabola `v = a u² + b u + c` through local points.
fn fit_parabola(local: &[(f64, f64)], weights: &[f64]) -> Option<[f64; 3]> {
    let mut ata = nalgebra::Matrix3::<f64>::zeros();
    let mut atb = nalgebra::Vector3::<f64>::zeros();
    for (&(u, v), &w) in local.iter().zip(weights) {
        let row = nalgebra::Vector3::new(u * u, u, 1.0);
        ata += row * row.transpose() * w;
        atb += row * (v * w);
    }
    let scale = ata.diagonal().max().max(1e-300);
    if ata.determinant().abs() < 1e-12 * scale * scale * scale {
        return None;
    }
    let sol = ata.lu().solve(&atb)?;
    sol.iter().all(|x| x.is_finite()).then(|| [sol[0], sol[1], sol[2]])
}

/// Weighted principal line through the points: centroid and unit direction.
fn principal_line(points: &[Vec2], weights: &[f64]) -> (Vec2, Vec2) {
    let total: f64 = weights.iter().sum();
    let mean = points.iter().zip(weights).fold(Vec2::zeros(), |acc, (p, w)| acc + p * *w) / total;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (p, w) in points.iter().zip(weights) {
        let d = p - mean;
        sxx += w * d.x * d.x;
        sxy += w * d.x * d.y;
        syy += w * d.y * d.y;
    }
    let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    (mean, Vec2::new(angle.cos(), angle.sin()))
}

/// Most salient run of inliers: `param` returns the position along the model
/// for inliers and `None` for outliers. Neighbors in a run are at most
/// `gap_max` apart along the model.
fn best_run(
    pool: &[usize],
    points: &PsfPointSet,
    gap_max: f64,
    mut param: impl FnMut(Vec2) -> Option<f64>,
    scratch: &mut Vec<(f64, usize)>,
) -> (f64, Vec<usize>) {
    scratch.clear();
    for &i in pool {
        if let Some(s) = param(points.points()[i]) {
            scratch.push((s, i));
        }
    }
    scratch.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let w = points.weights();
    let mut best = (0.0, 0, 0);
    let mut start = 0;
    let mut acc = 0.0;
    for k in 0..scratch.len() {
        if k > 0 && scratch[k].0 - scratch[k - 1].0 > gap_max {
            start = k;
            acc = 0.0;
        }
        acc += w[scratch[k].1];
        if acc > best.0 {
            best = (acc, start, k + 1);
        }
    }
    (best.0, scratch[best.1..best.2].iter().map(|&(_, i)| i).collect())
}

fn sample_distinct<const N: usize>(rng: &mut ChaCha8Rng, pool: &[usize]) -> Option<[usize; N]> {
    if pool.len() < N {
        return None;
    }
    let mut out = [0usize; N];
    let mut k = 0;
    while k < N {
        let c = pool[rng.random_range(0..pool.len())];
        if !out[..k].contains(&c) {
            out[k] = c;
            k += 1;
        }
    }
    Some(out)
}

fn remove_run(pool: &mut Vec<usize>, run: &[usize], n: usize) {
    let mut taken = vec![false; n];
    for &i in run {
        taken[i] = true;
    }
    pool.retain(|&i| !taken[i]);
}

fn sort_by_saliency(found: &mut [FoundSegment]) {
    found.sort_by(|a, b| b.saliency.total_cmp(&a.saliency));
}

/// Sequential RANSAC for line segments.
pub fn find_linear_segments(points: &PsfPointSet, params: &FitParams) -> Vec<FoundSegment> {
    let n = points.len();
    let min_saliency = params.saliency_min * points.total_weight();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(1);
    let mut pool: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    let mut scratch = Vec::new();
    let rho = params.inlier_dist;
    let xs = points.points();
    while pool.len() >= 2 {
        let mut best: (f64, Vec<usize>) = (0.0, Vec::new());
        for _ in 0..params.line_iters {
            let Some([i, j]) = sample_distinct::<2>(&mut rng, &pool) else { break };
            let d = xs[j] - xs[i];
            let len = d.norm();
            if len < 1e-9 {
                continue;
            }
            let (p, d) = (xs[i], d / len);
            let run = best_run(
                &pool,
                points,
                params.gap_max,
                |x| {
                    let v = x - p;
                    ((v.x * d.y - v.y * d.x).abs() < rho).then(|| v.dot(&d))
                },
                &mut scratch,
            );
            if run.0 > best.0 {
                best = run;
            }
        }
        if best.1.len() < 2 || best.0 < min_saliency {
            break;
        }
        let run_pts: Vec<Vec2> = best.1.iter().map(|&i| xs[i]).collect();
        let run_w: Vec<f64> = best.1.iter().map(|&i| points.weights()[i]).collect();
        let (mean, dir) = principal_line(&run_pts, &run_w);
        let (lo, hi) = run_pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            let s = (p - mean).dot(&dir);
            (lo.min(s), hi.max(s))
        });
        remove_run(&mut pool, &best.1, n);
        out.push(FoundSegment {
            segment: Segment::Line { a: mean + dir * lo, b: mean + dir * hi },
            saliency: best.0,
            inliers: best.1,
        });
    }
    sort_by_saliency(&mut out);
    out
}

/// Sequential RANSAC for parabolic arcs with vertical or horizontal axis.
/// Every four-point sample proposes one parabola of each orientation.
pub fn find_parabolic_segments(points: &PsfPointSet, params: &FitParams) -> Vec<FoundSegment> {
    let n = points.len();
    let min_saliency = params.saliency_min * points.total_weight();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(2);
    let mut pool: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    let mut scratch = Vec::new();
    let rho = params.inlier_dist;
    let xs = points.points();
    let ws = points.weights();
    let axes = [ParabolaAxis::Vertical, ParabolaAxis::Horizontal];
    while pool.len() >= 4 {
        let mut best: (f64, Vec<usize>, ParabolaAxis, [f64; 3]) = (0.0, Vec::new(), ParabolaAxis::Vertical, [0.0; 3]);
        for _ in 0..params.parabola_iters {
            let Some(sample) = sample_distinct::<4>(&mut rng, &pool) else { break };
            for axis in axes {
                let local: Vec<(f64, f64)> = sample.iter().map(|&i| axis.local(xs[i])).collect();
                let Some(coef) = fit_parabola(&local, &[1.0; 4]) else { continue };
                let run = best_run(
                    &pool,
                    points,
                    params.gap_max,
                    |x| {
                        let (u, v) = axis.local(x);
                        let slope = 2.0 * coef[0] * u + coef[1];
                        let approx = (v - eval_parabola(&coef, u)).abs() / (1.0 + slope * slope).sqrt();
                        if approx > 4.0 * rho {
                            return None;
                        }
                        let (uc, d) = closest_on_parabola(&coef, u, v);
                        (d < rho).then(|| arc_length(&coef, uc))
                    },
                    &mut scratch,
                );
                if run.0 > best.0 {
                    best = (run.0, run.1, axis, coef);
                }
            }
        }
        if best.1.len() < 3 || best.0 < min_saliency {
            break;
        }
        let (saliency, run, axis, coef0) = best;
        let local: Vec<(f64, f64)> = run.iter().map(|&i| axis.local(xs[i])).collect();
        let run_w: Vec<f64> = run.iter().map(|&i| ws[i]).collect();
        let coef = fit_parabola(&local, &run_w).unwrap_or(coef0);
        let (lo, hi) = local.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(u, v)| {
            let (uc, _) = closest_on_parabola(&coef, u, v);
            (lo.min(uc), hi.max(uc))
        });
        remove_run(&mut pool, &run, n);
        out.push(FoundSegment {
            segment: Segment::Parabola { axis, coef, u0: lo, u1: hi },
            saliency,
            inliers: run,
        });
    }
    sort_by_saliency(&mut out);
    out
}
