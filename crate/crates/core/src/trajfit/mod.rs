//! Vectorization of a blur kernel into a piecewise-quadratic trajectory.
//!
//! The kernel pixels are treated as weighted points. Linear and parabolic
//! segments are found by sequential RANSAC, paired into two-piece
//! candidates, refined by ICP with reweighted least squares and finally
//! ranked by how well their rasterization reproduces the kernel.

mod assemble;
mod ransac;
mod refine;

use serde::{Deserialize, Serialize};

use crate::curve::{PiecewiseCurve, Vec2};
use crate::error::{Error, Result};
use crate::formation::rasterize_curve;
use crate::imaging::Psf;

pub use assemble::{assemble_candidates, MAX_PAIRED_SEGMENTS};
pub use ransac::{find_linear_segments, find_parabolic_segments, FoundSegment, ParabolaAxis, Segment};
pub use refine::{refine_curve, Refinement, CLOSEST_SAMPLES, ICP_MAX_ITERS, ICP_TOL};

use refine::{fit_curve, CurveSamples, Obs};

/// Junction distance used when the object size is unknown, pixels.
pub const DEFAULT_JOIN_DIST: f64 = 15.0;
/// Kernel weights below this fraction of the maximum are ignored.
pub const PSF_THRESHOLD: f64 = 1e-3;
/// Retimed two-piece curves need at least this mass fraction on each side.
const MIN_RETIMED_FRACTION: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitParams {
    /// Inlier distance of the segment searches and of refinement, pixels.
    pub inlier_dist: f64,
    /// Weight of the curve-to-points term relative to the inlier mass.
    pub length_weight: f64,
    /// RANSAC stops when the best run holds less than this fraction of the mass.
    pub saliency_min: f64,
    /// Largest gap inside a run of consecutive inliers, pixels.
    pub gap_max: f64,
    pub line_iters: usize,
    pub parabola_iters: usize,
    /// Consistency threshold on the relative rasterization error.
    pub tau: f64,
    /// Largest distance from a junction to the segments it joins, pixels.
    pub join_dist: Option<f64>,
    pub seed: u64,
}

impl Default for FitParams {
    fn default() -> Self {
        Self {
            inlier_dist: 2.0,
            length_weight: 0.5,
            saliency_min: 0.05,
            gap_max: 2.0,
            line_iters: 500,
            parabola_iters: 1000,
            tau: 0.6,
            join_dist: None,
            seed: 0,
        }
    }
}

impl FitParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("inlier_dist", self.inlier_dist),
            ("length_weight", self.length_weight),
            ("saliency_min", self.saliency_min),
            ("gap_max", self.gap_max),
            ("tau", self.tau),
            ("join_dist", self.join_dist.unwrap_or(1.0)),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} = {v} must be positive")));
            }
        }
        if self.line_iters == 0 || self.parabola_iters == 0 {
            return Err(Error::InvalidArgument("RANSAC iteration counts must be positive".into()));
        }
        Ok(())
    }
}

/// Weighted pixel coordinates of a blur kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct PsfPointSet {
    points: Vec<Vec2>,
    weights: Vec<f64>,
}

impl PsfPointSet {
    pub fn new(points: Vec<Vec2>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::SizeMismatch(format!("{} points, {} weights", points.len(), weights.len())));
        }
        if points.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
            return Err(Error::NonFinite("point coordinates"));
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidArgument("point weights must be positive".into()));
        }
        Ok(Self { points, weights })
    }

    /// Pixels of `h` whose weight exceeds `rel` times the largest weight, in
    /// frame coordinates.
    pub fn from_psf(h: &Psf, rel: f64) -> Self {
        let cut = rel * h.max_weight();
        let (ox, oy) = h.offset();
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for j in 0..h.height() {
            for i in 0..h.width() {
                let w = h.local(i, j);
                if w > cut && w > 0.0 && w.is_finite() {
                    points.push(Vec2::new((ox + i as i64) as f64, (oy + j as i64) as f64));
                    weights.push(w);
                }
            }
        }
        Self { points, weights }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFit {
    pub curve: PiecewiseCurve,
    /// Relative rasterization error of `curve` against the kernel.
    pub fit_error: f64,
}

/// Frame size that keeps every reasonable candidate inside the raster limit.
fn scoring_frame(h: &Psf) -> (usize, usize) {
    let r = h.rect();
    let extent = [r.x0, r.y0, r.x1, r.y1].iter().map(|v| v.unsigned_abs()).max().unwrap_or(0) as usize;
    let side = 2 * extent + 64;
    (side, side)
}

/// `‖H_C − H‖ / ‖H‖` with `H_C` rasterized at the mass of `h`.
pub fn curve_error(curve: &PiecewiseCurve, h: &Psf) -> Result<f64> {
    let norm = h.norm_l2();
    let mass = h.mass();
    if !(norm > 0.0) || !(mass > 0.0) {
        return Err(Error::EmptyKernel);
    }
    let hc = rasterize_curve(curve, scoring_frame(h), mass)?;
    Ok(hc.distance_l2(h) / norm)
}

/// Reparametrizes `curve` so that the kernel mass accumulates uniformly in t.
fn retime(curve: &PiecewiseCurve, points: &PsfPointSet, params: &FitParams) -> Option<PiecewiseCurve> {
    let samples = CurveSamples::new(curve, CLOSEST_SAMPLES);
    let mut matched: Vec<(f64, Vec2, f64)> = points
        .points()
        .iter()
        .zip(points.weights())
        .filter(|(x, _)| samples.near(**x, params.inlier_dist))
        .filter_map(|(x, &w)| {
            let (t, d) = samples.closest(*x);
            (d < params.inlier_dist).then_some((t, *x, w))
        })
        .collect();
    if matched.len() < 3 {
        return None;
    }
    matched.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = matched.iter().map(|m| m.2).sum();
    let mut acc = 0.0;
    let mut tb = None;
    let mut obs = Vec::with_capacity(matched.len());
    for &(t, x, w) in &matched {
        let tau = (acc + 0.5 * w) / total;
        if curve.is_two_piece() && tb.is_none() && t >= curve.tbreak() {
            tb = Some(acc / total);
        }
        acc += w;
        obs.push(Obs { t: tau, x, w });
    }
    if curve.is_two_piece() {
        match tb {
            Some(v) if v > MIN_RETIMED_FRACTION && v < 1.0 - MIN_RETIMED_FRACTION => fit_curve(&obs, Some(v)),
            _ => fit_curve(&obs, None),
        }
    } else {
        fit_curve(&obs, None)
    }
}

/// Two-piece candidates continuing a single-piece `curve` from either end
/// toward nearby points it leaves unexplained. A short bounce leg is often
/// absorbed into the inlier band of the long one and never found alone.
fn extensions(curve: &PiecewiseCurve, points: &PsfPointSet, params: &FitParams) -> Vec<PiecewiseCurve> {
    if curve.is_two_piece() {
        return Vec::new();
    }
    let join = params.join_dist.unwrap_or(DEFAULT_JOIN_DIST);
    let samples = CurveSamples::new(curve, CLOSEST_SAMPLES);
    let mut out = Vec::new();
    for (end, far) in [(curve.end(), curve.start()), (curve.start(), curve.end())] {
        let (mut sum, mut mass) = (Vec2::zeros(), 0.0);
        let mut near = Vec::new();
        for (x, &w) in points.points().iter().zip(points.weights()) {
            if (x - end).norm() >= join || samples.closest(*x).1 <= params.inlier_dist {
                continue;
            }
            sum += x * w;
            mass += w;
            near.push(*x);
        }
        if near.len() < 2 {
            continue;
        }
        let dir = sum / mass - end;
        if dir.norm() < 1e-9 {
            continue;
        }
        let dir = dir.normalize();
        let reach = near.iter().map(|x| (x - end).dot(&dir)).fold(0.0, f64::max);
        if let Ok(c) = PiecewiseCurve::polyline(far, end, end + dir * reach) {
            if c.is_two_piece() {
                out.push(c);
            }
        }
    }
    out
}

/// Best piecewise-quadratic trajectory explaining `h` and its relative error.
pub fn fit_trajectory(h: &Psf, params: &FitParams) -> Result<TrajectoryFit> {
    params.validate()?;
    if !(h.max_weight() > 0.0) {
        return Err(Error::NoSalientSegment);
    }
    let points = PsfPointSet::from_psf(h, PSF_THRESHOLD);
    if points.is_empty() {
        return Err(Error::NoSalientSegment);
    }
    let lines = find_linear_segments(&points, params);
    let arcs = if points.len() >= 4 {
        find_parabolic_segments(&points, params)
    } else {
        Vec::new()
    };
    if lines.is_empty() && arcs.is_empty() {
        return Err(Error::NoSalientSegment);
    }
    let mut best: Option<TrajectoryFit> = None;
    let mut consider = |curve: PiecewiseCurve| {
        if let Ok(e) = curve_error(&curve, h) {
            if e.is_finite() && best.as_ref().map_or(true, |b| e < b.fit_error) {
                best = Some(TrajectoryFit { curve, fit_error: e });
            }
        }
    };
    let mut queue = assemble_candidates(&lines, &arcs, params);
    let singles = queue.len();
    let mut k = 0;
    while k < queue.len() {
        let candidate = queue[k].clone();
        let refined = refine_curve(&candidate, &points, params).curve;
        if k < singles {
            queue.extend(extensions(&refined, &points, params));
        }
        if let Some(r) = retime(&refined, &points, params) {
            consider(r);
        }
        consider(refined);
        consider(candidate);
        k += 1;
    }
    best.ok_or(Error::NoSalientSegment)
}

/// Whether a fit is good enough to trust: strictly below the threshold.
pub fn consistency_check(fit_error: f64, params: &FitParams) -> bool {
    fit_error < params.tau
}

/// Curve position at `t`, extrapolating outside `[0, 1]`.
pub fn evaluate_curve(curve: &PiecewiseCurve, t: f64) -> Vec2 {
    curve.eval(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::Piece;

    fn raster(curve: &PiecewiseCurve) -> Psf {
        rasterize_curve(curve, (200, 200), 1.0).unwrap()
    }

    #[test]
    fn clean_line_is_recovered() {
        let truth = PiecewiseCurve::segment(Vec2::new(0.0, 0.0), Vec2::new(30.0, 10.0));
        let fit = fit_trajectory(&raster(&truth), &FitParams::default()).unwrap();
        assert!(!fit.curve.is_two_piece() || fit.curve.pieces()[0].is_linear());
        let (s, e) = (fit.curve.start(), fit.curve.end());
        let err = ((s - truth.start()).norm().max((e - truth.end()).norm()))
            .min((s - truth.end()).norm().max((e - truth.start()).norm()));
        assert!(err < 1.0, "endpoint error {err}");
        assert!(fit.fit_error < 0.2, "{}", fit.fit_error);
        assert!(consistency_check(fit.fit_error, &FitParams { tau: 0.5, ..FitParams::default() }));
    }

    #[test]
    fn bounce_breakpoint_is_recovered() {
        // Two 25 px legs meeting at 120 degrees.
        let corner = Vec2::new(40.0, 40.0);
        let a = corner + Vec2::new(-25.0, 0.0);
        let dir = Vec2::new((60f64).to_radians().cos(), -(60f64).to_radians().sin());
        let b = corner - dir * 25.0;
        let truth = PiecewiseCurve::polyline(a, corner, b).unwrap();
        let fit = fit_trajectory(&raster(&truth), &FitParams::default()).unwrap();
        assert!(fit.curve.is_two_piece());
        assert!(fit.curve.tbreak() > 0.0 && fit.curve.tbreak() < 1.0);
        let found = fit.curve.eval(fit.curve.tbreak());
        assert!((found - corner).norm() < 2.0, "{found:?}");
    }

    #[test]
    fn zero_kernel_has_no_segment() {
        let h = Psf::new(5, 5, (0, 0), vec![0.0; 25]).unwrap();
        assert!(matches!(fit_trajectory(&h, &FitParams::default()), Err(Error::NoSalientSegment)));
    }

    #[test]
    fn reported_error_matches_rescoring() {
        let truth = PiecewiseCurve::quadratic(Vec2::new(10.0, 10.0), Vec2::new(30.0, 5.0), Vec2::new(0.0, 12.0));
        let h = raster(&truth);
        let fit = fit_trajectory(&h, &FitParams::default()).unwrap();
        let again = curve_error(&fit.curve, &h).unwrap();
        assert!((again - fit.fit_error).abs() < 1e-9);
    }

    #[test]
    fn consistency_is_strict() {
        let p = FitParams::default();
        assert!(consistency_check(0.0, &p));
        assert!(!consistency_check(p.tau, &p));
    }

    #[test]
    fn evaluation_extrapolates() {
        let c = PiecewiseCurve::single(Piece::linear(Vec2::new(1.0, 2.0), Vec2::new(3.0, -1.0)));
        assert_eq!(evaluate_curve(&c, 2.0), Vec2::new(7.0, 0.0));
        let k = PiecewiseCurve::constant(Vec2::new(4.0, 4.0));
        assert_eq!(evaluate_curve(&k, -3.0), Vec2::new(4.0, 4.0));
    }

    #[test]
    fn params_reject_nonpositive_values() {
        assert!(FitParams { inlier_dist: 0.0, ..FitParams::default() }.validate().is_err());
        assert!(FitParams { join_dist: Some(-1.0), ..FitParams::default() }.validate().is_err());
        assert!(FitParams::default().validate().is_ok());
    }

    #[test]
    fn point_set_uses_frame_coordinates() {
        let h = Psf::new(2, 1, (5, 7), vec![1.0, 1e-6]).unwrap();
        let pts = PsfPointSet::from_psf(&h, PSF_THRESHOLD);
        assert_eq!(pts.points(), &[Vec2::new(5.0, 7.0)]);
    }
}
