//! Candidate curves from single segments and from pairs joined at the
//! intersection of their supporting lines or parabolas.

use super::ransac::{arc_length, eval_parabola, FoundSegment, ParabolaAxis, Segment};
use super::{FitParams, DEFAULT_JOIN_DIST};
use crate::curve::{PiecewiseCurve, Vec2};

/// Only the most salient segments of each kind are paired.
pub const MAX_PAIRED_SEGMENTS: usize = 6;
const MIN_PIECE_FRACTION: f64 = 1e-3;

fn line_intersection(a1: Vec2, b1: Vec2, a2: Vec2, b2: Vec2) -> Option<Vec2> {
    let d1 = b1 - a1;
    let d2 = b2 - a2;
    let den = d1.x * d2.y - d1.y * d2.x;
    if den.abs() <= 1e-9 * d1.norm() * d2.norm() {
        return None;
    }
    let w = a2 - a1;
    let s = (w.x * d2.y - w.y * d2.x) / den;
    Some(a1 + d1 * s)
}

fn farther(p: Vec2, a: Vec2, b: Vec2) -> Vec2 {
    if (a - p).norm() >= (b - p).norm() {
        a
    } else {
        b
    }
}

/// Point and tangent of a parabola at free coordinate `u`.
fn arc_point(axis: ParabolaAxis, coef: &[f64; 3], u: f64) -> (Vec2, Vec2) {
    let v = eval_parabola(coef, u);
    let dv = 2.0 * coef[0] * u + coef[1];
    match axis {
        ParabolaAxis::Vertical => (Vec2::new(u, v), Vec2::new(1.0, dv)),
        ParabolaAxis::Horizontal => (Vec2::new(v, u), Vec2::new(dv, 1.0)),
    }
}

struct Arc {
    axis: ParabolaAxis,
    coef: [f64; 3],
    u0: f64,
    u1: f64,
}

impl Arc {
    fn from_segment(s: &Segment) -> Option<Self> {
        match *s {
            Segment::Parabola { axis, coef, u0, u1 } => Some(Self { axis, coef, u0, u1 }),
            Segment::Line { .. } => None,
        }
    }

    fn at(&self, u: f64) -> (Vec2, Vec2) {
        arc_point(self.axis, &self.coef, u)
    }

    fn span(&self, from: f64, to: f64) -> Segment {
        Segment::Parabola {
            axis: self.axis,
            coef: self.coef,
            u0: from,
            u1: to,
        }
    }
}

/// Intersection of two parabolas by Newton's method from each pair of arc
/// endpoints; returns the free coordinates on both.
fn arc_intersection(p: &Arc, q: &Arc) -> Option<(f64, f64)> {
    let mut best: Option<(f64, f64, f64)> = None;
    for &s0 in &[p.u0, p.u1] {
        for &r0 in &[q.u0, q.u1] {
            let (mut s, mut r) = (s0, r0);
            let mut ok = false;
            for _ in 0..30 {
                let (a, da) = p.at(s);
                let (b, db) = q.at(r);
                let f = a - b;
                if f.norm() < 1e-10 {
                    ok = true;
                    break;
                }
                // Jacobian columns: da and −db.
                let det = da.x * (-db.y) - (-db.x) * da.y;
                if det.abs() < 1e-12 {
                    break;
                }
                let ds = (f.x * (-db.y) - (-db.x) * f.y) / det;
                let dr = (da.x * f.y - da.y * f.x) / det;
                s -= ds;
                r -= dr;
                if !(s.is_finite() && r.is_finite()) {
                    break;
                }
            }
            if ok {
                let score = (p.at(s).0 - p.at(s0).0).norm() + (q.at(r).0 - q.at(r0).0).norm();
                if best.map_or(true, |b| score < b.2) {
                    best = Some((s, r, score));
                }
            }
        }
    }
    best.map(|(s, r, _)| (s, r))
}

fn join_arcs(p: &Arc, q: &Arc, join: f64) -> Option<PiecewiseCurve> {
    let (s, r) = arc_intersection(p, q)?;
    let point = p.at(s).0;
    let seg_p = p.span(p.u0, p.u1);
    let seg_q = q.span(q.u0, q.u1);
    if seg_p.distance(point) >= join || seg_q.distance(point) >= join {
        return None;
    }
    let far_p = if (p.at(p.u0).0 - point).norm() >= (p.at(p.u1).0 - point).norm() { p.u0 } else { p.u1 };
    let far_q = if (q.at(q.u0).0 - point).norm() >= (q.at(q.u1).0 - point).norm() { q.u0 } else { q.u1 };
    let first = p.span(far_p, s);
    let second = q.span(r, far_q);
    let l1 = (arc_length(&p.coef, s) - arc_length(&p.coef, far_p)).abs();
    let l2 = (arc_length(&q.coef, far_q) - arc_length(&q.coef, r)).abs();
    let tb = l1 / (l1 + l2);
    if !(tb > MIN_PIECE_FRACTION && tb < 1.0 - MIN_PIECE_FRACTION) {
        return None;
    }
    PiecewiseCurve::join(&first.piece(), &second.piece(), tb).ok()
}

fn top(found: &[FoundSegment]) -> Vec<Segment> {
    let mut sorted: Vec<&FoundSegment> = found.iter().collect();
    sorted.sort_by(|a, b| b.saliency.total_cmp(&a.saliency));
    sorted.into_iter().take(MAX_PAIRED_SEGMENTS).map(|f| f.segment).collect()
}

/// Every single segment plus two-piece curves through the junction of each
/// pair of lines and each pair of parabolas whose intersection lies within
/// the join distance of both segments.
pub fn assemble_candidates(lines: &[FoundSegment], arcs: &[FoundSegment], params: &FitParams) -> Vec<PiecewiseCurve> {
    let join = params.join_dist.unwrap_or(DEFAULT_JOIN_DIST);
    let mut out: Vec<PiecewiseCurve> = lines.iter().chain(arcs).map(|f| f.segment.curve()).collect();
    let lines = top(lines);
    for i in 0..lines.len() {
        for j in i + 1..lines.len() {
            let (Segment::Line { a: a1, b: b1 }, Segment::Line { a: a2, b: b2 }) = (lines[i], lines[j]) else {
                continue;
            };
            let Some(p) = line_intersection(a1, b1, a2, b2) else { continue };
            if lines[i].distance(p) >= join || lines[j].distance(p) >= join {
                continue;
            }
            let start = farther(p, a1, b1);
            let end = farther(p, a2, b2);
            if let Ok(c) = PiecewiseCurve::polyline(start, p, end) {
                if c.is_two_piece() {
                    out.push(c);
                }
            }
        }
    }
    let arcs: Vec<Arc> = top(arcs).iter().filter_map(Arc::from_segment).collect();
    for i in 0..arcs.len() {
        for j in i + 1..arcs.len() {
            if let Some(c) = join_arcs(&arcs[i], &arcs[j], join) {
                out.push(c);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(a: (f64, f64), b: (f64, f64), saliency: f64) -> FoundSegment {
        FoundSegment {
            segment: Segment::Line {
                a: Vec2::new(a.0, a.1),
                b: Vec2::new(b.0, b.1),
            },
            saliency,
            inliers: Vec::new(),
        }
    }

    #[test]
    fn corner_gives_a_two_piece_candidate() {
        let lines = [line((0.0, 0.0), (18.0, 0.0), 2.0), line((20.5, 1.5), (30.0, 20.0), 1.0)];
        let cands = assemble_candidates(&lines, &[], &FitParams::default());
        let joined: Vec<_> = cands.iter().filter(|c| c.is_two_piece()).collect();
        assert_eq!(joined.len(), 1);
        let c = joined[0];
        let corner = c.eval(c.tbreak());
        // Supporting lines y = 0 and the one through (20.5, 1.5) and (30, 20).
        let d = Vec2::new(9.5, 18.5);
        let expect = Vec2::new(20.5 - 1.5 * d.x / d.y, 0.0);
        assert!((corner - expect).norm() < 1.0, "{corner:?} vs {expect:?}");
    }

    #[test]
    fn parallel_segments_are_not_joined() {
        let lines = [line((0.0, 0.0), (10.0, 0.0), 1.0), line((0.0, 5.0), (10.0, 5.0), 1.0)];
        let cands = assemble_candidates(&lines, &[], &FitParams::default());
        assert_eq!(cands.len(), 2);
        assert!(cands.iter().all(|c| !c.is_two_piece()));
    }

    #[test]
    fn single_segment_is_the_only_candidate() {
        let lines = [line((1.0, 2.0), (11.0, 2.0), 1.0)];
        let cands = assemble_candidates(&lines, &[], &FitParams::default());
        assert_eq!(cands, vec![lines[0].segment.curve()]);
    }

    #[test]
    fn distant_intersection_is_rejected() {
        let lines = [line((0.0, 0.0), (10.0, 0.0), 1.0), line((100.0, 5.0), (101.0, 50.0), 1.0)];
        let cands = assemble_candidates(&lines, &[], &FitParams::default());
        assert!(cands.iter().all(|c| !c.is_two_piece()));
    }

    #[test]
    fn parabola_pair_meets_at_the_junction() {
        let arc = |coef: [f64; 3], u0: f64, u1: f64| FoundSegment {
            segment: Segment::Parabola {
                axis: ParabolaAxis::Vertical,
                coef,
                u0,
                u1,
            },
            saliency: 1.0,
            inliers: Vec::new(),
        };
        // Two parabolas through (20, 10), each found short of the junction.
        let p = [0.01, 0.0, 6.0];
        let q = [0.005, -1.2, 32.0];
        let cands = assemble_candidates(&[], &[arc(p, 0.0, 18.0), arc(q, 22.0, 40.0)], &FitParams::default());
        let joined: Vec<_> = cands.iter().filter(|c| c.is_two_piece()).collect();
        assert_eq!(joined.len(), 1);
        let c = joined[0];
        let corner = c.eval(c.tbreak());
        assert!((corner - Vec2::new(20.0, 10.0)).norm() < 1e-6, "{corner:?}");
    }
}
