//! Piecewise-quadratic intra-frame trajectories.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;

/// Tolerance for the continuity condition at the breakpoint.
pub const CONTINUITY_TOL: f64 = 1e-9;

/// Polynomial `c0 + c1 t + c2 t²` with 2-D coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub coeffs: [Vec2; 3],
}

impl Piece {
    pub fn new(c0: Vec2, c1: Vec2, c2: Vec2) -> Self {
        Self {
            coeffs: [c0, c1, c2],
        }
    }

    pub fn linear(c0: Vec2, c1: Vec2) -> Self {
        Self::new(c0, c1, Vec2::zeros())
    }

    #[inline]
    pub fn eval(&self, t: f64) -> Vec2 {
        let [c0, c1, c2] = self.coeffs;
        c0 + (c1 + c2 * t) * t
    }

    #[inline]
    pub fn derivative(&self, t: f64) -> Vec2 {
        self.coeffs[1] + self.coeffs[2] * (2.0 * t)
    }

    pub fn is_linear(&self) -> bool {
        self.coeffs[2] == Vec2::zeros()
    }

    /// The polynomial `t ↦ self(a t + b)`.
    pub fn compose_affine(&self, a: f64, b: f64) -> Piece {
        let [c0, c1, c2] = self.coeffs;
        Piece::new(
            c0 + c1 * b + c2 * (b * b),
            c1 * a + c2 * (2.0 * a * b),
            c2 * (a * a),
        )
    }

    pub fn translated(&self, v: Vec2) -> Piece {
        Piece::new(self.coeffs[0] + v, self.coeffs[1], self.coeffs[2])
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs
            .iter()
            .all(|c| c.x.is_finite() && c.y.is_finite())
    }
}

/// Continuous curve on `t ∈ [0, 1]` made of one or two polynomial pieces of
/// degree at most two. Single-piece curves carry `tbreak = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseCurve {
    pieces: Vec<Piece>,
    tbreak: f64,
}

impl PiecewiseCurve {
    pub fn single(piece: Piece) -> Self {
        Self {
            pieces: vec![piece],
            tbreak: 1.0,
        }
    }

    pub fn constant(p: Vec2) -> Self {
        Self::single(Piece::linear(p, Vec2::zeros()))
    }

    /// Uniform-speed segment from `a` (t = 0) to `b` (t = 1).
    pub fn segment(a: Vec2, b: Vec2) -> Self {
        Self::single(Piece::linear(a, b - a))
    }

    pub fn quadratic(c0: Vec2, c1: Vec2, c2: Vec2) -> Self {
        Self::single(Piece::new(c0, c1, c2))
    }

    /// Two pieces joined at `tbreak ∈ (0, 1)`; fails when the pieces do not
    /// meet at the breakpoint.
    pub fn two_piece(first: Piece, second: Piece, tbreak: f64) -> Result<Self> {
        if !(tbreak > 0.0 && tbreak < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "breakpoint {tbreak} outside (0, 1)"
            )));
        }
        let gap = (first.eval(tbreak) - second.eval(tbreak)).norm();
        let scale = 1.0 + first.eval(tbreak).norm();
        if !(gap <= CONTINUITY_TOL * scale) {
            return Err(Error::InvalidArgument(format!(
                "pieces are discontinuous at t = {tbreak} (gap {gap:e})"
            )));
        }
        Ok(Self {
            pieces: vec![first, second],
            tbreak,
        })
    }

    /// Polyline `a → corner → b` at uniform speed, with the breakpoint at the
    /// chord-length fraction of the corner.
    pub fn polyline(a: Vec2, corner: Vec2, b: Vec2) -> Result<Self> {
        let l1 = (corner - a).norm();
        let l2 = (b - corner).norm();
        if l1 + l2 <= 0.0 {
            return Ok(Self::constant(a));
        }
        let tb = l1 / (l1 + l2);
        if tb <= 1e-9 || tb >= 1.0 - 1e-9 {
            return Ok(Self::segment(a, b));
        }
        Self::join(
            &Piece::linear(a, corner - a),
            &Piece::linear(corner, b - corner),
            tb,
        )
    }

    /// Join two pieces each parametrized on `[0, 1]` (the first ending where
    /// the second starts) into one curve with breakpoint `tbreak`.
    pub fn join(first: &Piece, second: &Piece, tbreak: f64) -> Result<Self> {
        let p1 = first.compose_affine(1.0 / tbreak, 0.0);
        let a = 1.0 / (1.0 - tbreak);
        let mut p2 = second.compose_affine(a, -tbreak * a);
        // Remove rounding drift so continuity holds to machine precision.
        let drift = p1.eval(tbreak) - p2.eval(tbreak);
        p2.coeffs[0] += drift;
        Self::two_piece(p1, p2, tbreak)
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn tbreak(&self) -> f64 {
        self.tbreak
    }

    pub fn is_two_piece(&self) -> bool {
        self.pieces.len() == 2
    }

    pub fn is_finite(&self) -> bool {
        self.tbreak.is_finite() && self.pieces.iter().all(Piece::is_finite)
    }

    /// Index of the piece governing parameter `t` (extrapolation uses the
    /// first piece below 0 and the last piece above 1).
    #[inline]
    pub fn piece_index(&self, t: f64) -> usize {
        if self.pieces.len() == 2 && t > self.tbreak {
            1
        } else {
            0
        }
    }

    #[inline]
    pub fn eval(&self, t: f64) -> Vec2 {
        self.pieces[self.piece_index(t)].eval(t)
    }

    pub fn derivative(&self, t: f64) -> Vec2 {
        self.pieces[self.piece_index(t)].derivative(t)
    }

    pub fn start(&self) -> Vec2 {
        self.eval(0.0)
    }

    pub fn end(&self) -> Vec2 {
        self.eval(1.0)
    }

    /// Polyline length from `n` uniform samples.
    pub fn length(&self, n: usize) -> f64 {
        let n = n.max(2);
        let mut prev = self.eval(0.0);
        let mut total = 0.0;
        for k in 1..n {
            let p = self.eval(k as f64 / (n - 1) as f64);
            total += (p - prev).norm();
            prev = p;
        }
        total
    }

    /// Traversal in the opposite direction.
    pub fn reversed(&self) -> Self {
        if self.pieces.len() == 1 {
            return Self::single(self.pieces[0].compose_affine(-1.0, 1.0));
        }
        let first = self.pieces[1].compose_affine(-1.0, 1.0);
        let mut second = self.pieces[0].compose_affine(-1.0, 1.0);
        let tb = 1.0 - self.tbreak;
        second.coeffs[0] += first.eval(tb) - second.eval(tb);
        Self {
            pieces: vec![first, second],
            tbreak: tb,
        }
    }

    pub fn translated(&self, v: Vec2) -> Self {
        Self {
            pieces: self.pieces.iter().map(|p| p.translated(v)).collect(),
            tbreak: self.tbreak,
        }
    }

    /// The last piece continued over the next unit interval: `t ↦ C(t + 1)`.
    pub fn extrapolated_next(&self) -> Self {
        let last = self.pieces.last().expect("curve has a piece");
        Self::single(last.compose_affine(1.0, 1.0))
    }

    /// Restriction to `[0, e]` re-parametrized onto `[0, 1]`.
    pub fn restricted(&self, e: f64) -> Self {
        if self.pieces.len() == 2 && self.tbreak < e {
            let tb = self.tbreak / e;
            let first = self.pieces[0].compose_affine(e, 0.0);
            let mut second = self.pieces[1].compose_affine(e, 0.0);
            second.coeffs[0] += first.eval(tb) - second.eval(tb);
            if tb < 1.0 {
                return Self {
                    pieces: vec![first, second],
                    tbreak: tb,
                };
            }
            return Self::single(first);
        }
        Self::single(self.pieces[0].compose_affine(e, 0.0))
    }

    /// Bounding box `(min, max)` of the samples at `n` uniform parameters in
    /// `[t0, t1]`.
    pub fn bounds(&self, t0: f64, t1: f64, n: usize) -> (Vec2, Vec2) {
        let n = n.max(2);
        let mut lo = Vec2::repeat(f64::INFINITY);
        let mut hi = Vec2::repeat(f64::NEG_INFINITY);
        for k in 0..n {
            let p = self.eval(t0 + (t1 - t0) * k as f64 / (n - 1) as f64);
            lo = lo.inf(&p);
            hi = hi.sup(&p);
        }
        (lo, hi)
    }

    /// Mean distance between the two curves sampled at the same parameters.
    pub fn mean_distance(&self, other: &PiecewiseCurve, n: usize) -> f64 {
        let n = n.max(2);
        (0..n)
            .map(|k| {
                let t = k as f64 / (n - 1) as f64;
                (self.eval(t) - other.eval(t)).norm()
            })
            .sum::<f64>()
            / n as f64
    }

    /// Flat coefficient record: `tbreak` then `c0x c0y c1x c1y c2x c2y` for
    /// each of two pieces (second zero when single).
    pub fn to_flat(&self) -> [f64; 13] {
        let mut out = [0.0; 13];
        out[0] = self.tbreak;
        for (k, piece) in self.pieces.iter().enumerate() {
            for (j, c) in piece.coeffs.iter().enumerate() {
                out[1 + 6 * k + 2 * j] = c.x;
                out[2 + 6 * k + 2 * j] = c.y;
            }
        }
        out
    }

    pub fn from_flat(v: &[f64; 13]) -> Result<Self> {
        let piece = |k: usize| {
            Piece::new(
                Vec2::new(v[1 + 6 * k], v[2 + 6 * k]),
                Vec2::new(v[3 + 6 * k], v[4 + 6 * k]),
                Vec2::new(v[5 + 6 * k], v[6 + 6 * k]),
            )
        };
        let tb = v[0];
        let curve = if tb >= 1.0 {
            Self::single(piece(0))
        } else {
            Self::two_piece(piece(0), piece(1), tb)?
        };
        if !curve.is_finite() {
            return Err(Error::NonFinite("curve coefficients"));
        }
        Ok(curve)
    }
}

/// JSON form of a curve: `{pieces: [[[c0x,c0y],[c1x,c1y],[c2x,c2y]], ...], tbreak, frame_index}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub pieces: Vec<[[f64; 2]; 3]>,
    pub tbreak: f64,
    pub frame_index: usize,
}

impl CurveRecord {
    pub fn new(curve: &PiecewiseCurve, frame_index: usize) -> Self {
        Self {
            pieces: curve
                .pieces()
                .iter()
                .map(|p| p.coeffs.map(|c| [c.x, c.y]))
                .collect(),
            tbreak: curve.tbreak(),
            frame_index,
        }
    }

    pub fn to_curve(&self) -> Result<PiecewiseCurve> {
        let piece = |c: &[[f64; 2]; 3]| {
            Piece::new(
                Vec2::new(c[0][0], c[0][1]),
                Vec2::new(c[1][0], c[1][1]),
                Vec2::new(c[2][0], c[2][1]),
            )
        };
        let curve = match self.pieces.as_slice() {
            [p] => PiecewiseCurve::single(piece(p)),
            [p, q] => PiecewiseCurve::two_piece(piece(p), piece(q), self.tbreak)?,
            _ => {
                return Err(Error::Parse(format!(
                    "curve must have 1 or 2 pieces, got {}",
                    self.pieces.len()
                )))
            }
        };
        if !curve.is_finite() {
            return Err(Error::NonFinite("curve coefficients"));
        }
        Ok(curve)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(x: f64, y: f64) -> Vec2 {
        Vec2::new(x, y)
    }

    #[test]
    fn constant_curve_everywhere_equal() {
        let c = PiecewiseCurve::constant(v(3.0, -2.0));
        for t in [-3.0, 0.0, 0.4, 1.0, 7.5] {
            assert_eq!(c.eval(t), v(3.0, -2.0));
        }
    }

    #[test]
    fn linear_extrapolation() {
        let c = PiecewiseCurve::single(Piece::linear(v(1.0, 2.0), v(3.0, -1.0)));
        assert_eq!(c.eval(2.0), v(7.0, 0.0));
    }

    #[test]
    fn polyline_is_continuous_and_chord_parametrized() {
        let c = PiecewiseCurve::polyline(v(0.0, 0.0), v(10.0, 0.0), v(10.0, 30.0)).unwrap();
        assert!((c.tbreak() - 0.25).abs() < 1e-12);
        let tb = c.tbreak();
        let d = (c.pieces()[0].eval(tb) - c.pieces()[1].eval(tb)).norm();
        assert!(d < 1e-9);
        assert!((c.eval(tb) - v(10.0, 0.0)).norm() < 1e-9);
        assert!((c.end() - v(10.0, 30.0)).norm() < 1e-9);
        // Uniform speed across both pieces.
        assert!((c.derivative(0.1).norm() - c.derivative(0.9).norm()).abs() < 1e-9);
    }

    #[test]
    fn discontinuous_pieces_rejected() {
        let a = Piece::linear(v(0.0, 0.0), v(1.0, 0.0));
        let b = Piece::linear(v(5.0, 0.0), v(1.0, 0.0));
        assert!(PiecewiseCurve::two_piece(a, b, 0.5).is_err());
    }

    #[test]
    fn json_record_round_trip() {
        let c = PiecewiseCurve::polyline(v(1.0, 1.0), v(4.0, 9.0), v(12.0, 2.0)).unwrap();
        let rec = CurveRecord::new(&c, 7);
        let s = serde_json::to_string(&rec).unwrap();
        let back: CurveRecord = serde_json::from_str(&s).unwrap();
        assert_eq!(back.frame_index, 7);
        let c2 = back.to_curve().unwrap();
        assert!(c.mean_distance(&c2, 50) < 1e-12);
    }

    fn arb_curve() -> impl Strategy<Value = PiecewiseCurve> {
        let coef = || (-50.0..50.0f64, -50.0..50.0f64).prop_map(|(x, y)| Vec2::new(x, y));
        (
            coef(),
            coef(),
            coef(),
            coef(),
            coef(),
            0.05..0.95f64,
            any::<bool>(),
        )
            .prop_map(|(a, b, c, d, e, tb, two)| {
                let first = Piece::new(a, b, c);
                if !two {
                    return PiecewiseCurve::single(first);
                }
                let p = first.eval(tb);
                let second = Piece::new(p - d * tb - e * tb * tb, d, e);
                PiecewiseCurve::two_piece(first, second, tb).unwrap()
            })
    }

    proptest! {
        #[test]
        fn continuity_and_reversal(c in arb_curve()) {
            if c.is_two_piece() {
                let tb = c.tbreak();
                let gap = (c.pieces()[0].eval(tb) - c.pieces()[1].eval(tb)).norm();
                prop_assert!(gap < 1e-9);
            }
            let r = c.reversed();
            for k in 0..=20 {
                let t = k as f64 / 20.0;
                prop_assert!((r.eval(t) - c.eval(1.0 - t)).norm() < 1e-8);
            }
        }

        #[test]
        fn flat_round_trip(c in arb_curve()) {
            let back = PiecewiseCurve::from_flat(&c.to_flat()).unwrap();
            prop_assert!(back.mean_distance(&c, 33) < 1e-12);
        }

        #[test]
        fn restriction_matches_original(c in arb_curve(), e in 0.2..1.0f64) {
            let r = c.restricted(e);
            for k in 0..=10 {
                let t = k as f64 / 10.0;
                prop_assert!((r.eval(t) - c.eval(e * t)).norm() < 1e-8);
            }
        }
    }
}
