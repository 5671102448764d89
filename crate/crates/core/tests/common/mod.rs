#![allow(dead_code)]

use rand::Rng;
use tbd_core::curve::{PiecewiseCurve, Vec2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CurveKind {
    Line,
    Parabola,
    Bounce,
}

fn direction(rng: &mut impl Rng) -> Vec2 {
    let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    Vec2::new(a.cos(), a.sin())
}

/// Random trajectory of the given kind, roughly 15 to 50 px long and
/// centered near `center`.
pub fn random_curve(rng: &mut impl Rng, kind: CurveKind, center: Vec2) -> PiecewiseCurve {
    let jitter = Vec2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
    match kind {
        CurveKind::Line => {
            let d = direction(rng) * rng.random_range(15.0..50.0);
            PiecewiseCurve::segment(center + jitter - d * 0.5, center + jitter + d * 0.5)
        }
        CurveKind::Parabola => {
            let d = direction(rng);
            let len: f64 = rng.random_range(20.0..50.0);
            let normal = Vec2::new(-d.y, d.x);
            let bend = len * rng.random_range(0.1..0.4) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let along = len * rng.random_range(-0.2..0.2);
            let c1 = d * len - normal * bend;
            let c2 = normal * bend + d * along;
            let c0 = center + jitter - c1 * 0.5 - c2 * 0.25;
            PiecewiseCurve::quadratic(c0, c1, c2)
        }
        CurveKind::Bounce => {
            let d = direction(rng);
            let turn: f64 = rng.random_range(40f64..140.0).to_radians() * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let e = Vec2::new(d.x * turn.cos() - d.y * turn.sin(), d.x * turn.sin() + d.y * turn.cos());
            let corner = center + jitter;
            let a = corner - d * rng.random_range(12.0..30.0);
            let b = corner + e * rng.random_range(12.0..30.0);
            PiecewiseCurve::polyline(a, corner, b).expect("distinct legs")
        }
    }
}

/// Mean distance over 100 parameter samples, in whichever direction fits
/// better; a blur kernel does not encode the direction of motion.
pub fn undirected_distance(a: &PiecewiseCurve, b: &PiecewiseCurve) -> f64 {
    a.mean_distance(b, 100).min(a.mean_distance(&b.reversed(), 100))
}
