mod common;

use common::{random_curve, undirected_distance, CurveKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tbd_core::curve::Vec2;
use tbd_core::formation::rasterize_curve;
use tbd_core::trajfit::{fit_trajectory, FitParams};

#[test]
fn random_curves_survive_rasterization_and_fitting() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let kinds = [CurveKind::Line, CurveKind::Parabola, CurveKind::Bounce];
    let mut failures = Vec::new();
    let mut worst = (0.0f64, 0.0f64);
    for k in 0..50 {
        let kind = kinds[k % 3];
        let truth = random_curve(&mut rng, kind, Vec2::new(100.0, 100.0));
        let h = rasterize_curve(&truth, (200, 200), 1.0).unwrap();
        let fit = fit_trajectory(&h, &FitParams::default()).unwrap();
        let d = undirected_distance(&fit.curve, &truth);
        let mut ok = d < 1.0;
        let mut corner_err = 0.0;
        if kind == CurveKind::Bounce {
            let corner = truth.eval(truth.tbreak());
            corner_err = if fit.curve.is_two_piece() {
                (fit.curve.eval(fit.curve.tbreak()) - corner).norm()
            } else {
                f64::INFINITY
            };
            ok &= corner_err < 2.0;
        }
        worst = (worst.0.max(d), worst.1.max(corner_err));
        if !ok {
            failures.push(format!("#{k} {kind:?}: mean {d:.3}, corner {corner_err:.3}, error {:.3}", fit.fit_error));
        }
    }
    eprintln!("worst mean distance {:.3} px, worst corner {:.3} px", worst.0, worst.1);
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}
