//! Euclidean projection onto `{0 ≤ F_c ≤ M ≤ 1}` by Dykstra's algorithm over
//! its half-spaces.

use crate::error::{Error, Result};

pub const DYKSTRA_TOL: f64 = 1e-10;
pub const DYKSTRA_MAX_SWEEPS: usize = 100;
pub(crate) const MAX_CHANNELS: usize = 4;

/// Project one pixel `(F, M)` onto the constraint set.
pub fn project_onto_c(f: &[f64], m: f64) -> Result<(Vec<f64>, f64)> {
    if f.len() > MAX_CHANNELS || f.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} channels not supported",
            f.len()
        )));
    }
    if !m.is_finite() || f.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("projection input"));
    }
    let mut out = f.to_vec();
    let mut mm = m;
    project_in_place(&mut out, &mut mm);
    Ok((out, mm))
}

/// In-place variant for finite input with at most [`MAX_CHANNELS`] channels.
pub(crate) fn project_in_place(f: &mut [f64], m: &mut f64) {
    let k = f.len();
    if f.iter().all(|&v| v >= 0.0 && v <= *m) && *m <= 1.0 {
        return;
    }
    // Dykstra increments: lower bounds on F, the F_c ≤ M pairs, and M ≤ 1.
    let mut p_low = [0.0; MAX_CHANNELS];
    let mut p_pair = [[0.0; 2]; MAX_CHANNELS];
    let mut p_top = 0.0;
    for _ in 0..DYKSTRA_MAX_SWEEPS {
        let mut change: f64 = 0.0;
        for c in 0..k {
            let y = f[c] + p_low[c];
            let x = y.max(0.0);
            p_low[c] = y - x;
            change = change.max((x - f[c]).abs());
            f[c] = x;
        }
        for c in 0..k {
            let yf = f[c] + p_pair[c][0];
            let ym = *m + p_pair[c][1];
            let (xf, xm) = if yf > ym {
                let avg = 0.5 * (yf + ym);
                (avg, avg)
            } else {
                (yf, ym)
            };
            p_pair[c] = [yf - xf, ym - xm];
            change = change.max((xf - f[c]).abs()).max((xm - *m).abs());
            f[c] = xf;
            *m = xm;
        }
        let y = *m + p_top;
        let x = y.min(1.0);
        p_top = y - x;
        change = change.max((x - *m).abs());
        *m = x;
        if change < DYKSTRA_TOL {
            break;
        }
    }
    *m = m.clamp(0.0, 1.0);
    for v in f.iter_mut() {
        *v = v.clamp(0.0, *m);
    }
}
