//! Joint estimation of the motion blur and the object appearance and mask
//! from a single frame.
//!
//! The energy minimized is
//! `½‖H∗F + (1 − H∗M)B − I‖² + λ/2‖F − M·F̂‖² + α_F‖∇F‖₁ + α_H‖H‖₁`
//! over `H ≥ 0` supported in the region and `0 ≤ F ≤ M ≤ 1`, alternating a
//! blur step and an object step. A step is kept only if it lowers the energy.

mod admm;
mod problem;
mod projection;
pub mod verify;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formation::ObjectModel;
use crate::imaging::{Psf, RasterImage, Region};
use admm::{fm_step, h_step};
use problem::{Problem, Template, Weights};
pub use projection::{project_onto_c, DYKSTRA_MAX_SWEEPS, DYKSTRA_TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeblatParams {
    /// L1 weight on the blur.
    pub alpha_h: f64,
    /// Total-variation weight on the appearance.
    pub alpha_f: f64,
    /// Weight of the template term.
    pub lambda_tmpl: f64,
    /// ADMM penalties, relative to the mean diagonal of the data term.
    pub rho_h: f64,
    pub rho_tv: f64,
    pub rho_c: f64,
    pub max_outer_iters: usize,
    pub max_inner_iters: usize,
    /// Outer stop on relative energy change.
    pub rel_tol: f64,
    /// Relative primal/dual residual stop of the inner ADMM loops.
    pub admm_tol: f64,
    pub cg_tol: f64,
    pub cg_max_iters: usize,
}

impl Default for DeblatParams {
    fn default() -> Self {
        Self {
            alpha_h: 1e-3,
            alpha_f: 1e-3,
            lambda_tmpl: 1e-1,
            rho_h: 1e-1,
            rho_tv: 1e-1,
            rho_c: 1e-1,
            max_outer_iters: 10,
            max_inner_iters: 50,
            rel_tol: 1e-3,
            admm_tol: 1e-3,
            cg_tol: 1e-6,
            cg_max_iters: 200,
        }
    }
}

impl DeblatParams {
    /// Fewer outer iterations and loose inner solves. Stopping early keeps
    /// noise out of the blur and makes per-frame tracking several times faster.
    pub fn tracking() -> Self {
        Self {
            max_outer_iters: 3,
            cg_tol: 1e-2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let weights = [self.alpha_h, self.alpha_f, self.lambda_tmpl];
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument(
                "deblatting weights must be finite and >= 0".into(),
            ));
        }
        let positive = [
            self.rho_h,
            self.rho_tv,
            self.rho_c,
            self.rel_tol,
            self.admm_tol,
            self.cg_tol,
        ];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "penalties and tolerances must be positive".into(),
            ));
        }
        if self.max_outer_iters == 0 || self.max_inner_iters == 0 || self.cg_max_iters == 0 {
            return Err(Error::InvalidArgument(
                "iteration limits must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeblatResult {
    pub h: Psf,
    pub f: RasterImage,
    pub m: RasterImage,
    /// Energy at the initialization and after every outer iteration.
    pub objective_trace: Vec<f64>,
    /// Relative energy change fell below `rel_tol`.
    pub converged: bool,
    /// Every inner conjugate-gradient solve reached its tolerance.
    pub cg_converged: bool,
}

impl DeblatResult {
    pub fn model(&self) -> ObjectModel {
        ObjectModel {
            f: self.f.clone(),
            m: self.m.clone(),
        }
    }
}

fn to_color(img: &RasterImage) -> Result<RasterImage> {
    match img.channels() {
        1 => img.with_channels(3),
        _ => Ok(img.clone()),
    }
}

fn check_support(template: &RasterImage, m_init: &RasterImage) -> Result<usize> {
    let s = template.width();
    if template.height() != s || s % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "object support {}x{} must be square with odd side",
            template.width(),
            template.height()
        )));
    }
    if m_init.width() != s || m_init.height() != s || m_init.channels() != 1 {
        return Err(Error::SizeMismatch(
            "mask initialization must match the template support".into(),
        ));
    }
    Ok(s)
}

fn planes(img: &RasterImage) -> Vec<Vec<f64>> {
    (0..img.channels())
        .map(|c| img.channel(c).to_vec())
        .collect()
}

fn from_planes(planes: &[Vec<f64>], s: usize) -> RasterImage {
    RasterImage::from_data(s, s, planes.len(), planes.concat()).expect("consistent planes")
}

struct Inputs {
    problem: Problem,
    template: Template,
}

fn prepare(
    i: &RasterImage,
    b: &RasterImage,
    d: &Region,
    template: &RasterImage,
    side: usize,
) -> Result<Inputs> {
    let i = to_color(i)?;
    let b = to_color(b)?;
    let template = to_color(template)?;
    if template.channels() != i.channels() {
        return Err(Error::SizeMismatch(format!(
            "template has {} channels, frame {}",
            template.channels(),
            i.channels()
        )));
    }
    if i.channels() > projection::MAX_CHANNELS {
        return Err(Error::InvalidArgument(format!(
            "{} channels not supported",
            i.channels()
        )));
    }
    if !template.is_finite() {
        return Err(Error::NonFinite("template"));
    }
    let problem = Problem::new(&i, &b, d, side)?;
    Ok(Inputs {
        problem,
        template: Template {
            f: planes(&template),
        },
    })
}

/// Blur estimate for a known object model.
pub fn estimate_h(
    model: &ObjectModel,
    b: &RasterImage,
    i: &RasterImage,
    d: &Region,
    params: &DeblatParams,
) -> Result<Psf> {
    params.validate()?;
    let s = check_support(&model.f, &model.m)?;
    let mut inp = prepare(i, b, d, &model.f, s)?;
    let f = planes(&to_color(&model.f)?);
    let m = model.m.channel(0).to_vec();
    let p = &mut inp.problem;
    let (h, _) = h_step(p, &f, &m, &vec![0.0; p.h_len()], &mut None, params);
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("blur estimate"));
    }
    Psf::new(p.dw, p.dh, (p.d_rect.x0, p.d_rect.y0), h)
}

/// Object model estimate for a known blur. The blur must lie inside the frame.
pub fn estimate_fm(
    h: &Psf,
    b: &RasterImage,
    i: &RasterImage,
    template: &RasterImage,
    params: &DeblatParams,
) -> Result<ObjectModel> {
    params.validate()?;
    let s = template.width();
    let m_init = RasterImage::filled(s, s, &[1.0]);
    check_support(template, &m_init)?;
    let d = Region::new(h.rect(), i.width(), i.height())?;
    let mut inp = prepare(i, b, &d, template, s)?;
    let f0 = inp.template.f.clone();
    let (f, m, _) = fm_step(
        &mut inp.problem,
        h.weights(),
        &f0,
        m_init.channel(0),
        &inp.template,
        params.lambda_tmpl,
        &mut None,
        params,
    );
    if f.iter().flatten().chain(&m).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("object estimate"));
    }
    Ok(ObjectModel {
        f: from_planes(&f, s),
        m: from_planes(&[m], s),
    })
}

/// Alternate blur and object steps from the initial mask `m_init` and
/// appearance `template · m_init`.
pub fn deblatt(
    i: &RasterImage,
    b: &RasterImage,
    d: &Region,
    template: &RasterImage,
    m_init: &RasterImage,
    params: &DeblatParams,
) -> Result<DeblatResult> {
    params.validate()?;
    let s = check_support(template, m_init)?;
    let mut inp = prepare(i, b, d, template, s)?;
    let tmpl = inp.template;
    let p = &mut inp.problem;
    let k = p.k;
    let s2 = s * s;

    let mut m = m_init.channel(0).to_vec();
    let mut f: Vec<Vec<f64>> = tmpl
        .f
        .iter()
        .map(|tc| tc.iter().zip(&m).map(|(a, b)| a * b).collect())
        .collect();
    {
        let mut stackv: Vec<f64> = f
            .iter()
            .flatten()
            .copied()
            .chain(m.iter().copied())
            .collect();
        admm::project_stack(&mut stackv, k, s2);
        for c in 0..k {
            f[c].copy_from_slice(&stackv[c * s2..(c + 1) * s2]);
        }
        m.copy_from_slice(&stackv[k * s2..]);
    }
    let mut h = vec![0.0; p.h_len()];
    let w = Weights {
        lambda: params.lambda_tmpl,
        alpha_f: params.alpha_f,
        alpha_h: params.alpha_h,
    };
    let mut energy = p.objective(&h, &f, &m, &tmpl, &w);
    let mut trace = vec![energy];
    let mut converged = false;
    let mut cg_converged = true;
    let mut h_dual = None;
    let mut fm_dual = None;
    for _ in 0..params.max_outer_iters {
        let before = energy;
        let (hn, out) = h_step(p, &f, &m, &h, &mut h_dual, params);
        cg_converged &= out.cg_converged;
        let e = p.objective(&hn, &f, &m, &tmpl, &w);
        if e <= energy {
            h = hn;
            energy = e;
        }
        let (fnew, mnew, out) = fm_step(
            p,
            &h,
            &f,
            &m,
            &tmpl,
            params.lambda_tmpl,
            &mut fm_dual,
            params,
        );
        cg_converged &= out.cg_converged;
        let e = p.objective(&h, &fnew, &mnew, &tmpl, &w);
        if e <= energy {
            f = fnew;
            m = mnew;
            energy = e;
        }
        if !energy.is_finite() {
            return Err(Error::NonFinite("objective"));
        }
        trace.push(energy);
        if before - energy <= params.rel_tol * before.abs() {
            converged = true;
            break;
        }
    }
    Ok(DeblatResult {
        h: Psf::new(p.dw, p.dh, (p.d_rect.x0, p.d_rect.y0), h)?,
        f: from_planes(&f, s),
        m: from_planes(&[m], s),
        objective_trace: trace,
        converged,
        cg_converged,
    })
}

#[cfg(test)]
mod tests;
