//! Synthetic fast-moving-object sequences with exact ground truth.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::curve::{CurveRecord, Piece, PiecewiseCurve, Vec2};
use crate::error::{Error, Result};
use crate::eval::GroundTruthEntry;
use crate::formation::{ball_model, compose_frame, rasterize_curve, ObjectModel};
use crate::imaging::io::{list_frames, read_png};
use crate::imaging::{Psf, RasterImage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackgroundSource {
    Flat {
        color: [f64; 3],
    },
    /// Smooth random texture (sum of oriented sinusoids).
    Procedural {
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_contrast")]
        contrast: f64,
    },
    Image {
        path: PathBuf,
    },
    /// One background per frame, cycled if shorter than the sequence.
    Sequence {
        dir: PathBuf,
    },
}

fn default_contrast() -> f64 {
    0.25
}

fn default_exposure() -> f64 {
    1.0
}

/// Description of a synthetic sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub width: usize,
    pub height: usize,
    pub background: BackgroundSource,
    pub radius: f64,
    pub color: [f64; 3],
    /// Ground-truth curve for each frame over the whole inter-frame interval.
    pub curves: Vec<CurveRecord>,
    #[serde(default)]
    pub noise_sigma: f64,
    /// Fraction of the frame period the shutter is open.
    #[serde(default = "default_exposure")]
    pub exposure: f64,
    /// Frames in which the object is not rendered (occlusion).
    #[serde(default)]
    pub hidden_frames: Vec<usize>,
}

impl SyntheticSpec {
    pub fn frame_count(&self) -> usize {
        self.curves.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidArgument("frame size must be positive".into()));
        }
        if !(self.radius >= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "radius {} < 1",
                self.radius
            )));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise sigma {} < 0",
                self.noise_sigma
            )));
        }
        if !(self.exposure > 0.0 && self.exposure <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "exposure {} outside (0, 1]",
                self.exposure
            )));
        }
        if self.color.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::InvalidArgument("object color outside [0, 1]".into()));
        }
        let r = self.radius;
        let (w, h) = (self.width as f64, self.height as f64);
        for (i, rec) in self.curves.iter().enumerate() {
            let c = rec.to_curve()?;
            for k in 0..=100 {
                let p = c.eval(k as f64 / 100.0);
                if p.x < -r || p.y < -r || p.x > w - 1.0 + r || p.y > h - 1.0 + r {
                    return Err(Error::OutsideFrame(format!(
                        "frame {i}: trajectory point ({:.1}, {:.1}) leaves the frame by more than the radius",
                        p.x, p.y
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn object_model(&self) -> Result<ObjectModel> {
        let side = 2 * self.radius.ceil() as usize + 3;
        ball_model(self.radius, &self.color, side)
    }

    /// Ground truth for frame `i`: the exposed part of the curve on `[0, 1]`.
    pub fn truth(&self, i: usize) -> Result<GroundTruthEntry> {
        Ok(GroundTruthEntry {
            frame_index: i,
            curve: self.curves[i].to_curve()?.restricted(self.exposure),
            radius: self.radius,
        })
    }
}

/// Cached backgrounds for a spec.
pub struct Backgrounds {
    frames: Vec<RasterImage>,
}

impl Backgrounds {
    pub fn load(spec: &SyntheticSpec) -> Result<Self> {
        let (w, h) = (spec.width, spec.height);
        let frames = match &spec.background {
            BackgroundSource::Flat { color } => vec![RasterImage::filled(w, h, color)],
            BackgroundSource::Procedural { seed, contrast } => {
                vec![procedural_texture(w, h, *seed, *contrast)]
            }
            BackgroundSource::Image { path } => vec![read_png(path)?.with_channels(3)?],
            BackgroundSource::Sequence { dir } => list_frames(dir)?
                .iter()
                .map(|p| read_png(p).and_then(|img| img.with_channels(3)))
                .collect::<Result<Vec<_>>>()?,
        };
        if frames.is_empty() {
            return Err(Error::InvalidArgument(
                "background sequence is empty".into(),
            ));
        }
        for f in &frames {
            if f.width() != w || f.height() != h {
                return Err(Error::SizeMismatch(format!(
                    "background {}x{} vs frame {w}x{h}",
                    f.width(),
                    f.height()
                )));
            }
        }
        Ok(Self { frames })
    }

    pub fn get(&self, i: usize) -> &RasterImage {
        &self.frames[i % self.frames.len()]
    }
}

/// Smooth colored texture in `[0, 1]` built from random oriented sinusoids.
pub fn procedural_texture(w: usize, h: usize, seed: u64, contrast: f64) -> RasterImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_7e97);
    let base: Vec<f64> = (0..3).map(|_| rng.random_range(0.3..0.6)).collect();
    let waves: Vec<(f64, f64, f64, [f64; 3])> = (0..8)
        .map(|_| {
            let freq = rng.random_range(0.02..0.25);
            let ang: f64 = rng.random_range(0.0..std::f64::consts::PI);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let amp = [
                rng.random::<f64>(),
                rng.random::<f64>(),
                rng.random::<f64>(),
            ];
            (freq * ang.cos(), freq * ang.sin(), phase, amp)
        })
        .collect();
    let norm = contrast / waves.len() as f64 * 2.0;
    RasterImage::from_fn(w, h, 3, |x, y, c| {
        let mut v = base[c];
        for (fx, fy, ph, amp) in &waves {
            v += norm * amp[c] * (fx * x as f64 + fy * y as f64 + ph).sin();
        }
        v.clamp(0.0, 1.0)
    })
}

/// Render frame `i` of the sequence.
pub fn synthesize_frame(
    spec: &SyntheticSpec,
    model: &ObjectModel,
    backgrounds: &Backgrounds,
    i: usize,
    seed: u64,
) -> Result<RasterImage> {
    let b = backgrounds.get(i);
    let mut frame = if spec.hidden_frames.contains(&i) {
        b.clone()
    } else {
        let curve = spec.curves[i].to_curve()?.restricted(spec.exposure);
        let h: Psf = rasterize_curve(&curve, (spec.width, spec.height), 1.0)?;
        compose_frame(model, &h, b)?
    };
    if spec.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let normal = Normal::new(0.0, spec.noise_sigma)
            .map_err(|e| Error::InvalidArgument(format!("noise: {e}")))?;
        for v in frame.data_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    frame.clamp01();
    Ok(frame)
}

/// Render every frame and its ground truth. Deterministic in `seed`.
pub fn synthesize_sequence(
    spec: &SyntheticSpec,
    seed: u64,
) -> Result<(Vec<RasterImage>, Vec<GroundTruthEntry>)> {
    spec.validate()?;
    let model = spec.object_model()?;
    let backgrounds = Backgrounds::load(spec)?;
    let mut frames = Vec::with_capacity(spec.frame_count());
    let mut truth = Vec::with_capacity(spec.frame_count());
    for i in 0..spec.frame_count() {
        frames.push(synthesize_frame(spec, &model, &backgrounds, i, seed)?);
        truth.push(spec.truth(i)?);
    }
    Ok((frames, truth))
}

/// Ballistic motion with gravity along +y and elastic-ish reflections off an
/// axis-aligned box, sampled into one curve per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallisticMotion {
    pub start: [f64; 2],
    /// Pixels per frame.
    pub velocity: [f64; 2],
    /// Pixels per frame².
    #[serde(default)]
    pub gravity: f64,
    /// Reflecting walls `[xmin, ymin, xmax, ymax]` for the object center.
    pub walls: Option<[f64; 4]>,
    #[serde(default = "default_restitution")]
    pub restitution: f64,
    pub frames: usize,
}

fn default_restitution() -> f64 {
    1.0
}

impl BallisticMotion {
    /// One curve per frame over the full frame interval. A frame may contain
    /// at most one reflection.
    pub fn curves(&self) -> Result<Vec<PiecewiseCurve>> {
        let mut p = Vec2::new(self.start[0], self.start[1]);
        let mut v = Vec2::new(self.velocity[0], self.velocity[1]);
        let g = Vec2::new(0.0, self.gravity);
        let mut out = Vec::with_capacity(self.frames);
        for i in 0..self.frames {
            let free = Piece::new(p, v, g * 0.5);
            match self.first_hit(&free) {
                None => {
                    out.push(PiecewiseCurve::single(free));
                    p = free.eval(1.0);
                    v = free.derivative(1.0);
                }
                Some((tb, axis)) => {
                    let hit = free.eval(tb);
                    let mut vb = free.derivative(tb);
                    vb[axis] = -self.restitution * vb[axis];
                    // Second piece expressed in frame time t.
                    let after = Piece::new(hit, vb, g * 0.5).compose_affine(1.0, -tb);
                    let curve = PiecewiseCurve::two_piece(free, after, tb)?;
                    if self
                        .first_hit(&Piece::new(hit, vb, g * 0.5))
                        .is_some_and(|(t, _)| t < 1.0 - tb)
                    {
                        return Err(Error::InvalidArgument(format!(
                            "more than one reflection in frame {i}"
                        )));
                    }
                    p = after.eval(1.0);
                    v = after.derivative(1.0);
                    out.push(curve);
                }
            }
        }
        Ok(out)
    }

    fn first_hit(&self, piece: &Piece) -> Option<(f64, usize)> {
        let walls = self.walls?;
        let mut best: Option<(f64, usize)> = None;
        for (axis, lo, hi) in [(0usize, walls[0], walls[2]), (1, walls[1], walls[3])] {
            let [c0, c1, c2] = piece.coeffs;
            for (bound, outward) in [(lo, -1.0), (hi, 1.0)] {
                for t in quadratic_roots(c2[axis], c1[axis], c0[axis] - bound) {
                    if t > 1e-9 && t < 1.0 - 1e-9 && outward * piece.derivative(t)[axis] > 0.0 {
                        if best.is_none_or(|(bt, _)| t < bt) {
                            best = Some((t, axis));
                        }
                    }
                }
            }
        }
        best
    }
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    if a.abs() < 1e-14 {
        if b.abs() < 1e-14 {
            return vec![];
        }
        return vec![-c / b];
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return vec![];
    }
    let s = disc.sqrt();
    let q = -0.5 * (b + b.signum() * s);
    let mut r = vec![q / a];
    if q != 0.0 {
        r.push(c / q);
    }
    r
}

/// Sequence spec with a ball following `motion` over a procedural texture.
pub fn ballistic_spec(
    width: usize,
    height: usize,
    motion: &BallisticMotion,
    radius: f64,
    color: [f64; 3],
    noise_sigma: f64,
    background_seed: u64,
) -> Result<SyntheticSpec> {
    let curves = motion.curves()?;
    Ok(SyntheticSpec {
        width,
        height,
        background: BackgroundSource::Procedural {
            seed: background_seed,
            contrast: default_contrast(),
        },
        radius,
        color,
        curves: curves
            .iter()
            .enumerate()
            .map(|(i, c)| CurveRecord::new(c, i))
            .collect(),
        noise_sigma,
        exposure: 1.0,
        hidden_frames: vec![],
    })
}

/// Random sequence in which a ball moving at `speed` px/frame reflects off
/// the right wall exactly once, midway through. The frame is sized so both
/// legs fit; the vertical drift is small and gravity mild.
pub fn one_bounce_spec(seed: u64, speed: f64, frames: usize, noise_sigma: f64) -> Result<SyntheticSpec> {
    if !(speed > 0.0) || frames < 2 {
        return Err(Error::InvalidArgument(format!(
            "speed {speed} must be positive and frames {frames} at least 2"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..100 {
        let radius = rng.random_range(4.0..6.0);
        let angle: f64 = rng.random_range(-0.05..0.05);
        let gravity = rng.random_range(0.0..0.1);
        let margin = 4.0 * radius + 16.0;
        // Hit the wall between 40% and 60% of the sequence.
        let hit_frame = frames as f64 * rng.random_range(0.4..0.6);
        let reach = hit_frame * speed * angle.cos();
        let width = (reach + 2.0 * margin).ceil() as usize;
        let height = 320usize;
        let color = [
            rng.random_range(0.6..1.0),
            rng.random_range(0.0..0.7),
            rng.random_range(0.0..0.4),
        ];
        let motion = BallisticMotion {
            start: [margin, height as f64 / 2.0 - 40.0],
            velocity: [speed * angle.cos(), speed * angle.sin()],
            gravity,
            walls: Some([margin, radius, margin + reach, height as f64 - radius]),
            restitution: 1.0,
            frames,
        };
        let Ok(curves) = motion.curves() else { continue };
        let bounces = curves.iter().filter(|c| c.is_two_piece()).count();
        let inside = curves.iter().all(|c| {
            (0..=10).all(|k| {
                let p = c.eval(k as f64 / 10.0);
                p.y > 2.0 * radius && p.y < height as f64 - 2.0 * radius && p.x > radius
            })
        });
        if bounces == 1 && inside {
            return ballistic_spec(width, height, &motion, radius, color, noise_sigma, rng.random());
        }
    }
    Err(Error::InvalidArgument(format!(
        "no single-bounce layout found for speed {speed}"
    )))
}
