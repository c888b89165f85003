//! Synthetic ultrasound-like vessel video with analytic ground truth.
//!
//! A hypoechoic elliptical lumen surrounded by an echogenic wall ring sits
//! on a mid-gray background. The semi-axes pulsate sinusoidally and the
//! center drifts linearly. Optional shadowing darkens an angular wedge about
//! the vessel center. Speckle is multiplicative noise drawn independently
//! per frame from a ChaCha8 stream keyed by `(seed, frame)`, clamped to
//! `[0, 1]` and then correlated with a 3x3 box filter.

use std::f64::consts::PI;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;

use crate::contour::{Contour, DEFAULT_POINT_COUNT};
use crate::error::{Error, Result};
use crate::image::{convolve_separable, Frame, Grid};
use crate::metrics::Mask;

/// Acoustic shadow: angles in radians, measured with `atan2(dy, dx)` in
/// image coordinates (y down), so `PI / 2` points straight down.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shadow {
    pub angle_start: f64,
    pub angle_extent: f64,
    pub attenuation: f64,
}

impl Shadow {
    fn covers(&self, angle: f64) -> bool {
        let rel = (angle - self.angle_start).rem_euclid(2.0 * PI);
        rel <= self.angle_extent
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomConfig {
    pub width: usize,
    pub height: usize,
    pub frame_count: usize,
    pub fps: f64,
    pub center: (f64, f64),
    pub semi_axes: (f64, f64),
    /// Fractional pulsation amplitude `m` in `[0, 1)`.
    pub pulsation: f64,
    pub pulsation_hz: f64,
    /// Center drift in pixels per frame.
    pub drift: (f64, f64),
    pub interior_level: f64,
    pub wall_level: f64,
    pub background_level: f64,
    pub wall_thickness: f64,
    pub speckle_sigma: f64,
    pub shadow: Option<Shadow>,
    /// Points on each ground-truth contour.
    pub contour_points: usize,
    pub seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            frame_count: 450,
            fps: 30.0,
            center: (128.0, 128.0),
            semi_axes: (40.0, 28.0),
            pulsation: 0.2,
            pulsation_hz: 1.0,
            drift: (0.0, 0.0),
            interior_level: 0.15,
            wall_level: 0.75,
            background_level: 0.45,
            wall_thickness: 4.0,
            speckle_sigma: 0.2,
            shadow: None,
            contour_points: DEFAULT_POINT_COUNT,
            seed: 0,
        }
    }
}

impl PhantomConfig {
    /// Semi-axes at frame `t`: `a0 (1 + m sin(2π f t / fps))`.
    pub fn semi_axes_at(&self, t: usize) -> (f64, f64) {
        let s = 1.0 + self.pulsation * sin_turns(self.pulsation_hz * t as f64 / self.fps);
        (self.semi_axes.0 * s, self.semi_axes.1 * s)
    }

    pub fn center_at(&self, t: usize) -> (f64, f64) {
        (
            self.center.0 + self.drift.0 * t as f64,
            self.center.1 + self.drift.1 * t as f64,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.width < 8 || self.height < 8 {
            return bad("phantom must be at least 8x8");
        }
        if self.frame_count < 1 {
            return bad("frame_count must be >= 1");
        }
        if !(self.fps > 0.0) {
            return bad("fps must be positive");
        }
        if !(self.semi_axes.0 > 0.0 && self.semi_axes.1 > 0.0) {
            return bad("semi-axes must be positive");
        }
        if !(0.0..1.0).contains(&self.pulsation) {
            return bad("pulsation must be in [0, 1)");
        }
        if !(self.interior_level < self.background_level && self.background_level < self.wall_level)
        {
            return bad("levels must satisfy interior < background < wall");
        }
        for l in [self.interior_level, self.background_level, self.wall_level] {
            if !(0.0..=1.0).contains(&l) {
                return bad("levels must lie in [0, 1]");
            }
        }
        if !(self.wall_thickness >= 0.0) {
            return bad("wall_thickness must be >= 0");
        }
        if !(self.speckle_sigma >= 0.0) {
            return bad("speckle_sigma must be >= 0");
        }
        if self.contour_points < 3 {
            return Err(Error::TooFewPoints(self.contour_points));
        }
        if let Some(s) = &self.shadow {
            if !(0.0..=1.0).contains(&s.attenuation) || !(s.angle_extent >= 0.0) {
                return bad("shadow needs attenuation in [0, 1] and extent >= 0");
            }
        }
        for t in 0..self.frame_count {
            let (cx, cy) = self.center_at(t);
            let (a, b) = self.semi_axes_at(t);
            let (ra, rb) = (a + self.wall_thickness, b + self.wall_thickness);
            let max_x = (self.width - 1) as f64;
            let max_y = (self.height - 1) as f64;
            if cx - ra < 0.0 || cx + ra > max_x || cy - rb < 0.0 || cy + rb > max_y {
                return Err(Error::VesselOutOfFrame { frame: t });
            }
        }
        Ok(())
    }
}

/// `sin(2π x)`, exact at multiples of a quarter turn.
fn sin_turns(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    match r {
        0.0 | 0.5 => 0.0,
        0.25 => 1.0,
        0.75 => -1.0,
        _ => (2.0 * PI * r).sin(),
    }
}

/// Standard normal deviate by Box-Muller from two 53-bit uniforms.
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let unit = |r: &mut ChaCha8Rng| ((r.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
    let (u1, u2) = (unit(rng), unit(rng));
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Fraction of pixel `(x, y)` inside the ellipse, with a one-pixel linear
/// ramp across the boundary measured along the ray from the center.
fn coverage(dx: f64, dy: f64, a: f64, b: f64) -> f64 {
    let rho = ((dx / a).powi(2) + (dy / b).powi(2)).sqrt();
    if rho == 0.0 {
        return 1.0;
    }
    let r = dx.hypot(dy);
    let dist = r * (1.0 - 1.0 / rho);
    (0.5 - dist).clamp(0.0, 1.0)
}

/// Per-frame renderer with analytic truth.
#[derive(Debug, Clone)]
pub struct Phantom {
    config: PhantomConfig,
}

impl Phantom {
    pub fn new(config: PhantomConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &PhantomConfig {
        &self.config
    }

    pub fn frame_count(&self) -> usize {
        self.config.frame_count
    }

    fn check_index(&self, t: usize) -> Result<()> {
        if t >= self.config.frame_count {
            return Err(Error::IndexOutOfRange {
                index: t,
                len: self.config.frame_count,
            });
        }
        Ok(())
    }

    /// Noise-free image at frame `t`, shadow included.
    pub fn clean_frame(&self, t: usize) -> Result<Frame> {
        self.check_index(t)?;
        let c = &self.config;
        let (cx, cy) = c.center_at(t);
        let (a, b) = c.semi_axes_at(t);
        let wt = c.wall_thickness;
        Frame::from_fn(c.width, c.height, |x, y| {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let lumen = coverage(dx, dy, a, b);
            let outer = coverage(dx, dy, a + wt, b + wt).max(lumen);
            let mut v = c.interior_level * lumen
                + c.wall_level * (outer - lumen)
                + c.background_level * (1.0 - outer);
            if let Some(s) = &c.shadow {
                if (dx != 0.0 || dy != 0.0) && s.covers(dy.atan2(dx)) {
                    v *= 1.0 - s.attenuation;
                }
            }
            v.clamp(0.0, 1.0)
        })
    }

    /// Frame `t` with speckle applied.
    pub fn frame(&self, t: usize) -> Result<Frame> {
        let clean = self.clean_frame(t)?;
        let c = &self.config;
        if c.speckle_sigma == 0.0 {
            return Ok(clean);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        rng.set_stream(t as u64);
        let noisy: Vec<f64> = clean
            .data()
            .iter()
            .map(|&v| (v * (1.0 + c.speckle_sigma * normal(&mut rng))).clamp(0.0, 1.0))
            .collect();
        let box3 = [1.0 / 3.0; 3];
        let smoothed = convolve_separable(&Grid::new(c.width, c.height, noisy)?, &box3);
        let data = smoothed
            .into_data()
            .into_iter()
            .map(|v| v.clamp(0.0, 1.0))
            .collect();
        Frame::new(c.width, c.height, data)
    }

    pub fn truth_contour(&self, t: usize) -> Result<Contour> {
        self.check_index(t)?;
        let (a, b) = self.config.semi_axes_at(t);
        Contour::ellipse(
            self.config.center_at(t),
            a,
            b,
            self.config.contour_points,
            t,
        )
    }

    pub fn truth_mask(&self, t: usize) -> Result<Mask> {
        truth_mask(&self.config, t)
    }
}

/// Pixels whose centers satisfy the analytic lumen ellipse inequality.
pub fn truth_mask(config: &PhantomConfig, frame_index: usize) -> Result<Mask> {
    if frame_index >= config.frame_count {
        return Err(Error::IndexOutOfRange {
            index: frame_index,
            len: config.frame_count,
        });
    }
    let (cx, cy) = config.center_at(frame_index);
    let (a, b) = config.semi_axes_at(frame_index);
    Ok(Mask::from_fn(config.width, config.height, |x, y| {
        let (dx, dy) = ((x as f64 - cx) / a, (y as f64 - cy) / b);
        dx * dx + dy * dy <= 1.0
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomTruth {
    pub contours: Vec<Contour>,
    pub masks: Vec<Mask>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomVideo {
    pub frames: Vec<Frame>,
    pub truth: PhantomTruth,
}

/// Renders every frame and its truth.
pub fn generate(config: &PhantomConfig) -> Result<PhantomVideo> {
    let phantom = Phantom::new(config.clone())?;
    let frames = (0..config.frame_count)
        .into_par_iter()
        .map(|t| phantom.frame(t))
        .collect::<Result<Vec<_>>>()?;
    let contours = (0..config.frame_count)
        .map(|t| phantom.truth_contour(t))
        .collect::<Result<Vec<_>>>()?;
    let masks = (0..config.frame_count)
        .map(|t| phantom.truth_mask(t))
        .collect::<Result<Vec<_>>>()?;
    Ok(PhantomVideo {
        frames,
        truth: PhantomTruth { contours, masks },
    })
}

/// Band-limited random texture (a sum of plane waves) that can be rendered
/// at any subpixel translation.
#[derive(Debug, Clone)]
pub struct TexturePattern {
    waves: Vec<(f64, f64, f64, f64)>,
}

impl TexturePattern {
    const WAVES: usize = 24;
    const AMPLITUDE: f64 = 0.45;

    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut unit = || (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        let amp = Self::AMPLITUDE / Self::WAVES as f64;
        let waves = (0..Self::WAVES)
            .map(|_| {
                let dir = 2.0 * PI * unit();
                let wavelength = 6.0 + 22.0 * unit();
                let k = 2.0 * PI / wavelength;
                (k * dir.cos(), k * dir.sin(), 2.0 * PI * unit(), amp)
            })
            .collect();
        Self { waves }
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        0.5 + self
            .waves
            .iter()
            .map(|&(kx, ky, phase, amp)| amp * (kx * x + ky * y + phase).sin())
            .sum::<f64>()
    }

    /// Frame whose content is moved by `(dx, dy)`: `I(x, y) = T(x - dx, y - dy)`.
    pub fn render(&self, width: usize, height: usize, dx: f64, dy: f64) -> Frame {
        Frame::from_fn(width, height, |x, y| {
            self.value(x as f64 - dx, y as f64 - dy)
        })
        .expect("texture stays within [0, 1]")
    }
}
