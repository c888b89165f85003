//! Pyramidal Lucas-Kanade tracking of sparse points.
//!
//! Each point is refined coarse-to-fine. At every level the weighted
//! structure tensor of `frame_t` is gathered once in a window around the
//! point, then the temporal residual against `frame_t1` (sampled at the
//! running displacement) is re-linearized until the increment drops below
//! `convergence_eps`.

use rayon::prelude::*;

use crate::error::{check_dims, Error, Result};
use crate::image::{sample_bilinear, Frame, ImagePyramid};

#[derive(Debug, Clone, PartialEq)]
pub struct LkParams {
    /// Window length in pixels; the window spans `2 * (window_len / 2) + 1`
    /// pixels, so 20 gives a centered 21x21 block.
    pub window_len: usize,
    pub level_count: usize,
    pub max_iters_per_level: usize,
    pub convergence_eps: f64,
    /// Threshold on the smaller eigenvalue of the weight-normalized tensor.
    pub min_eigenvalue: f64,
    pub weight_sigma: f64,
}

impl Default for LkParams {
    fn default() -> Self {
        Self::with_window(20)
    }
}

impl LkParams {
    /// Defaults with the given window length and `weight_sigma = window_len / 4`.
    pub fn with_window(window_len: usize) -> Self {
        Self {
            window_len,
            level_count: 3,
            max_iters_per_level: 10,
            convergence_eps: 0.01,
            min_eigenvalue: 1e-6,
            weight_sigma: window_len as f64 / 4.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_len < 3 {
            return Err(Error::InvalidParameter(format!(
                "window_len must be >= 3, got {}",
                self.window_len
            )));
        }
        if self.level_count < 1 {
            return Err(Error::InvalidParameter("level_count must be >= 1".into()));
        }
        if !(self.convergence_eps > 0.0) {
            return Err(Error::InvalidParameter(
                "convergence_eps must be positive".into(),
            ));
        }
        if !(self.weight_sigma > 0.0) {
            return Err(Error::InvalidParameter(
                "weight_sigma must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn half_window(&self) -> usize {
        self.window_len / 2
    }
}

/// Weighted gradient sums of the 2x2 normal equations.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StructureTensor {
    pub sxx: f64,
    pub sxy: f64,
    pub syy: f64,
    pub bx: f64,
    pub by: f64,
}

impl StructureTensor {
    pub fn determinant(&self) -> f64 {
        self.sxx * self.syy - self.sxy * self.sxy
    }

    pub fn eigenvalues(&self) -> (f64, f64) {
        let tr = self.sxx + self.syy;
        let d = self.sxx - self.syy;
        let disc = (d * d + 4.0 * self.sxy * self.sxy).sqrt();
        (0.5 * (tr - disc), 0.5 * (tr + disc))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LkSolution {
    Displacement {
        u: f64,
        v: f64,
    },
    /// Aperture problem: the tensor is too close to singular.
    Degenerate,
}

impl LkSolution {
    /// Displacement, with degenerate windows contributing zero.
    pub fn or_zero(self) -> (f64, f64) {
        match self {
            LkSolution::Displacement { u, v } => (u, v),
            LkSolution::Degenerate => (0.0, 0.0),
        }
    }
}

/// Solves `[[sxx, sxy], [sxy, syy]] (u, v) = -(bx, by)`.
pub fn lk_solve(tensor: &StructureTensor, min_eigenvalue: f64) -> LkSolution {
    let det = tensor.determinant();
    if !(tensor.min_eigenvalue() >= min_eigenvalue) || det == 0.0 {
        return LkSolution::Degenerate;
    }
    let u = -(tensor.syy * tensor.bx - tensor.sxy * tensor.by) / det;
    let v = -(tensor.sxx * tensor.by - tensor.sxy * tensor.bx) / det;
    LkSolution::Displacement { u, v }
}

/// Normalized 2-D Gaussian weights over `(2 * half + 1)^2`, row-major.
pub fn window_weights(half: usize, sigma: f64) -> Vec<f64> {
    let h = half as isize;
    let mut w = Vec::with_capacity((2 * half + 1).pow(2));
    for dy in -h..=h {
        for dx in -h..=h {
            let r2 = (dx * dx + dy * dy) as f64;
            w.push((-r2 / (2.0 * sigma * sigma)).exp());
        }
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Window samples of `frame_t` around one point: intensity and gradients.
struct Patch {
    weights: Vec<f64>,
    offsets: Vec<(f64, f64)>,
    i0: Vec<f64>,
    ix: Vec<f64>,
    iy: Vec<f64>,
}

impl Patch {
    fn gather(frame: &Frame, cx: f64, cy: f64, half: usize, weights: &[f64]) -> Self {
        let h = half as isize;
        let n = weights.len();
        let mut offsets = Vec::with_capacity(n);
        let mut i0 = Vec::with_capacity(n);
        let mut ix = Vec::with_capacity(n);
        let mut iy = Vec::with_capacity(n);
        for dy in -h..=h {
            for dx in -h..=h {
                let (px, py) = (cx + dx as f64, cy + dy as f64);
                // Central differences of the clamped bilinear surface; at
                // integer positions this equals the replicated-border
                // central difference of `compute_gradients`.
                let gx = 0.5
                    * (sample_bilinear(frame, px + 1.0, py) - sample_bilinear(frame, px - 1.0, py));
                let gy = 0.5
                    * (sample_bilinear(frame, px, py + 1.0) - sample_bilinear(frame, px, py - 1.0));
                offsets.push((dx as f64, dy as f64));
                i0.push(sample_bilinear(frame, px, py));
                ix.push(gx);
                iy.push(gy);
            }
        }
        Self {
            weights: weights.to_vec(),
            offsets,
            i0,
            ix,
            iy,
        }
    }

    fn tensor(&self) -> StructureTensor {
        let mut t = StructureTensor::default();
        for k in 0..self.weights.len() {
            let w = self.weights[k];
            t.sxx += w * self.ix[k] * self.ix[k];
            t.sxy += w * self.ix[k] * self.iy[k];
            t.syy += w * self.iy[k] * self.iy[k];
        }
        t
    }

    /// Fills `bx, by` from the residual of `frame_t1` displaced by `(gx, gy)`.
    fn with_residual(
        &self,
        mut t: StructureTensor,
        frame_t1: &Frame,
        cx: f64,
        cy: f64,
        gx: f64,
        gy: f64,
    ) -> StructureTensor {
        t.bx = 0.0;
        t.by = 0.0;
        for k in 0..self.weights.len() {
            let (ox, oy) = self.offsets[k];
            let it = sample_bilinear(frame_t1, cx + ox + gx, cy + oy + gy) - self.i0[k];
            t.bx += self.weights[k] * self.ix[k] * it;
            t.by += self.weights[k] * self.iy[k] * it;
        }
        t
    }
}

/// Structure tensor (with temporal terms at zero displacement) for the window
/// centered at `(x, y)` on a single pair of frames.
pub fn window_tensor(
    frame_t: &Frame,
    frame_t1: &Frame,
    x: f64,
    y: f64,
    params: &LkParams,
) -> Result<StructureTensor> {
    check_dims(
        frame_t.width(),
        frame_t.height(),
        frame_t1.width(),
        frame_t1.height(),
    )?;
    let weights = window_weights(params.half_window(), params.weight_sigma);
    let patch = Patch::gather(frame_t, x, y, params.half_window(), &weights);
    let t = patch.tensor();
    Ok(patch.with_residual(t, frame_t1, x, y, 0.0, 0.0))
}

/// Weighted SSD between the window of `frame_t` at `(x, y)` and that of
/// `frame_t1` at `(x + du, y + dv)`.
pub fn window_energy(
    frame_t: &Frame,
    frame_t1: &Frame,
    (x, y): (f64, f64),
    (du, dv): (f64, f64),
    params: &LkParams,
) -> f64 {
    let half = params.half_window() as isize;
    let weights = window_weights(params.half_window(), params.weight_sigma);
    let mut e = 0.0;
    let mut k = 0;
    for dy in -half..=half {
        for dx in -half..=half {
            let (px, py) = (x + dx as f64, y + dy as f64);
            let r = sample_bilinear(frame_t1, px + du, py + dv) - sample_bilinear(frame_t, px, py);
            e += weights[k] * r * r;
            k += 1;
        }
    }
    e
}

fn check_pyramids(pyr_t: &ImagePyramid, pyr_t1: &ImagePyramid, params: &LkParams) -> Result<()> {
    params.validate()?;
    for pyr in [pyr_t, pyr_t1] {
        if pyr.level_count() != params.level_count {
            return Err(Error::InvalidParameter(format!(
                "pyramid has {} levels, params expect {}",
                pyr.level_count(),
                params.level_count
            )));
        }
    }
    let (a, b) = (pyr_t.finest(), pyr_t1.finest());
    check_dims(a.width(), a.height(), b.width(), b.height())
}

/// Tracks one point from `pyr_t` into `pyr_t1`, returning its new position.
pub fn lk_track_point(
    pyr_t: &ImagePyramid,
    pyr_t1: &ImagePyramid,
    point: (f64, f64),
    params: &LkParams,
) -> Result<(f64, f64)> {
    check_pyramids(pyr_t, pyr_t1, params)?;
    let weights = window_weights(params.half_window(), params.weight_sigma);
    track_with_weights(pyr_t, pyr_t1, point, params, &weights)
}

/// Tracks many points against shared pyramids, in parallel.
pub fn lk_track_points(
    pyr_t: &ImagePyramid,
    pyr_t1: &ImagePyramid,
    points: &[(f64, f64)],
    params: &LkParams,
) -> Result<Vec<(f64, f64)>> {
    check_pyramids(pyr_t, pyr_t1, params)?;
    let weights = window_weights(params.half_window(), params.weight_sigma);
    points
        .par_iter()
        .map(|&p| track_with_weights(pyr_t, pyr_t1, p, params, &weights))
        .collect()
}

fn track_with_weights(
    pyr_t: &ImagePyramid,
    pyr_t1: &ImagePyramid,
    (x, y): (f64, f64),
    params: &LkParams,
    weights: &[f64],
) -> Result<(f64, f64)> {
    let base = pyr_t.finest();
    if !(x.is_finite() && y.is_finite() && base.contains(x, y)) {
        return Err(Error::PointOutsideFrame {
            x,
            y,
            width: base.width(),
            height: base.height(),
        });
    }

    let top = params.level_count - 1;
    let (mut gx, mut gy) = (0.0, 0.0);
    for lvl in (0..=top).rev() {
        if lvl < top {
            gx *= 2.0;
            gy *= 2.0;
        }
        let scale = 0.5f64.powi(lvl as i32);
        let (cx, cy) = (x * scale, y * scale);
        let f0 = pyr_t.level(lvl);
        let f1 = pyr_t1.level(lvl);

        let patch = Patch::gather(f0, cx, cy, params.half_window(), weights);
        let tensor = patch.tensor();
        if !(tensor.min_eigenvalue() >= params.min_eigenvalue) {
            continue;
        }
        for _ in 0..params.max_iters_per_level {
            let t = patch.with_residual(tensor, f1, cx, cy, gx, gy);
            let (du, dv) = lk_solve(&t, params.min_eigenvalue).or_zero();
            gx += du;
            gy += dv;
            if du.hypot(dv) < params.convergence_eps {
                break;
            }
        }
    }
    Ok((x + gx, y + gy))
}
