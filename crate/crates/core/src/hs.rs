//! Dense Horn-Schunck flow with Jacobi updates, wrapped coarse-to-fine.

use rayon::prelude::*;

use crate::error::{check_dims, Error, Result};
use crate::image::{
    build_pyramid, compute_gradients, upsample_flow, warp_frame, FlowField, Frame, GradientSet,
    Grid,
};

/// Classical Horn-Schunck averaging kernel (zero center, sums to one).
pub const AVERAGING_KERNEL: [[f64; 3]; 3] = [
    [1.0 / 12.0, 1.0 / 6.0, 1.0 / 12.0],
    [1.0 / 6.0, 0.0, 1.0 / 6.0],
    [1.0 / 12.0, 1.0 / 6.0, 1.0 / 12.0],
];

#[derive(Debug, Clone, PartialEq)]
pub struct HsParams {
    pub alpha: f64,
    /// Jacobi iterations run at every pyramid level.
    pub iterations: usize,
    pub level_count: usize,
}

impl Default for HsParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            iterations: 250,
            level_count: 3,
        }
    }
}

impl HsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if self.iterations < 1 {
            return Err(Error::InvalidParameter("iterations must be >= 1".into()));
        }
        if self.level_count < 1 {
            return Err(Error::InvalidParameter("level_count must be >= 1".into()));
        }
        Ok(())
    }
}

/// Kernel-weighted neighbor sum at `(x, y)` with replicated borders.
#[inline]
fn average_at(d: &[f64], w: usize, rows: [usize; 3], x: usize) -> f64 {
    let xm = x.saturating_sub(1);
    let xp = (x + 1).min(w - 1);
    let [up, mid, down] = rows;
    let edge = d[up + x] + d[down + x] + d[mid + xm] + d[mid + xp];
    let corner = d[up + xm] + d[up + xp] + d[down + xm] + d[down + xp];
    edge / 6.0 + corner / 12.0
}

#[inline]
fn row_offsets(y: usize, w: usize, h: usize) -> [usize; 3] {
    [y.saturating_sub(1) * w, y * w, (y + 1).min(h - 1) * w]
}

fn average_grid(g: &Grid) -> Grid {
    let (w, h) = (g.width(), g.height());
    let d = g.data();
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let rows = row_offsets(y, w, h);
        for (x, o) in row.iter_mut().enumerate() {
            *o = average_at(d, w, rows, x);
        }
    });
    Grid::new(w, h, out).expect("dims preserved")
}

/// Per-component 3x3 neighborhood average with replicated borders.
pub fn neighborhood_average(field: &FlowField) -> FlowField {
    FlowField {
        u: average_grid(&field.u),
        v: average_grid(&field.v),
    }
}

/// One simultaneous (Jacobi) update of every pixel.
pub fn hs_iterate(grads: &GradientSet, field: &FlowField, alpha: f64) -> Result<FlowField> {
    check_dims(grads.width(), grads.height(), field.width(), field.height())?;
    let (w, h) = (field.width(), field.height());
    let a2 = alpha * alpha;
    let (fu, fv) = (field.u.data(), field.v.data());
    let (gx, gy, gt) = (grads.ix.data(), grads.iy.data(), grads.it.data());

    let mut u = vec![0.0; w * h];
    let mut v = vec![0.0; w * h];
    u.par_chunks_mut(w)
        .zip(v.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (urow, vrow))| {
            let rows = row_offsets(y, w, h);
            for x in 0..w {
                let i = rows[1] + x;
                let (ix, iy, it) = (gx[i], gy[i], gt[i]);
                let ub = average_at(fu, w, rows, x);
                let vb = average_at(fv, w, rows, x);
                let den = a2 + ix * ix + iy * iy;
                urow[x] = ub - (ix * ix * ub + ix * iy * vb + ix * it) / den;
                vrow[x] = vb - (ix * iy * ub + iy * iy * vb + iy * it) / den;
            }
        });
    Ok(FlowField {
        u: Grid::new(w, h, u)?,
        v: Grid::new(w, h, v)?,
    })
}

/// Discretized Horn-Schunck energy: squared constraint residual plus
/// `alpha` times squared forward differences of `u` and `v`, summed over
/// pixels. Differences past the last row/column are zero.
pub fn hs_energy(grads: &GradientSet, field: &FlowField, alpha: f64) -> Result<f64> {
    check_dims(grads.width(), grads.height(), field.width(), field.height())?;
    let (w, h) = (field.width(), field.height());
    let mut data = 0.0;
    let mut smooth = 0.0;
    for y in 0..h {
        for x in 0..w {
            let (u, v) = (field.u.get(x, y), field.v.get(x, y));
            let r = grads.ix.get(x, y) * u + grads.iy.get(x, y) * v + grads.it.get(x, y);
            data += r * r;
            if x + 1 < w {
                smooth += (field.u.get(x + 1, y) - u).powi(2) + (field.v.get(x + 1, y) - v).powi(2);
            }
            if y + 1 < h {
                smooth += (field.u.get(x, y + 1) - u).powi(2) + (field.v.get(x, y + 1) - v).powi(2);
            }
        }
    }
    Ok(data + alpha * smooth)
}

/// Gradients linearized around `flow`: `it` becomes the residual of the
/// warped frame minus the first-order motion already accounted for.
fn linearized_gradients(
    frame_t: &Frame,
    frame_t1: &Frame,
    flow: &FlowField,
) -> Result<GradientSet> {
    let warped = warp_frame(frame_t1, flow)?;
    let mut g = compute_gradients(frame_t, &warped)?;
    let (w, h) = (g.width(), g.height());
    for y in 0..h {
        for x in 0..w {
            let it = g.it.get(x, y)
                - g.ix.get(x, y) * flow.u.get(x, y)
                - g.iy.get(x, y) * flow.v.get(x, y);
            g.it.set(x, y, it);
        }
    }
    Ok(g)
}

/// Runs the Jacobi schedule on one level starting from `init`.
pub fn hs_refine_level(
    frame_t: &Frame,
    frame_t1: &Frame,
    init: FlowField,
    params: &HsParams,
) -> Result<FlowField> {
    let grads = linearized_gradients(frame_t, frame_t1, &init)?;
    let mut field = init;
    for _ in 0..params.iterations {
        field = hs_iterate(&grads, &field, params.alpha)?;
    }
    Ok(field)
}

/// Coarse-to-fine Horn-Schunck flow from `frame_t` to `frame_t1`.
pub fn hs_flow(frame_t: &Frame, frame_t1: &Frame, params: &HsParams) -> Result<FlowField> {
    params.validate()?;
    check_dims(
        frame_t.width(),
        frame_t.height(),
        frame_t1.width(),
        frame_t1.height(),
    )?;
    let p0 = build_pyramid(frame_t, params.level_count)?;
    let p1 = build_pyramid(frame_t1, params.level_count)?;

    let top = params.level_count - 1;
    let coarsest = p0.level(top);
    let mut flow = FlowField::zeros(coarsest.width(), coarsest.height());
    for lvl in (0..=top).rev() {
        let (f0, f1) = (p0.level(lvl), p1.level(lvl));
        if lvl < top {
            flow = upsample_flow(&flow, f0.width(), f0.height())?;
        }
        flow = hs_refine_level(f0, f1, flow, params)?;
    }
    Ok(flow)
}
