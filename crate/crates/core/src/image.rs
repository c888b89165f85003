//! Image containers, derivatives, Gaussian pyramids and subpixel sampling.
//!
//! All intensities are `f64` in `[0, 1]`; 8-bit inputs are divided by 255 on
//! ingest. Coordinates are `(x, y)` with `x` along a row and `y` down the
//! columns, pixel centers at integer positions.

use rayon::prelude::*;

use crate::error::{check_dims, Error, Result};

/// Binomial 5-tap kernel `[1, 4, 6, 4, 1] / 16` used for pyramid smoothing.
pub const BINOMIAL_5: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

/// Smallest width or height any pyramid level may have.
pub const MIN_LEVEL_SIZE: usize = 4;

/// A dense row-major array of signed values (gradients, flow components).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidDimensions { width, height });
        }
        if data.len() != width * height {
            return Err(Error::BufferLength {
                len: data.len(),
                width,
                height,
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "grid dimensions must be positive");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "grid dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    /// Value at integer coordinates with replicated borders.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.data[yc * self.width + xc]
    }

    /// Bilinear interpolation; coordinates outside the grid are clamped.
    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let xf = x.clamp(0.0, (self.width - 1) as f64);
        let yf = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = xf.floor() as usize;
        let y0 = yf.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let ax = xf - x0 as f64;
        let ay = yf - y0 as f64;

        let i00 = self.get(x0, y0);
        let i10 = self.get(x1, y0);
        let i01 = self.get(x0, y1);
        let i11 = self.get(x1, y1);

        (1.0 - ax) * (1.0 - ay) * i00
            + ax * (1.0 - ay) * i10
            + (1.0 - ax) * ay * i01
            + ax * ay * i11
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    fn same_dims(&self, other: &Grid) -> Result<()> {
        check_dims(self.width, self.height, other.width, other.height)
    }
}

/// A single-channel intensity image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame(Grid);

impl Frame {
    /// Builds a frame, rejecting non-finite or out-of-range intensities.
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        let grid = Grid::new(width, height, data)?;
        Self::from_grid(grid)
    }

    pub fn from_grid(grid: Grid) -> Result<Self> {
        if let Some((index, &value)) = grid
            .data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::IntensityOutOfRange { index, value });
        }
        Ok(Self(grid))
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidDimensions { width, height });
        }
        Self::from_grid(Grid::from_fn(width, height, f))
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::from_fn(width, height, |_, _| value)
    }

    /// Ingests 8-bit samples, mapping 0..=255 onto `[0, 1]`.
    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        let data = bytes.iter().map(|&b| f64::from(b) / 255.0).collect();
        Self::new(width, height, data)
    }

    /// Quantizes back to 8 bits with round-to-nearest.
    pub fn to_u8(&self) -> Vec<u8> {
        self.0
            .data
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.0.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.0.height
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.0.get(x, y)
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.0
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x <= (self.width() - 1) as f64 && y <= (self.height() - 1) as f64
    }
}

/// Spatial derivatives of `frame_t` and the temporal difference to `frame_t1`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub ix: Grid,
    pub iy: Grid,
    pub it: Grid,
}

impl GradientSet {
    pub fn width(&self) -> usize {
        self.ix.width
    }

    pub fn height(&self) -> usize {
        self.ix.height
    }
}

/// Per-pixel displacement `(u, v)` in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub u: Grid,
    pub v: Grid,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            u: Grid::zeros(width, height),
            v: Grid::zeros(width, height),
        }
    }

    pub fn new(u: Grid, v: Grid) -> Result<Self> {
        u.same_dims(&v)?;
        Ok(Self { u, v })
    }

    pub fn constant(width: usize, height: usize, u: f64, v: f64) -> Self {
        Self {
            u: Grid::filled(width, height, u),
            v: Grid::filled(width, height, v),
        }
    }

    pub fn width(&self) -> usize {
        self.u.width
    }

    pub fn height(&self) -> usize {
        self.u.height
    }

    /// Bilinearly interpolated displacement at a subpixel location.
    pub fn sample(&self, x: f64, y: f64) -> (f64, f64) {
        (self.u.sample(x, y), self.v.sample(x, y))
    }

    pub fn add(&self, other: &FlowField) -> Result<FlowField> {
        self.u.same_dims(&other.u)?;
        let add = |a: &Grid, b: &Grid| Grid {
            width: a.width,
            height: a.height,
            data: a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect(),
        };
        Ok(FlowField {
            u: add(&self.u, &other.u),
            v: add(&self.v, &other.v),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.u
            .data
            .iter()
            .chain(&self.v.data)
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

/// Multi-resolution stack; level 0 is full resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePyramid {
    levels: Vec<Frame>,
}

impl ImagePyramid {
    pub fn levels(&self) -> &[Frame] {
        &self.levels
    }

    pub fn level(&self, k: usize) -> &Frame {
        &self.levels[k]
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn finest(&self) -> &Frame {
        &self.levels[0]
    }
}

/// Central differences of `frame_t` (replicated borders) and
/// `it = frame_t1 - frame_t`.
pub fn compute_gradients(frame_t: &Frame, frame_t1: &Frame) -> Result<GradientSet> {
    check_dims(
        frame_t.width(),
        frame_t.height(),
        frame_t1.width(),
        frame_t1.height(),
    )?;
    let (ix, iy) = spatial_gradients(frame_t.grid());
    let it = Grid {
        width: frame_t.width(),
        height: frame_t.height(),
        data: frame_t1
            .data()
            .iter()
            .zip(frame_t.data())
            .map(|(b, a)| b - a)
            .collect(),
    };
    Ok(GradientSet { ix, iy, it })
}

/// Central-difference `(d/dx, d/dy)` with replicated borders.
pub fn spatial_gradients(g: &Grid) -> (Grid, Grid) {
    let (w, h) = (g.width, g.height);
    let mut ix = Grid::zeros(w, h);
    let mut iy = Grid::zeros(w, h);
    for y in 0..h {
        let ym = y.saturating_sub(1);
        let yp = (y + 1).min(h - 1);
        for x in 0..w {
            let xm = x.saturating_sub(1);
            let xp = (x + 1).min(w - 1);
            ix.set(x, y, 0.5 * (g.get(xp, y) - g.get(xm, y)));
            iy.set(x, y, 0.5 * (g.get(x, yp) - g.get(x, ym)));
        }
    }
    (ix, iy)
}

/// Separable convolution with an odd symmetric kernel and replicated borders.
pub fn convolve_separable(g: &Grid, kernel: &[f64]) -> Grid {
    debug_assert!(kernel.len() % 2 == 1);
    let r = (kernel.len() / 2) as isize;
    let (w, h) = (g.width, g.height);

    let mut tmp = vec![0.0; w * h];
    tmp.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * g.get_clamped(x as isize + k as isize - r, y as isize);
            }
            *out = acc;
        }
    });
    let tmp = Grid {
        width: w,
        height: h,
        data: tmp,
    };

    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, o) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * tmp.get_clamped(x as isize, y as isize + k as isize - r);
            }
            *o = acc;
        }
    });
    Grid {
        width: w,
        height: h,
        data: out,
    }
}

/// Normalized 1-D Gaussian taps for `-radius..=radius`.
pub fn gaussian_kernel(radius: usize, sigma: f64) -> Vec<f64> {
    let r = radius as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

fn pyr_down(frame: &Frame) -> Frame {
    let blurred = convolve_separable(frame.grid(), &BINOMIAL_5);
    let w = frame.width().div_ceil(2);
    let h = frame.height().div_ceil(2);
    let grid = Grid::from_fn(w, h, |x, y| {
        // Convex combination of [0,1] samples; clamp only guards rounding.
        blurred.get(2 * x, 2 * y).clamp(0.0, 1.0)
    });
    Frame(grid)
}

/// Gaussian pyramid: binomial blur followed by factor-2 decimation per level.
pub fn build_pyramid(frame: &Frame, level_count: usize) -> Result<ImagePyramid> {
    if level_count == 0 {
        return Err(Error::InvalidParameter("level_count must be >= 1".into()));
    }
    let (mut w, mut h) = (frame.width(), frame.height());
    for _ in 1..level_count {
        w = w.div_ceil(2);
        h = h.div_ceil(2);
    }
    if w < MIN_LEVEL_SIZE || h < MIN_LEVEL_SIZE {
        return Err(Error::PyramidTooDeep {
            levels: level_count,
            width: frame.width(),
            height: frame.height(),
        });
    }

    let mut levels = Vec::with_capacity(level_count);
    levels.push(frame.clone());
    for k in 1..level_count {
        let next = pyr_down(&levels[k - 1]);
        levels.push(next);
    }
    Ok(ImagePyramid { levels })
}

/// Bilinear sample of `frame` at `(x, y)`, clamping to the frame bounds.
#[inline]
pub fn sample_bilinear(frame: &Frame, x: f64, y: f64) -> f64 {
    frame.grid().sample(x, y)
}

/// Backward warp: `out[p] = frame(p + flow[p])`.
pub fn warp_frame(frame: &Frame, flow: &FlowField) -> Result<Frame> {
    check_dims(frame.width(), frame.height(), flow.width(), flow.height())?;
    let w = frame.width();
    let mut data = vec![0.0; w * frame.height()];
    data.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            let dx = flow.u.get(x, y);
            let dy = flow.v.get(x, y);
            *out = sample_bilinear(frame, x as f64 + dx, y as f64 + dy);
        }
    });
    Ok(Frame(Grid {
        width: w,
        height: frame.height(),
        data,
    }))
}

/// Propagates a coarse flow one pyramid level down.
///
/// Fine pixel `x` sits at coarse coordinate `x / 2` (decimation keeps even
/// pixels), and displacements double with the resolution.
pub fn upsample_flow(flow: &FlowField, target_w: usize, target_h: usize) -> Result<FlowField> {
    if target_w < flow.width() || target_h < flow.height() {
        return Err(Error::UpsampleTarget {
            width: flow.width(),
            height: flow.height(),
            target_width: target_w,
            target_height: target_h,
        });
    }
    let resize = |g: &Grid| {
        Grid::from_fn(target_w, target_h, |x, y| {
            2.0 * g.sample(0.5 * x as f64, 0.5 * y as f64)
        })
    };
    Ok(FlowField {
        u: resize(&flow.u),
        v: resize(&flow.v),
    })
}

#[cfg(test)]
pub(crate) mod test_util {
    use super::*;

    /// Small deterministic generator for test fixtures.
    pub struct Lcg(pub u64);

    impl Lcg {
        pub fn next_f64(&mut self) -> f64 {
            self.0 = self
                .0
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (self.0 >> 11) as f64 / (1u64 << 53) as f64
        }
    }

    pub fn random_frame(w: usize, h: usize, seed: u64) -> Frame {
        let mut rng = Lcg(seed);
        let data = (0..w * h).map(|_| rng.next_f64()).collect();
        Frame::new(w, h, data).unwrap()
    }
}
