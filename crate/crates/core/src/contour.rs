//! Closed-contour propagation through a frame sequence, plus polygon area
//! and rasterization.
//!
//! Points are tracked raw: there is no smoothing or resampling between
//! frames, so points may cluster or drift along the boundary.

use std::fmt::Write as _;

use crate::error::{check_dims, Error, Result};
use crate::fb::{fb_flow, FbParams};
use crate::hs::{hs_flow, HsParams};
use crate::image::{build_pyramid, FlowField, Frame, ImagePyramid};
use crate::lk::{lk_track_points, LkParams};
use crate::metrics::Mask;

pub const DEFAULT_POINT_COUNT: usize = 32;

/// Ordered closed polygon; the last point connects back to the first.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    points: Vec<(f64, f64)>,
    pub frame_index: usize,
}

impl Contour {
    pub fn new(points: Vec<(f64, f64)>, frame_index: usize) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::TooFewPoints(points.len()));
        }
        if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::InvalidParameter(
                "contour point is not finite".into(),
            ));
        }
        Ok(Self {
            points,
            frame_index,
        })
    }

    /// `n` points on the ellipse `center + (a cos θ, b sin θ)`, θ = 2πk/n.
    pub fn ellipse(
        center: (f64, f64),
        a: f64,
        b: f64,
        n: usize,
        frame_index: usize,
    ) -> Result<Self> {
        let pts = (0..n)
            .map(|k| {
                let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                (center.0 + a * th.cos(), center.1 + b * th.sin())
            })
            .collect();
        Self::new(pts, frame_index)
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn clamped(mut self, width: usize, height: usize) -> Self {
        let (xm, ym) = ((width - 1) as f64, (height - 1) as f64);
        for p in &mut self.points {
            p.0 = p.0.clamp(0.0, xm);
            p.1 = p.1.clamp(0.0, ym);
        }
        self
    }

    /// Text form: `N=<count> frame=<index>` then one `x,y` line per point.
    pub fn to_text(&self) -> String {
        let mut s = format!("N={} frame={}\n", self.points.len(), self.frame_index);
        for (x, y) in &self.points {
            let _ = writeln!(s, "{x},{y}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or(Error::Empty("contour file"))?;
        let mut count = None;
        let mut frame = None;
        for field in header.split_whitespace() {
            match field.split_once('=') {
                Some(("N", v)) => count = v.parse::<usize>().ok(),
                Some(("frame", v)) => frame = v.parse::<usize>().ok(),
                _ => return Err(Error::Parse(format!("bad contour header '{header}'"))),
            }
        }
        let (count, frame) = match (count, frame) {
            (Some(c), Some(f)) => (c, f),
            _ => return Err(Error::Parse(format!("bad contour header '{header}'"))),
        };
        let mut points = Vec::with_capacity(count);
        for line in lines {
            let (x, y) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("bad point line '{line}'")))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad coordinate '{s}'")))
            };
            points.push((parse(x)?, parse(y)?));
        }
        if points.len() != count {
            return Err(Error::Parse(format!(
                "header declares {count} points, found {}",
                points.len()
            )));
        }
        Self::new(points, frame)
    }
}

/// Re-spaces a closed polygon to `n` points uniformly by arc length,
/// starting at its first vertex.
pub fn resample(contour: &Contour, n: usize) -> Result<Contour> {
    if n < 3 {
        return Err(Error::TooFewPoints(n));
    }
    let pts = contour.points();
    let m = pts.len();
    let seg: Vec<f64> = (0..m)
        .map(|i| {
            let (p, q) = (pts[i], pts[(i + 1) % m]);
            (q.0 - p.0).hypot(q.1 - p.1)
        })
        .collect();
    let total: f64 = seg.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidParameter("contour has zero perimeter".into()));
    }
    let step = total / n as f64;
    let mut out = Vec::with_capacity(n);
    let (mut i, mut walked) = (0usize, 0.0);
    for k in 0..n {
        let target = k as f64 * step;
        while i < m - 1 && walked + seg[i] < target {
            walked += seg[i];
            i += 1;
        }
        let (p, q) = (pts[i], pts[(i + 1) % m]);
        let t = if seg[i] > 0.0 {
            ((target - walked) / seg[i]).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.push((p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1)));
    }
    Contour::new(out, contour.frame_index)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Algorithm {
    Lk(LkParams),
    Hs(HsParams),
    Fb(FbParams),
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Lk(_) => "lk",
            Algorithm::Hs(_) => "hs",
            Algorithm::Fb(_) => "fb",
        }
    }

    fn level_count(&self) -> usize {
        match self {
            Algorithm::Lk(p) => p.level_count,
            Algorithm::Hs(p) => p.level_count,
            Algorithm::Fb(p) => p.level_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    pub algorithm: Algorithm,
    pub point_count: usize,
}

impl TrackerConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            point_count: DEFAULT_POINT_COUNT,
        }
    }

    pub fn lk() -> Self {
        Self::new(Algorithm::Lk(LkParams::default()))
    }

    pub fn hs() -> Self {
        Self::new(Algorithm::Hs(HsParams::default()))
    }

    pub fn fb() -> Self {
        Self::new(Algorithm::Fb(FbParams::default()))
    }

    /// Default configuration for an algorithm name (`lk`, `hs`, `fb`).
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "lk" => Ok(Self::lk()),
            "hs" => Ok(Self::hs()),
            "fb" => Ok(Self::fb()),
            other => Err(Error::InvalidParameter(format!(
                "unknown algorithm '{other}'"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.point_count < 3 {
            return Err(Error::TooFewPoints(self.point_count));
        }
        match &self.algorithm {
            Algorithm::Lk(p) => p.validate(),
            Algorithm::Hs(p) => p.validate(),
            Algorithm::Fb(p) => p.validate(),
        }
    }
}

fn move_by_field(contour: &Contour, flow: &FlowField) -> Vec<(f64, f64)> {
    contour
        .points()
        .iter()
        .map(|&(x, y)| {
            let (u, v) = flow.sample(x, y);
            (x + u, y + v)
        })
        .collect()
}

fn step(
    contour: &Contour,
    frame_t: &Frame,
    frame_t1: &Frame,
    pyramids: Option<(&ImagePyramid, &ImagePyramid)>,
    config: &TrackerConfig,
) -> Result<Contour> {
    check_dims(
        frame_t.width(),
        frame_t.height(),
        frame_t1.width(),
        frame_t1.height(),
    )?;
    let (w, h) = (frame_t.width(), frame_t.height());
    let start = contour.clone().clamped(w, h);
    let moved = match &config.algorithm {
        Algorithm::Lk(params) => match pyramids {
            Some((p0, p1)) => lk_track_points(p0, p1, start.points(), params)?,
            None => {
                let p0 = build_pyramid(frame_t, params.level_count)?;
                let p1 = build_pyramid(frame_t1, params.level_count)?;
                lk_track_points(&p0, &p1, start.points(), params)?
            }
        },
        Algorithm::Hs(params) => move_by_field(&start, &hs_flow(frame_t, frame_t1, params)?),
        Algorithm::Fb(params) => move_by_field(&start, &fb_flow(frame_t, frame_t1, params)?),
    };
    Ok(Contour::new(moved, contour.frame_index + 1)?.clamped(w, h))
}

/// Moves every contour point from `frame_t` into `frame_t1`.
pub fn advance(
    contour: &Contour,
    frame_t: &Frame,
    frame_t1: &Frame,
    config: &TrackerConfig,
) -> Result<Contour> {
    config.validate()?;
    step(contour, frame_t, frame_t1, None, config)
}

/// Incremental tracker: feed frames one at a time.
///
/// For Lucas-Kanade the pyramid of the latest frame is kept so each frame is
/// decomposed only once.
pub struct SequenceTracker {
    config: TrackerConfig,
    current: Contour,
    last_frame: Frame,
    last_pyramid: Option<ImagePyramid>,
}

impl SequenceTracker {
    pub fn new(initial: Contour, first_frame: Frame, config: TrackerConfig) -> Result<Self> {
        config.validate()?;
        let last_pyramid = match &config.algorithm {
            Algorithm::Lk(_) => Some(build_pyramid(&first_frame, config.algorithm.level_count())?),
            _ => None,
        };
        Ok(Self {
            config,
            current: initial,
            last_frame: first_frame,
            last_pyramid,
        })
    }

    pub fn current(&self) -> &Contour {
        &self.current
    }

    pub fn push(&mut self, frame: Frame) -> Result<&Contour> {
        let next_pyramid = match &self.last_pyramid {
            Some(_) => Some(build_pyramid(&frame, self.config.algorithm.level_count())?),
            None => None,
        };
        let pyrs = self.last_pyramid.as_ref().zip(next_pyramid.as_ref());
        self.current = step(&self.current, &self.last_frame, &frame, pyrs, &self.config)?;
        self.last_frame = frame;
        self.last_pyramid = next_pyramid;
        Ok(&self.current)
    }
}

/// Tracks `initial` through `frames`; element 0 is `initial` unchanged.
pub fn track_sequence(
    frames: &[Frame],
    initial: &Contour,
    config: &TrackerConfig,
) -> Result<Vec<Contour>> {
    let (first, rest) = frames.split_first().ok_or(Error::Empty("frame sequence"))?;
    let mut tracker = SequenceTracker::new(initial.clone(), first.clone(), config.clone())?;
    let mut out = Vec::with_capacity(frames.len());
    out.push(initial.clone());
    for f in rest {
        out.push(tracker.push(f.clone())?.clone());
    }
    Ok(out)
}

/// Absolute shoelace area in square pixels.
pub fn contour_area(contour: &Contour) -> f64 {
    let p = contour.points();
    let n = p.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let (a, b) = (p[i], p[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum();
    0.5 * twice.abs()
}

pub fn contour_perimeter(contour: &Contour) -> f64 {
    let p = contour.points();
    let n = p.len();
    (0..n)
        .map(|i| {
            let (a, b) = (p[i], p[(i + 1) % n]);
            (b.0 - a.0).hypot(b.1 - a.1)
        })
        .sum()
}

/// Even-odd scanline fill; pixel `(x, y)` is set when its center `(x, y)`
/// lies inside the polygon.
pub fn contour_to_mask(contour: &Contour, width: usize, height: usize) -> Mask {
    let mut mask = Mask::empty(width, height);
    let p = contour.points();
    let n = p.len();
    let mut xs = Vec::new();
    for row in 0..height {
        let yc = row as f64;
        xs.clear();
        for i in 0..n {
            let (a, b) = (p[i], p[(i + 1) % n]);
            if (a.1 <= yc) != (b.1 <= yc) {
                xs.push(a.0 + (yc - a.1) * (b.0 - a.0) / (b.1 - a.1));
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            let lo = pair[0].ceil().max(0.0);
            let hi = pair[1].ceil().min(width as f64);
            let mut x = lo;
            while x < hi {
                mask.set(x as usize, row, true);
                x += 1.0;
            }
        }
    }
    mask
}
