use thiserror::Error;

/// Errors produced by the image, flow, tracking and evaluation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {left_width}x{left_height} vs {right_width}x{right_height}")]
    DimensionMismatch {
        left_width: usize,
        left_height: usize,
        right_width: usize,
        right_height: usize,
    },
    #[error("invalid image dimensions {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },
    #[error("buffer length {len} does not match {width}x{height}")]
    BufferLength {
        len: usize,
        width: usize,
        height: usize,
    },
    #[error("intensity {value} at index {index} is outside [0, 1]")]
    IntensityOutOfRange { index: usize, value: f64 },
    #[error("pyramid with {levels} levels would shrink a {width}x{height} frame below 4x4")]
    PyramidTooDeep {
        levels: usize,
        width: usize,
        height: usize,
    },
    #[error(
        "upsample target {target_width}x{target_height} is smaller than source {width}x{height}"
    )]
    UpsampleTarget {
        width: usize,
        height: usize,
        target_width: usize,
        target_height: usize,
    },
    #[error("frame {width}x{height} is smaller than the {required}x{required} fit neighborhood")]
    FrameTooSmall {
        width: usize,
        height: usize,
        required: usize,
    },
    #[error("point ({x}, {y}) lies outside the {width}x{height} frame")]
    PointOutsideFrame {
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("contour needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("phantom vessel leaves the frame at frame {frame}")]
    VesselOutOfFrame { frame: usize },
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dims(lw: usize, lh: usize, rw: usize, rh: usize) -> Result<()> {
    if lw == rw && lh == rh {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            left_width: lw,
            left_height: lh,
            right_width: rw,
            right_height: rh,
        })
    }
}
