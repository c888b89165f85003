//! DICE agreement, failure detection and aggregation over runs.

use crate::error::{check_dims, Error, Result};

/// Tracking fails on any frame whose DICE is strictly below this value.
pub const DEFAULT_FAILURE_THRESHOLD: f64 = 0.7;

/// Binary image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::BufferLength {
                len: bits.len(),
                width,
                height,
            });
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// 0/255 bytes, the layout used for graymap export.
    pub fn to_u8(&self) -> Vec<u8> {
        self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect()
    }

    /// Pixels with value >= 128 are set.
    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(width, height, bytes.iter().map(|&b| b >= 128).collect())
    }
}

/// `2 |A ∩ M| / (|A| + |M|)`; two empty masks agree perfectly.
pub fn dice(a: &Mask, m: &Mask) -> Result<f64> {
    check_dims(a.width, a.height, m.width, m.height)?;
    let (mut inter, mut na, mut nm) = (0usize, 0usize, 0usize);
    for (&p, &q) in a.bits.iter().zip(&m.bits) {
        na += p as usize;
        nm += q as usize;
        inter += (p && q) as usize;
    }
    if na + nm == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (na + nm) as f64)
}

/// Per-frame DICE values for one tracked sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct DiceSeries {
    values: Vec<f64>,
    pub failure_threshold: f64,
}

impl DiceSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::with_threshold(values, DEFAULT_FAILURE_THRESHOLD)
    }

    pub fn with_threshold(values: Vec<f64>, failure_threshold: f64) -> Result<Self> {
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::InvalidParameter(format!(
                "DICE value {value} at frame {index} outside [0, 1]"
            )));
        }
        Ok(Self {
            values,
            failure_threshold,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FailureVerdict {
    pub failed: bool,
    pub first_failure: Option<usize>,
}

/// Failure iff some frame is strictly below the series threshold.
pub fn detect_failure(series: &DiceSeries) -> Result<FailureVerdict> {
    if series.is_empty() {
        return Err(Error::Empty("DICE series"));
    }
    let first_failure = series
        .values
        .iter()
        .position(|&v| v < series.failure_threshold);
    Ok(FailureVerdict {
        failed: first_failure.is_some(),
        first_failure,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    /// Mean DICE per frame over the common prefix of all series.
    pub mean_curve: Vec<f64>,
    pub series_means: Vec<f64>,
    /// Series with no failing frame.
    pub success_count: usize,
}

pub fn aggregate(series_set: &[DiceSeries]) -> Result<Summary> {
    if series_set.is_empty() {
        return Err(Error::Empty("series set"));
    }
    if series_set.iter().any(DiceSeries::is_empty) {
        return Err(Error::Empty("DICE series"));
    }
    let common = series_set.iter().map(DiceSeries::len).min().unwrap_or(0);
    let k = series_set.len() as f64;
    let mean_curve = (0..common)
        .map(|t| series_set.iter().map(|s| s.values[t]).sum::<f64>() / k)
        .collect();
    let series_means = series_set.iter().map(DiceSeries::mean).collect();
    let mut success_count = 0;
    for s in series_set {
        if !detect_failure(s)?.failed {
            success_count += 1;
        }
    }
    Ok(Summary {
        mean_curve,
        series_means,
        success_count,
    })
}
