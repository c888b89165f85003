//! Optical-flow tracking of a closed vessel contour through grayscale video.
//!
//! Three flow estimators share one image layer:
//!
//! - [`lk`]: pyramidal Lucas-Kanade, evaluated sparsely at contour points.
//! - [`hs`]: dense Horn-Schunck with Jacobi iterations, coarse-to-fine.
//! - [`fb`]: dense Farneback polynomial-expansion flow, coarse-to-fine.
//!
//! [`contour`] moves an N-point polygon frame to frame with any of them,
//! [`metrics`] scores the result against reference masks with the DICE
//! coefficient, and [`phantom`] renders synthetic ultrasound-like sequences
//! with exact ground truth.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod contour;
pub mod error;
pub mod fb;
pub mod hs;
pub mod image;
pub mod lk;
pub mod metrics;
pub mod phantom;

pub use contour::{
    advance, contour_area, contour_to_mask, track_sequence, Algorithm, Contour, SequenceTracker,
    TrackerConfig,
};
pub use error::{Error, Result};
pub use image::{FlowField, Frame, GradientSet, Grid, ImagePyramid};
pub use metrics::{dice, DiceSeries, Mask};
pub use phantom::{generate, Phantom, PhantomConfig, Shadow};
