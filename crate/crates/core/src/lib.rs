//! Registration and simulation toolkit for building precisely aligned
//! low-resolution / high-resolution / digital image triplets from
//! screen-displayed frames.
//!
//! The display frame carries eight square fiducial markers and four
//! periodic bar bands around a content window ([`pattern`]). A captured
//! frame is aligned to the digital frame in two stages: intensity-weighted
//! marker centroids and a closed-form least-squares affine fit
//! ([`spatial`]), followed by a joint refinement that also maximizes the
//! agreement of the bar bands' single-frequency Fourier coefficients with
//! their designed phase ([`freq`]). [`sim`] renders synthetic captures with
//! known ground truth and [`pipeline`] ties everything into dataset builds
//! and error reports.
//!
//! Transforms passed around the crate map digital-frame coordinates to
//! captured-frame coordinates unless stated otherwise.

pub mod error;
pub mod freq;
pub mod par;
pub mod pattern;
pub mod pipeline;
pub mod raster;
pub mod sim;
pub mod spatial;

pub use error::{Error, Result};
pub use par::Execution;
pub use raster::{AffineTransform, ImageRaster, Point, Rect};
