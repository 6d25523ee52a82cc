//! Closed-form affine shape recovery for Gaussian blobs.
//!
//! A blob is detected as an extremum of the scale-normalized DoG stack, the
//! spatial Hessian of the Gaussian scale space is measured at that exact
//! scale, and the ratio of its eigenvalues is inverted analytically into the
//! blob's short and long radii. The response value and the scale-space value
//! then yield contrast and baseline. No iterative shape adaptation is
//! involved.
//!
//! - [`imgio`]: grayscale rasters and binary PGM.
//! - [`scalespace`]: Gaussian pyramid and normalized DoG levels.
//! - [`detector`]: extrema, refinement, Hessian and eigen-analysis.
//! - [`affineshape`]: the closed-form solver and shape matrices.
//! - [`synth`]: ground-truth Gaussian signals and noise.
//! - [`eval`]: matching, error metrics, ellipse overlap, curve tables.
//! - [`cli`]: the command implementations behind the `gaffine` binary.

// `!(x >= lo)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod affineshape;
pub mod cli;
pub mod config;
pub mod detector;
pub mod eval;
pub mod featio;
pub mod imgio;
pub mod pipeline;
pub mod scalespace;
pub mod synth;

pub use affineshape::{AffineFeature, FilterConfig, ShapeMatrix};
pub use config::DetectorConfig;
pub use imgio::GrayImage;
pub use pipeline::detect_features;
pub use scalespace::{PyramidConfig, ScaleSpacePyramid};
pub use synth::GaussianSignalSpec;
