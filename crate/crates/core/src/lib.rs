//! Sampling-based camera pose estimation against radiance fields, rendering
//! only a selected subset of pixels per candidate pose.
//!
//! The pipeline: a [`scene_data::Dataset`] and a [`field::RadianceField`]
//! feed [`localizer::localize`], which picks pixels with a
//! [`features::Strategy`], renders them through [`render`], and scores the
//! final estimates with [`metrics`]. [`harness`] runs parameter grids and
//! summarizes them.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camera;
pub mod error;
pub mod features;
pub mod field;
pub mod harness;
pub mod image_buf;
pub mod localizer;
pub mod metrics;
pub mod render;
pub mod rng;
pub mod scene_data;

pub use camera::{CameraPose, Intrinsics};
pub use error::{Error, Result};
pub use image_buf::ColorImage;
