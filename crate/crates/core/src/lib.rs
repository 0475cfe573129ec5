//! Acuity-aware adaptive streaming of tiled volumetric video.
//!
//! A viewer far from a point-cloud object cannot resolve its full point
//! density. [`acuity`] turns viewing distance into the lowest density that
//! still looks lossless, [`abr`] uses it to cap per-tile quality while
//! maximizing a QoE objective ([`qoe`]), and [`sim`] replays pose and
//! bandwidth traces through the whole pipeline.

pub mod abr;
pub mod acuity;
pub mod error;
pub mod geometry;
pub mod io;
pub mod ladder;
pub mod predictor;
pub mod qoe;
pub mod sim;
pub mod voxelizer;

pub use error::{Error, Result};
