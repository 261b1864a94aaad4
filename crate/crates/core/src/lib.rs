#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Online video depth fusion around a global, confidence-weighted point cloud.
//!
//! Each frame runs three stages in a fixed order:
//!
//! 1. temporal fusion: the cloud is splatted into the current camera to give a
//!    prior depth/color/confidence projection, a blend mask marks dynamic
//!    pixels, and observation and prior are blended;
//! 2. spatial fusion: per-pixel uncertainties become confidence weights that
//!    combine the temporally fused depth with the observation;
//! 3. point-cloud integration: visible points are updated, unobserved points
//!    decay, newly observed pixels are inserted and weak points pruned.
//!
//! The [`metrics`] module carries the temporal (OPW, RTC, TCC, TCM, SC,
//! SD(L1)) and spatial (RAE, RMS, bad-pixel ratios) evaluation suite.
//!
//! Conventions used throughout: pixel `(u, v)` is `(column, row)` with pixel
//! centers on integer coordinates, cameras look down `+Z`, poses map camera
//! coordinates to world coordinates, and holes carry `+inf`.
//!
//! The crate is `no_std` and only needs `alloc`; file formats, dataset
//! loading and the command line live in the `pcfuse` crate.

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod geometry;
pub mod grid;
pub mod math;
pub mod metrics;
pub mod pipeline;
pub mod pointcloud;
pub mod render;
pub mod spatial;
pub mod temporal;

pub use error::FusionError;
pub use geometry::{CameraIntrinsics, CameraPose, PointBuffer};
pub use grid::{BlendMask, ColorImage, ConfidenceMap, DepthMap, FlowField, Grid, Pixel, UncertaintyMap};
pub use math::{Mat3, Vec3};
pub use pipeline::{Ablation, FrameInput, FrameRecord, Parameterization, Pipeline, PipelineConfig};
pub use pointcloud::GlobalPointCloud;
pub use render::PriorProjection;
