//! Dataset ingestion, file formats, synthetic scenes and the command-line
//! front end for [`pcfuse_core`].
//!
//! Formats: PFM depth/color maps, Middlebury `.flo` flow, 4x4 pose text
//! files, intrinsics text files, 16-bit PNG depth, ASCII PLY clouds, and
//! JSON/CSV metric reports.

pub mod camera;
pub mod error;
pub mod flo;
pub mod manifest;
pub mod pfm;
pub mod ply;
pub mod providers;
pub mod report;
pub mod runner;
pub mod synthetic;

pub use error::{Error, FormatError, Result};
pub use manifest::{SequenceData, SequenceManifest};
pub use runner::{run_sequence, RunConfig, RunResult};
