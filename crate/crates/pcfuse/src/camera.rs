//! Pose and intrinsics text files.
//!
//! A pose file holds 16 whitespace-separated numbers, a row-major 4x4 matrix.
//! An intrinsics file holds `fx fy cx cy` optionally followed by `width height`.

use std::path::Path;

use nalgebra::Matrix3;
use pcfuse_core::{CameraIntrinsics, CameraPose, Mat3, Vec3};
use serde::{Deserialize, Serialize};

use crate::error::{read_file, write_file, Error, FormatError, Result};

/// Largest deviation from a rigid transform accepted before re-orthonormalizing.
pub const POSE_FILE_TOLERANCE: f64 = 1e-4;

/// What the stored matrix maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoseConvention {
    #[default]
    CameraToWorld,
    WorldToCamera,
}

fn numbers(text: &str) -> Result<Vec<f64>, FormatError> {
    text.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| FormatError::new(format!("not a number: {t:?}"))))
        .collect()
}

/// Nearest rotation in the Frobenius sense, via SVD.
pub fn nearest_rotation(m: &Mat3) -> Option<Mat3> {
    let r = &m.rows;
    let a = Matrix3::new(r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2]);
    let svd = a.svd(true, true);
    let (u, vt) = (svd.u?, svd.v_t?);
    let mut rot = u * vt;
    if rot.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        rot = u * vt;
    }
    Some(Mat3::from_rows(std::array::from_fn(|i| std::array::from_fn(|j| rot[(i, j)]))))
}

/// Parses a pose matrix, validating it against [`POSE_FILE_TOLERANCE`] and
/// snapping the rotation to the nearest orthonormal matrix.
pub fn parse_pose(text: &str, convention: PoseConvention, frame: usize) -> Result<CameraPose, FormatError> {
    let v = numbers(text)?;
    if v.len() != 16 {
        return Err(FormatError::new(format!("pose needs 16 numbers, found {}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(FormatError::new("pose holds non-finite values"));
    }
    let bottom_dev = [v[12], v[13], v[14], v[15] - 1.0].iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let rot = Mat3::from_rows([[v[0], v[1], v[2]], [v[4], v[5], v[6]], [v[8], v[9], v[10]]]);
    let dev = rot.orthonormality_error().max(bottom_dev);
    if dev > POSE_FILE_TOLERANCE || rot.determinant() <= 0.0 {
        return Err(FormatError::new(format!("not a rigid transform (deviation {dev:.3e})")));
    }
    let rot = nearest_rotation(&rot).ok_or_else(|| FormatError::new("rotation SVD failed"))?;
    let pose = CameraPose::from_parts(rot, Vec3::new(v[3], v[7], v[11]), frame)
        .map_err(|e| FormatError::new(e.to_string()))?;
    Ok(match convention {
        PoseConvention::CameraToWorld => pose,
        PoseConvention::WorldToCamera => pose.inverse(),
    })
}

pub fn format_pose(pose: &CameraPose) -> String {
    pose.to_matrix()
        .iter()
        .map(|row| row.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join("\n")
        + "\n"
}

pub fn read_pose(path: &Path, convention: PoseConvention, frame: usize) -> Result<CameraPose> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::format(path, FormatError::new("not UTF-8")))?;
    parse_pose(&text, convention, frame).map_err(|e| Error::format(path, e))
}

/// Writes a camera-to-world matrix.
pub fn write_pose(path: &Path, pose: &CameraPose) -> Result<()> {
    write_file(path, format_pose(pose).as_bytes())
}

/// Parses intrinsics; `default_dims` supplies the resolution when the file omits it.
pub fn parse_intrinsics(text: &str, default_dims: Option<(usize, usize)>) -> Result<CameraIntrinsics, FormatError> {
    let v = numbers(text)?;
    let (w, h) = match (v.len(), default_dims) {
        (6, _) => {
            let dim = |x: f64| {
                if x >= 1.0 && x.fract() == 0.0 {
                    Ok(x as usize)
                } else {
                    Err(FormatError::new(format!("bad image dimension {x}")))
                }
            };
            (dim(v[4])?, dim(v[5])?)
        }
        (4, Some(d)) => d,
        (4, None) => return Err(FormatError::new("intrinsics omit the resolution")),
        (n, _) => return Err(FormatError::new(format!("intrinsics need 4 or 6 numbers, found {n}"))),
    };
    CameraIntrinsics::new(v[0], v[1], v[2], v[3], w, h).map_err(|e| FormatError::new(e.to_string()))
}

pub fn format_intrinsics(k: &CameraIntrinsics) -> String {
    format!("{:?} {:?} {:?} {:?} {} {}\n", k.fx, k.fy, k.cx, k.cy, k.width, k.height)
}

pub fn read_intrinsics(path: &Path, default_dims: Option<(usize, usize)>) -> Result<CameraIntrinsics> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::format(path, FormatError::new("not UTF-8")))?;
    parse_intrinsics(&text, default_dims).map_err(|e| Error::format(path, e))
}

pub fn write_intrinsics(path: &Path, k: &CameraIntrinsics) -> Result<()> {
    write_file(path, format_intrinsics(k).as_bytes())
}
