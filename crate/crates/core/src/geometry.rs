//! Pinhole camera model, projection, bilinear sampling and image warping.

use crate::error::FusionError;
use crate::grid::{ColorImage, DepthMap, FlowField, Grid, Pixel};
use crate::math::{Mat3, Vec3};

/// Tolerance on `RᵀR − I` accepted by [`CameraPose::from_parts`].
pub const POSE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self, FusionError> {
        let k = CameraIntrinsics { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        if self.width == 0 || self.height == 0 {
            return Err(FusionError::InvalidIntrinsics("image size must be positive"));
        }
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(FusionError::InvalidIntrinsics("focal lengths must be positive"));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) || !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(FusionError::InvalidIntrinsics("principal point outside the image"));
        }
        Ok(())
    }

    /// `(width, height)`
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn check_grid<T>(&self, grid: &Grid<T>, what: &'static str) -> Result<(), FusionError> {
        if grid.dims() == self.dims() {
            Ok(())
        } else {
            Err(FusionError::ShapeMismatch { what, expected: self.dims(), found: grid.dims() })
        }
    }
}

/// Rigid camera-to-world transform for frame `frame`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CameraPose {
    rotation: Mat3,
    translation: Vec3,
    pub frame: usize,
}

impl CameraPose {
    pub fn identity(frame: usize) -> Self {
        CameraPose { rotation: Mat3::IDENTITY, translation: Vec3::ZERO, frame }
    }

    pub fn from_parts(rotation: Mat3, translation: Vec3, frame: usize) -> Result<Self, FusionError> {
        let deviation = rotation.orthonormality_error();
        let finite = rotation.rows.iter().flatten().all(|x| x.is_finite()) && translation.is_finite();
        if !finite || deviation > POSE_TOLERANCE || rotation.determinant() <= 0.0 {
            return Err(FusionError::NonRigidPose { deviation });
        }
        Ok(CameraPose { rotation, translation, frame })
    }

    pub fn from_translation(translation: Vec3, frame: usize) -> Self {
        CameraPose { rotation: Mat3::IDENTITY, translation, frame }
    }

    /// Builds a pose from a homogeneous 4x4 camera-to-world matrix.
    pub fn from_matrix(m: [[f64; 4]; 4], frame: usize) -> Result<Self, FusionError> {
        let bottom = [0.0, 0.0, 0.0, 1.0];
        let bottom_dev = m[3].iter().zip(bottom).map(|(a, b)| libm::fabs(a - b)).fold(0.0, f64::max);
        if !(bottom_dev <= POSE_TOLERANCE) {
            return Err(FusionError::NonRigidPose { deviation: bottom_dev });
        }
        let rotation = Mat3::from_rows([
            [m[0][0], m[0][1], m[0][2]],
            [m[1][0], m[1][1], m[1][2]],
            [m[2][0], m[2][1], m[2][2]],
        ]);
        CameraPose::from_parts(rotation, Vec3::new(m[0][3], m[1][3], m[2][3]), frame)
    }

    pub fn to_matrix(&self) -> [[f64; 4]; 4] {
        let r = &self.rotation.rows;
        let t = self.translation;
        [
            [r[0][0], r[0][1], r[0][2], t.x],
            [r[1][0], r[1][1], r[1][2], t.y],
            [r[2][0], r[2][1], r[2][2], t.z],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> Vec3 {
        self.translation
    }

    /// The inverse transform (world-to-camera), keeping the frame index.
    pub fn inverse(&self) -> CameraPose {
        let rt = self.rotation.transpose();
        CameraPose { rotation: rt, translation: -rt.mul_vec(self.translation), frame: self.frame }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &CameraPose) -> CameraPose {
        CameraPose {
            rotation: self.rotation.mul_mat(&other.rotation),
            translation: self.rotation.mul_vec(other.translation) + self.translation,
            frame: self.frame,
        }
    }

    pub fn camera_to_world(&self, p: Vec3) -> Vec3 {
        self.rotation.mul_vec(p) + self.translation
    }

    pub fn world_to_camera(&self, p: Vec3) -> Vec3 {
        self.rotation.transpose().mul_vec(p - self.translation)
    }
}

/// Continuous pixel coordinates and camera-space depth of a projected point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projected {
    pub u: f64,
    pub v: f64,
    pub z: f64,
}

/// Projects a camera-space point; `None` when it is not in front of the camera.
#[inline]
pub fn project_camera_point(p: Vec3, k: &CameraIntrinsics) -> Option<Projected> {
    if !(p.z > 0.0) || !p.is_finite() {
        return None;
    }
    Some(Projected { u: k.fx * p.x / p.z + k.cx, v: k.fy * p.y / p.z + k.cy, z: p.z })
}

/// Projects a world point into the camera at `pose`.
///
/// Returns `None` (the behind-camera flag) when the camera-space depth is not
/// positive; such points must not be splatted or sampled.
#[inline]
pub fn project_point(x: Vec3, pose: &CameraPose, k: &CameraIntrinsics) -> Option<Projected> {
    project_camera_point(pose.world_to_camera(x), k)
}

/// Back-projects pixel `(u, v)` at depth `depth` to world coordinates.
#[inline]
pub fn unproject_pixel(u: f64, v: f64, depth: f64, k: &CameraIntrinsics, pose: &CameraPose) -> Vec3 {
    let p = Vec3::new((u - k.cx) / k.fx * depth, (v - k.cy) / k.fy * depth, depth);
    pose.camera_to_world(p)
}

/// Per-pixel world coordinates of a back-projected depth map.
#[derive(Debug, Clone, PartialEq)]
pub struct PointBuffer {
    grid: Grid<[f64; 3]>,
}

impl PointBuffer {
    pub fn from_grid(grid: Grid<[f64; 3]>) -> Self {
        PointBuffer { grid }
    }

    pub fn grid(&self) -> &Grid<[f64; 3]> {
        &self.grid
    }

    pub fn dims(&self) -> (usize, usize) {
        self.grid.dims()
    }

    pub fn get(&self, u: usize, v: usize) -> Option<Vec3> {
        let p = *self.grid.get(u, v);
        p.is_valid().then(|| Vec3::from_array(p))
    }

    /// Bilinear sample at a continuous pixel location.
    pub fn sample(&self, u: f64, v: f64) -> Option<Vec3> {
        bilinear_sample(&self.grid, u, v).map(Vec3::from_array)
    }

    pub fn valid_count(&self) -> usize {
        self.grid.valid_count()
    }
}

/// Back-projects every valid pixel of `depth`; holes and non-positive depths
/// become invalid entries.
pub fn unproject(depth: &DepthMap, k: &CameraIntrinsics, pose: &CameraPose) -> Result<PointBuffer, FusionError> {
    k.check_grid(depth, "unproject depth")?;
    let grid = Grid::from_fn(depth.width(), depth.height(), |u, v| {
        let d = *depth.get(u, v);
        if d.is_finite() && d > 0.0 {
            unproject_pixel(u as f64, v as f64, d, k, pose).to_array()
        } else {
            <[f64; 3]>::HOLE
        }
    });
    Ok(PointBuffer { grid })
}

/// Bilinear interpolation at continuous pixel coordinates.
///
/// Returns `None` when `(u, v)` falls outside `[0, W-1] x [0, H-1]` or when a
/// pixel with non-zero weight is a hole. Integer coordinates return the stored
/// value exactly.
pub fn bilinear_sample<T: Pixel>(img: &Grid<T>, u: f64, v: f64) -> Option<T> {
    let (w, h) = img.dims();
    if w == 0 || h == 0 {
        return None;
    }
    if !(u >= 0.0 && v >= 0.0 && u <= (w - 1) as f64 && v <= (h - 1) as f64) {
        return None;
    }
    let u0 = (libm::floor(u) as usize).min(w.saturating_sub(2));
    let v0 = (libm::floor(v) as usize).min(h.saturating_sub(2));
    let u1 = (u0 + 1).min(w - 1);
    let v1 = (v0 + 1).min(h - 1);
    let tu = u - u0 as f64;
    let tv = v - v0 as f64;
    let taps = [
        ((1.0 - tu) * (1.0 - tv), u0, v0),
        (tu * (1.0 - tv), u1, v0),
        ((1.0 - tu) * tv, u0, v1),
        (tu * tv, u1, v1),
    ];
    let mut acc = T::from_channels(|_| 0.0);
    for (weight, pu, pv) in taps {
        if weight == 0.0 {
            continue;
        }
        let p = *img.get(pu, pv);
        if p.is_hole() {
            return None;
        }
        acc = acc.combine(1.0, p, weight);
    }
    Some(acc)
}

/// Result of a forward rigid warp into a destination camera.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidWarp {
    pub color: ColorImage,
    /// Depth in the destination camera frame.
    pub depth: DepthMap,
    pub valid: Grid<bool>,
}

/// Forward-warps a color/depth pair from `src_pose` into `dst_pose`.
///
/// Every valid source pixel is back-projected, reprojected into the
/// destination camera and splatted to its nearest pixel under a Z-buffer
/// (strictly nearer wins, so ties keep the earliest source pixel).
pub fn rigid_warp(
    src_color: &ColorImage,
    src_depth: &DepthMap,
    src_pose: &CameraPose,
    dst_pose: &CameraPose,
    k: &CameraIntrinsics,
) -> Result<RigidWarp, FusionError> {
    k.check_grid(src_depth, "rigid_warp depth")?;
    k.check_grid(src_color, "rigid_warp color")?;
    let (w, h) = k.dims();
    let mut depth = DepthMap::holes(w, h);
    let mut color = ColorImage::holes(w, h);
    for (u, v, &d) in src_depth.enumerate() {
        if !(d.is_finite() && d > 0.0) {
            continue;
        }
        let x = unproject_pixel(u as f64, v as f64, d, k, src_pose);
        let Some(p) = project_point(x, dst_pose, k) else { continue };
        let Some((iu, iv)) = nearest_pixel(p.u, p.v, w, h) else { continue };
        if p.z < *depth.get(iu, iv) {
            depth.set(iu, iv, p.z);
            color.set(iu, iv, *src_color.get(u, v));
        }
    }
    let valid = depth.map(|d| d.is_finite());
    Ok(RigidWarp { color, depth, valid })
}

/// Nearest integer pixel of a continuous location, if inside the image.
#[inline]
pub fn nearest_pixel(u: f64, v: f64, width: usize, height: usize) -> Option<(usize, usize)> {
    let iu = libm::floor(u + 0.5);
    let iv = libm::floor(v + 0.5);
    if iu >= 0.0 && iv >= 0.0 && iu < width as f64 && iv < height as f64 {
        Some((iu as usize, iv as usize))
    } else {
        None
    }
}

/// Flow induced by camera motion for a known source depth.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidFlow {
    /// Displacement from each source pixel to its projection in the destination camera.
    pub flow: FlowField,
    /// Depth of each source pixel's 3D point in the destination camera.
    pub depth_in_dst: DepthMap,
}

/// Computes the rigid flow of `depth` (seen from `src_pose`) into `dst_pose`.
pub fn rigid_flow(
    depth: &DepthMap,
    src_pose: &CameraPose,
    dst_pose: &CameraPose,
    k: &CameraIntrinsics,
) -> Result<RigidFlow, FusionError> {
    k.check_grid(depth, "rigid_flow depth")?;
    let (w, h) = k.dims();
    let mut flow = FlowField::holes(w, h);
    let mut depth_in_dst = DepthMap::holes(w, h);
    for (u, v, &d) in depth.enumerate() {
        if !(d.is_finite() && d > 0.0) {
            continue;
        }
        let x = unproject_pixel(u as f64, v as f64, d, k, src_pose);
        if let Some(p) = project_point(x, dst_pose, k) {
            flow.set(u, v, [p.u - u as f64, p.v - v as f64]);
            depth_in_dst.set(u, v, p.z);
        }
    }
    Ok(RigidFlow { flow, depth_in_dst })
}

/// Backward-warps `img_next` into the current frame: `out[p] = img_next[p + flow[p]]`.
///
/// Pixels whose flow is invalid or whose sample falls outside the image are holes.
pub fn backward_warp_flow<T: Pixel>(img_next: &Grid<T>, flow: &FlowField) -> Result<Grid<T>, FusionError> {
    img_next.check_shape(flow, "backward_warp_flow")?;
    Ok(Grid::from_fn(flow.width(), flow.height(), |u, v| {
        let f = *flow.get(u, v);
        if f.is_hole() {
            return T::HOLE;
        }
        bilinear_sample(img_next, u as f64 + f[0], v as f64 + f[1]).unwrap_or(T::HOLE)
    }))
}
