//! The global point cloud and its per-frame integration.
//!
//! Each frame the cloud goes through four steps in a fixed order:
//! [`update_points`] (weighted update of visible points that the blend mask
//! marks as static), [`decay_unobserved`] (confidence minus one for points
//! that were out of view or occluded), [`insert_points`] (pixels the mask
//! marks as new) and [`prune`] (drop points below the confidence threshold).
//!
//! Points are kept in ascending id order; every traversal follows that order.

use alloc::vec::Vec;

use crate::error::FusionError;
use crate::geometry::{bilinear_sample, project_point, CameraIntrinsics, CameraPose, PointBuffer};
use crate::grid::{BlendMask, ColorImage, ConfidenceMap, Pixel};
use crate::math::Vec3;

/// Confidence threshold below which points are pruned.
pub const DEFAULT_EPSILON: f64 = 3e-2;

/// Points whose sampled mask is at or above this value are not updated.
pub const MASK_GATE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CloudPoint {
    pub id: u64,
    pub position: Vec3,
    pub color: [f64; 3],
    pub confidence: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GlobalPointCloud {
    points: Vec<CloudPoint>,
    next_id: u64,
}

impl GlobalPointCloud {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[CloudPoint] {
        &self.points
    }

    /// Appends a point and returns its id.
    pub fn push(&mut self, position: Vec3, color: [f64; 3], confidence: f64) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        self.points.push(CloudPoint { id, position, color, confidence });
        id
    }

    pub fn mean_confidence(&self) -> f64 {
        if self.points.is_empty() {
            return 0.0;
        }
        self.points.iter().map(|p| p.confidence).sum::<f64>() / self.points.len() as f64
    }

    pub fn clear(&mut self) {
        self.points.clear();
    }
}

/// How a point related to the current frame during [`update_points`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointVisibility {
    Updated,
    /// In view, but the mask gate rejected it or a sample was invalid.
    Occluded,
    /// Behind the camera or outside the bilinear footprint of the image.
    OutOfView,
}

/// Per-point visibility, aligned with [`GlobalPointCloud::points`].
#[derive(Debug, Clone, PartialEq)]
pub struct Visibility {
    pub states: Vec<PointVisibility>,
}

impl Visibility {
    pub fn count(&self, state: PointVisibility) -> usize {
        self.states.iter().filter(|&&s| s == state).count()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FrameIntegrationStats {
    pub updated: usize,
    pub occluded: usize,
    pub out_of_view: usize,
    pub decayed: usize,
    pub inserted: usize,
    pub pruned: usize,
    pub mean_confidence_before: f64,
    pub mean_confidence_after: f64,
}

/// Per-frame images the cloud update reads.
#[derive(Debug, Clone, Copy)]
pub struct ObservationView<'a> {
    /// Back-projected observed depth.
    pub points: &'a PointBuffer,
    pub color: &'a ColorImage,
    pub mask: &'a BlendMask,
    pub beta: &'a ConfidenceMap,
    pub gamma: &'a ConfidenceMap,
    pub pose: &'a CameraPose,
    pub intrinsics: &'a CameraIntrinsics,
}

impl ObservationView<'_> {
    fn check(&self) -> Result<(), FusionError> {
        let k = self.intrinsics;
        k.check_grid(self.points.grid(), "observed points")?;
        k.check_grid(self.color, "observed color")?;
        k.check_grid(self.mask, "blend mask")?;
        k.check_grid(self.beta, "beta")?;
        k.check_grid(self.gamma, "gamma")
    }
}

struct Samples {
    target: Vec3,
    color: [f64; 3],
    beta: f64,
    gamma: f64,
}

fn sample_all(obs: &ObservationView<'_>, u: f64, v: f64) -> Option<Samples> {
    let target = obs.points.sample(u, v)?;
    let color = bilinear_sample(obs.color, u, v)?;
    let beta = bilinear_sample(obs.beta, u, v)?;
    let gamma = bilinear_sample(obs.gamma, u, v)?;
    Some(Samples { target, color, beta, gamma })
}

/// Projections this close outside the image still count as inside; it absorbs
/// round-off when a point sits exactly on the border pixel.
pub const FOOTPRINT_TOLERANCE: f64 = 1e-9;

fn snap_to_footprint(u: f64, v: f64, k: &CameraIntrinsics) -> Option<(f64, f64)> {
    let (wmax, hmax) = ((k.width - 1) as f64, (k.height - 1) as f64);
    let t = FOOTPRINT_TOLERANCE;
    if u >= -t && v >= -t && u <= wmax + t && v <= hmax + t {
        Some((u.clamp(0.0, wmax), v.clamp(0.0, hmax)))
    } else {
        None
    }
}

/// Confidence-weighted update of every visible point whose sampled mask is below 0.5.
///
/// For such a point with projection `x̂`, with all samples bilinear:
/// `x ← (β·x + γ·z[x̂]) / (β+γ)`, the color likewise, and `ρ ← β + γ`.
/// Points whose samples are invalid or whose weights sum to zero are reported
/// as occluded and left untouched.
pub fn update_points(cloud: &mut GlobalPointCloud, obs: &ObservationView<'_>) -> Result<Visibility, FusionError> {
    obs.check()?;
    let k = obs.intrinsics;
    let mut states = Vec::with_capacity(cloud.len());
    for point in cloud.points.iter_mut() {
        let Some(p) = project_point(point.position, obs.pose, k) else {
            states.push(PointVisibility::OutOfView);
            continue;
        };
        let Some((u, v)) = snap_to_footprint(p.u, p.v, k) else {
            states.push(PointVisibility::OutOfView);
            continue;
        };
        let alpha = bilinear_sample(obs.mask, u, v);
        let samples = sample_all(obs, u, v);
        let (Some(alpha), Some(s)) = (alpha, samples) else {
            states.push(PointVisibility::Occluded);
            continue;
        };
        let weight = s.beta + s.gamma;
        if alpha >= MASK_GATE || !(weight > 0.0) {
            states.push(PointVisibility::Occluded);
            continue;
        }
        point.position = (point.position * s.beta + s.target * s.gamma) / weight;
        let old = point.color;
        point.color = core::array::from_fn(|i| (old[i] * s.beta + s.color[i] * s.gamma) / weight);
        point.confidence = weight;
        states.push(PointVisibility::Updated);
    }
    Ok(Visibility { states })
}

/// Decrements the confidence of every point that was out of view or occluded.
pub fn decay_unobserved(cloud: &mut GlobalPointCloud, visibility: &Visibility) -> usize {
    debug_assert_eq!(cloud.len(), visibility.states.len());
    let mut count = 0;
    for (point, state) in cloud.points.iter_mut().zip(&visibility.states) {
        if *state != PointVisibility::Updated {
            point.confidence -= 1.0;
            count += 1;
        }
    }
    count
}

/// Appends a point for every valid pixel whose mask is at least 0.5.
///
/// New points take their confidence from `initial_confidence` at that pixel.
pub fn insert_points(
    cloud: &mut GlobalPointCloud,
    points: &PointBuffer,
    color: &ColorImage,
    mask: &BlendMask,
    initial_confidence: &ConfidenceMap,
) -> Result<usize, FusionError> {
    mask.check_shape(points.grid(), "insert points")?;
    mask.check_shape(color, "insert color")?;
    mask.check_shape(initial_confidence, "insert confidence")?;
    let mut count = 0;
    for (u, v, &alpha) in mask.enumerate() {
        if !(alpha >= MASK_GATE) {
            continue;
        }
        let Some(x) = points.get(u, v) else { continue };
        let c = *color.get(u, v);
        let rho = *initial_confidence.get(u, v);
        if c.is_hole() || !rho.is_finite() {
            continue;
        }
        cloud.push(x, c, rho);
        count += 1;
    }
    Ok(count)
}

/// Removes every point with confidence strictly below `epsilon`.
pub fn prune(cloud: &mut GlobalPointCloud, epsilon: f64) -> usize {
    let before = cloud.points.len();
    cloud.points.retain(|p| !(p.confidence < epsilon));
    before - cloud.points.len()
}

/// Runs update, decay, insertion and pruning for one frame.
pub fn integrate_frame(
    cloud: &mut GlobalPointCloud,
    obs: &ObservationView<'_>,
    initial_confidence: &ConfidenceMap,
    epsilon: f64,
) -> Result<FrameIntegrationStats, FusionError> {
    if !(epsilon > 0.0) {
        return Err(FusionError::InvalidParameter("epsilon must be positive"));
    }
    let mean_confidence_before = cloud.mean_confidence();
    let visibility = update_points(cloud, obs)?;
    let decayed = decay_unobserved(cloud, &visibility);
    let inserted = insert_points(cloud, obs.points, obs.color, obs.mask, initial_confidence)?;
    let pruned = prune(cloud, epsilon);
    Ok(FrameIntegrationStats {
        updated: visibility.count(PointVisibility::Updated),
        occluded: visibility.count(PointVisibility::Occluded),
        out_of_view: visibility.count(PointVisibility::OutOfView),
        decayed,
        inserted,
        pruned,
        mean_confidence_before,
        mean_confidence_after: cloud.mean_confidence(),
    })
}
