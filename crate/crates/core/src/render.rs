//! Rendering the global point cloud into a camera.
//!
//! Points are splatted to their nearest (optionally supersampled) pixel under
//! a Z-buffer. Background points that leak between foreground splats are then
//! removed, and small holes are filled from their nearer neighbors. The
//! hole filler is a simplified variant of the Rosenthal-Linsen
//! image-space filter: a median over the nearer half of the valid 3x3
//! neighborhood.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::FusionError;
use crate::geometry::{project_point, CameraIntrinsics, CameraPose};
use crate::grid::{ColorImage, ConfidenceMap, DepthMap, Pixel};
use crate::pointcloud::GlobalPointCloud;

/// Depth, color and confidence of the cloud as seen from one camera.
///
/// At every pixel either all three are valid or all three are holes.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorProjection {
    pub depth: DepthMap,
    pub color: ColorImage,
    pub confidence: ConfidenceMap,
}

impl PriorProjection {
    pub fn holes(width: usize, height: usize) -> Self {
        PriorProjection {
            depth: DepthMap::holes(width, height),
            color: ColorImage::holes(width, height),
            confidence: ConfidenceMap::holes(width, height),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.depth.dims()
    }

    pub fn is_hole(&self, u: usize, v: usize) -> bool {
        self.depth.get(u, v).is_hole()
    }

    fn clear(&mut self, u: usize, v: usize) {
        self.depth.set(u, v, f64::HOLE);
        self.color.set(u, v, <[f64; 3]>::HOLE);
        self.confidence.set(u, v, f64::HOLE);
    }

    /// True when validity agrees across the three layers and valid depths are positive.
    pub fn is_consistent(&self) -> bool {
        self.depth.iter().zip(self.color.iter()).zip(self.confidence.iter()).all(|((d, c), w)| {
            if d.is_hole() {
                c.is_hole() && w.is_hole()
            } else {
                *d > 0.0 && c.is_valid() && w.is_valid() && *w >= 0.0
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RenderConfig {
    pub supersample: usize,
    pub fill_iterations: usize,
    pub background_ratio: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig { supersample: 2, fill_iterations: 2, background_ratio: 1.5 }
    }
}

/// Z-buffered nearest-pixel splatting of the cloud into `pose`.
///
/// With `supersample = s` points are rasterized on an `s`-times finer grid
/// and each output pixel takes its nearest covered subpixel. Depth ties go to
/// the point that comes first in the cloud (lowest id).
pub fn splat(
    cloud: &GlobalPointCloud,
    pose: &CameraPose,
    k: &CameraIntrinsics,
    supersample: usize,
) -> Result<PriorProjection, FusionError> {
    if supersample == 0 {
        return Err(FusionError::InvalidParameter("supersample must be at least 1"));
    }
    let (w, h) = k.dims();
    let s = supersample;
    let (sw, sh) = (w * s, h * s);
    let mut zbuf = vec![f64::INFINITY; sw * sh];
    let mut owner = vec![usize::MAX; sw * sh];
    for (i, point) in cloud.points().iter().enumerate() {
        let Some(p) = project_point(point.position, pose, k) else { continue };
        let Some((su, sv)) = subpixel(p.u, p.v, s, sw, sh) else { continue };
        let idx = sv * sw + su;
        if p.z < zbuf[idx] {
            zbuf[idx] = p.z;
            owner[idx] = i;
        }
    }

    let mut out = PriorProjection::holes(w, h);
    let points = cloud.points();
    for v in 0..h {
        for u in 0..w {
            let mut best: Option<(f64, usize)> = None;
            for sv in v * s..(v + 1) * s {
                for su in u * s..(u + 1) * s {
                    let idx = sv * sw + su;
                    let i = owner[idx];
                    if i == usize::MAX {
                        continue;
                    }
                    let z = zbuf[idx];
                    best = match best {
                        Some((bz, bi)) if bz < z || (bz == z && bi < i) => Some((bz, bi)),
                        _ => Some((z, i)),
                    };
                }
            }
            if let Some((z, i)) = best {
                out.depth.set(u, v, z);
                out.color.set(u, v, points[i].color);
                out.confidence.set(u, v, points[i].confidence);
            }
        }
    }
    Ok(out)
}

#[inline]
fn subpixel(u: f64, v: f64, s: usize, sw: usize, sh: usize) -> Option<(usize, usize)> {
    let su = libm::floor((u + 0.5) * s as f64);
    let sv = libm::floor((v + 0.5) * s as f64);
    if su >= 0.0 && sv >= 0.0 && su < sw as f64 && sv < sh as f64 {
        Some((su as usize, sv as usize))
    } else {
        None
    }
}

struct Neighbor {
    depth: f64,
    color: [f64; 3],
    confidence: f64,
}

fn valid_neighbors(proj: &PriorProjection, u: usize, v: usize, out: &mut Vec<Neighbor>) {
    out.clear();
    for dv in -1isize..=1 {
        for du in -1isize..=1 {
            if du == 0 && dv == 0 {
                continue;
            }
            let (nu, nv) = (u as isize + du, v as isize + dv);
            let Some(&d) = proj.depth.get_checked(nu, nv) else { continue };
            if d.is_hole() {
                continue;
            }
            let (nu, nv) = (nu as usize, nv as usize);
            out.push(Neighbor { depth: d, color: *proj.color.get(nu, nv), confidence: *proj.confidence.get(nu, nv) });
        }
    }
}

fn median_sorted(values: &[f64]) -> f64 {
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Fills holes that have at least three valid 8-neighbors.
///
/// The fill depth is the median of the nearer half of those neighbors
/// (`ceil(n/2)` smallest depths); color is their confidence-weighted mean and
/// confidence their plain mean. Each iteration reads only the previous
/// iteration's result. Valid pixels are never modified.
pub fn fill_holes(proj: &PriorProjection, max_iters: usize) -> PriorProjection {
    let mut current = proj.clone();
    let (w, h) = proj.dims();
    let mut neighbors = Vec::with_capacity(8);
    let mut depths = Vec::with_capacity(8);
    for _ in 0..max_iters {
        let src = current.clone();
        let mut changed = false;
        for v in 0..h {
            for u in 0..w {
                if !src.is_hole(u, v) {
                    continue;
                }
                valid_neighbors(&src, u, v, &mut neighbors);
                if neighbors.len() < 3 {
                    continue;
                }
                neighbors.sort_by(|a, b| a.depth.total_cmp(&b.depth));
                let near = &neighbors[..neighbors.len().div_ceil(2)];
                depths.clear();
                depths.extend(near.iter().map(|n| n.depth));
                let depth = median_sorted(&depths);
                let wsum: f64 = near.iter().map(|n| n.confidence).sum();
                let color = if wsum > 0.0 {
                    core::array::from_fn(|c| near.iter().map(|n| n.confidence * n.color[c]).sum::<f64>() / wsum)
                } else {
                    core::array::from_fn(|c| near.iter().map(|n| n.color[c]).sum::<f64>() / near.len() as f64)
                };
                let confidence = wsum / near.len() as f64;
                current.depth.set(u, v, depth);
                current.color.set(u, v, color);
                current.confidence.set(u, v, confidence);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    current
}

/// Turns into holes the valid pixels that lie far behind their neighborhood:
/// depth greater than `ratio_threshold` times the median of the valid
/// 8-neighbors. Never creates valid pixels.
pub fn remove_background(proj: &PriorProjection, ratio_threshold: f64) -> PriorProjection {
    let mut out = proj.clone();
    let (w, h) = proj.dims();
    let mut neighbors = Vec::with_capacity(8);
    let mut depths = Vec::with_capacity(8);
    for v in 0..h {
        for u in 0..w {
            if proj.is_hole(u, v) {
                continue;
            }
            valid_neighbors(proj, u, v, &mut neighbors);
            if neighbors.is_empty() {
                continue;
            }
            depths.clear();
            depths.extend(neighbors.iter().map(|n| n.depth));
            depths.sort_by(f64::total_cmp);
            if *proj.depth.get(u, v) > ratio_threshold * median_sorted(&depths) {
                out.clear(u, v);
            }
        }
    }
    out
}

/// Splat, background removal and hole filling, in that order.
pub fn render_prior(
    cloud: &GlobalPointCloud,
    pose: &CameraPose,
    k: &CameraIntrinsics,
    config: &RenderConfig,
) -> Result<PriorProjection, FusionError> {
    let raw = splat(cloud, pose, k, config.supersample)?;
    let cleaned = remove_background(&raw, config.background_ratio);
    Ok(fill_holes(&cleaned, config.fill_iterations))
}
