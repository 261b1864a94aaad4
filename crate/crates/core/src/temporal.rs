//! Temporal fusion: the blend mask and the blended depth.
//!
//! The mask `α` is 1 where the observation should win (dynamic or newly seen
//! content) and 0 where the prior rendered from the cloud should win. Where
//! the prior is a hole, `α` is forced to 1.

use alloc::string::ToString;

use crate::error::FusionError;
use crate::grid::{BlendMask, ColorImage, DepthMap, Grid, Pixel};
use crate::render::PriorProjection;
use crate::spatial::box_filter;

/// Everything a mask provider may look at for one frame.
#[derive(Debug, Clone, Copy)]
pub struct MaskContext<'a> {
    pub frame: usize,
    pub depth: &'a DepthMap,
    pub color: &'a ColorImage,
    pub prior: &'a PriorProjection,
    /// Only available in evaluation or synthetic settings.
    pub ground_truth: Option<&'a DepthMap>,
}

/// Produces the blend mask `α` for a frame.
pub trait MaskProvider {
    fn blend_mask(&mut self, ctx: &MaskContext<'_>) -> Result<BlendMask, FusionError>;

    fn name(&self) -> &'static str;
}

/// Thresholds the relative depth residual and the color residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualMask {
    pub depth_threshold: f64,
    pub color_threshold: f64,
}

impl Default for ResidualMask {
    fn default() -> Self {
        ResidualMask { depth_threshold: 0.1, color_threshold: 0.1 }
    }
}

impl MaskProvider for ResidualMask {
    fn blend_mask(&mut self, ctx: &MaskContext<'_>) -> Result<BlendMask, FusionError> {
        residual_mask(ctx.depth, ctx.prior, ctx.color, self.depth_threshold, self.color_threshold)
    }

    fn name(&self) -> &'static str {
        "residual"
    }
}

/// Picks, per pixel, whichever of observation and prior is closer to ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OracleMask;

impl MaskProvider for OracleMask {
    fn blend_mask(&mut self, ctx: &MaskContext<'_>) -> Result<BlendMask, FusionError> {
        let gt = ctx.ground_truth.ok_or(FusionError::MissingGroundTruth { frame: ctx.frame })?;
        oracle_mask(ctx.depth, &ctx.prior.depth, gt)
    }

    fn name(&self) -> &'static str {
        "oracle"
    }
}

/// The same mask value everywhere; `ConstantMask(0.0)` always trusts the prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantMask(pub f64);

impl MaskProvider for ConstantMask {
    fn blend_mask(&mut self, ctx: &MaskContext<'_>) -> Result<BlendMask, FusionError> {
        if !(0.0..=1.0).contains(&self.0) {
            return Err(FusionError::Provider { frame: ctx.frame, message: "constant mask outside [0, 1]".to_string() });
        }
        let (w, h) = ctx.depth.dims();
        Ok(Grid::filled(w, h, self.0))
    }

    fn name(&self) -> &'static str {
        "constant"
    }
}

/// `α = 1` where the prior is a hole, the relative depth residual
/// `|d_t − d_p| / d_p` exceeds `thresh_depth`, or the RGB distance exceeds
/// `thresh_color`; 0 elsewhere.
pub fn residual_mask(
    depth: &DepthMap,
    prior: &PriorProjection,
    color: &ColorImage,
    thresh_depth: f64,
    thresh_color: f64,
) -> Result<BlendMask, FusionError> {
    depth.check_shape(&prior.depth, "residual_mask prior")?;
    depth.check_shape(color, "residual_mask color")?;
    Ok(Grid::from_fn(depth.width(), depth.height(), |u, v| {
        let dp = *prior.depth.get(u, v);
        let dt = *depth.get(u, v);
        if dp.is_hole() {
            return 1.0;
        }
        if dt.is_hole() {
            return 0.0;
        }
        let depth_residual = libm::fabs(dt - dp) / dp;
        let (ct, cp) = (color.get(u, v), prior.color.get(u, v));
        let color_residual = libm::sqrt((0..3).map(|i| (ct[i] - cp[i]) * (ct[i] - cp[i])).sum());
        if depth_residual > thresh_depth || color_residual > thresh_color {
            1.0
        } else {
            0.0
        }
    }))
}

/// `α = 1` where `|d_t − g| < |d_p − g|` or the prior is a hole, else 0.
///
/// Where the ground truth itself is a hole the observation is kept only if
/// the prior is missing.
pub fn oracle_mask(depth: &DepthMap, prior_depth: &DepthMap, ground_truth: &DepthMap) -> Result<BlendMask, FusionError> {
    depth.check_shape(prior_depth, "oracle_mask prior")?;
    depth.check_shape(ground_truth, "oracle_mask ground truth")?;
    Ok(Grid::from_fn(depth.width(), depth.height(), |u, v| {
        let (dt, dp, g) = (*depth.get(u, v), *prior_depth.get(u, v), *ground_truth.get(u, v));
        if dp.is_hole() {
            1.0
        } else if dt.is_hole() || g.is_hole() {
            0.0
        } else if libm::fabs(dt - g) < libm::fabs(dp - g) {
            1.0
        } else {
            0.0
        }
    }))
}

/// Clamps to `[0, 1]` and forces `α = 1` at prior holes.
pub fn finalize_mask(mask: &BlendMask, prior: &PriorProjection) -> Result<BlendMask, FusionError> {
    mask.check_shape(&prior.depth, "blend mask")?;
    Ok(mask.zip_map(&prior.depth, |&a, &dp| {
        if dp.is_hole() || a.is_nan() {
            1.0
        } else {
            a.clamp(0.0, 1.0)
        }
    }))
}

/// 3x3 box blur of a (typically binary) mask, softening seams before blending.
pub fn soften_mask(mask: &BlendMask) -> BlendMask {
    box_filter(mask, 3)
}

/// `d_f = α·d_t + (1 − α)·d_p`.
///
/// Where the prior is a hole the observation is returned regardless of `α`;
/// where only the observation is a hole the prior is returned. Equal inputs
/// are returned unchanged, free of rounding.
pub fn temporal_blend(depth: &DepthMap, prior_depth: &DepthMap, mask: &BlendMask) -> Result<DepthMap, FusionError> {
    depth.check_shape(prior_depth, "temporal_blend prior")?;
    depth.check_shape(mask, "temporal_blend mask")?;
    Ok(Grid::from_fn(depth.width(), depth.height(), |u, v| {
        let (dt, dp, a) = (*depth.get(u, v), *prior_depth.get(u, v), *mask.get(u, v));
        if dp.is_hole() {
            dt
        } else if dt.is_hole() || dt == dp {
            dp
        } else {
            a * dt + (1.0 - a) * dp
        }
    }))
}

/// The prior used for the very first frame: the observation itself.
///
/// Holes in `depth` stay holes in all three layers; valid pixels get
/// confidence `initial_confidence`.
pub fn bootstrap_prior(depth: &DepthMap, color: &ColorImage, initial_confidence: f64) -> Result<PriorProjection, FusionError> {
    depth.check_shape(color, "bootstrap color")?;
    let valid = depth.map(|d| d.is_valid() && *d > 0.0);
    Ok(PriorProjection {
        depth: depth.zip_map(&valid, |&d, &ok| if ok { d } else { f64::HOLE }),
        color: color.zip_map(&valid, |&c, &ok| if ok { c } else { <[f64; 3]>::HOLE }),
        confidence: valid.map(|&ok| if ok { initial_confidence } else { f64::HOLE }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn prior_of(depth: DepthMap, color: [f64; 3]) -> PriorProjection {
        let (w, h) = depth.dims();
        let valid = depth.map(|d| d.is_finite());
        PriorProjection {
            color: valid.map(|&ok| if ok { color } else { <[f64; 3]>::HOLE }),
            confidence: valid.map(|&ok| if ok { 1.0 } else { f64::HOLE }),
            depth: Grid::from_fn(w, h, |u, v| *depth.get(u, v)),
        }
    }

    #[test]
    fn residual_zero_for_identical_inputs() {
        let d = DepthMap::from_fn(3, 3, |u, v| 1.0 + (u + v) as f64);
        let c = ColorImage::filled(3, 3, [0.2, 0.3, 0.4]);
        let m = residual_mask(&d, &prior_of(d.clone(), [0.2, 0.3, 0.4]), &c, 0.1, 0.1).unwrap();
        assert!(m.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn residual_one_on_hole_prior() {
        let d = DepthMap::filled(3, 3, 1.0);
        let c = ColorImage::filled(3, 3, [0.0; 3]);
        let m = residual_mask(&d, &PriorProjection::holes(3, 3), &c, 0.1, 0.1).unwrap();
        assert!(m.iter().all(|&a| a == 1.0));
    }

    #[test]
    fn residual_flags_single_pixel() {
        // |1.3 - 1| / 1 = 0.3 > 0.2
        let mut d = DepthMap::filled(3, 3, 1.0);
        d.set(2, 1, 1.3);
        let c = ColorImage::filled(3, 3, [0.5; 3]);
        let m = residual_mask(&d, &prior_of(DepthMap::filled(3, 3, 1.0), [0.5; 3]), &c, 0.2, 0.1).unwrap();
        for (u, v, &a) in m.enumerate() {
            assert_eq!(a, if (u, v) == (2, 1) { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn residual_flags_color_change() {
        let d = DepthMap::filled(2, 2, 1.0);
        let c = ColorImage::filled(2, 2, [0.5, 0.5, 0.9]);
        let m = residual_mask(&d, &prior_of(d.clone(), [0.5; 3]), &c, 0.2, 0.1).unwrap();
        assert!(m.iter().all(|&a| a == 1.0));
    }

    #[test]
    fn oracle_prefers_exact_observation() {
        let g = DepthMap::from_fn(2, 2, |u, v| 2.0 + (u * 2 + v) as f64);
        let dp = g.map(|x| x + 0.5);
        let m = oracle_mask(&g, &dp, &g).unwrap();
        assert!(m.iter().all(|&a| a == 1.0));
        let m = oracle_mask(&dp, &g, &g).unwrap();
        assert!(m.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn oracle_mixed_pixels() {
        // per pixel: |d_t - g| vs |d_p - g|
        // (0,0): 0.1 vs 0.3 -> 1; (1,0): 0.5 vs 0.2 -> 0; (0,1): 0.2 vs 0.2 -> 0 (strict); (1,1): prior hole -> 1
        let g = Grid::from_vec(2, 2, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let dt = Grid::from_vec(2, 2, vec![1.1, 0.5, 1.25, 1.0]).unwrap();
        let dp = Grid::from_vec(2, 2, vec![0.7, 1.2, 0.75, f64::INFINITY]).unwrap();
        let m = oracle_mask(&dt, &dp, &g).unwrap();
        assert_eq!(m.as_slice(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn oracle_provider_needs_ground_truth() {
        let d = DepthMap::filled(2, 2, 1.0);
        let c = ColorImage::filled(2, 2, [0.0; 3]);
        let prior = prior_of(d.clone(), [0.0; 3]);
        let ctx = MaskContext { frame: 4, depth: &d, color: &c, prior: &prior, ground_truth: None };
        assert_eq!(OracleMask.blend_mask(&ctx), Err(FusionError::MissingGroundTruth { frame: 4 }));
    }

    #[test]
    fn blend_extremes_and_midpoint() {
        let dt = DepthMap::filled(2, 2, 4.0);
        let dp = DepthMap::filled(2, 2, 8.0);
        let ones = Grid::filled(2, 2, 1.0);
        let zeros = Grid::filled(2, 2, 0.0);
        assert_eq!(temporal_blend(&dt, &dp, &ones).unwrap(), dt);
        assert_eq!(temporal_blend(&dt, &dp, &zeros).unwrap(), dp);
        // 0.25 * 4 + 0.75 * 8 = 7
        let q = Grid::filled(2, 2, 0.25);
        assert!(temporal_blend(&dt, &dp, &q).unwrap().iter().all(|&x| x == 7.0));
    }

    #[test]
    fn blend_at_prior_hole_returns_observation() {
        let dt = DepthMap::filled(1, 1, 4.0);
        let dp = DepthMap::filled(1, 1, f64::INFINITY);
        let zeros = Grid::filled(1, 1, 0.0);
        assert_eq!(*temporal_blend(&dt, &dp, &zeros).unwrap().get(0, 0), 4.0);
    }

    #[test]
    fn bootstrap_prior_copies_observation() {
        let mut d = DepthMap::filled(3, 2, 2.5);
        d.set(1, 1, f64::INFINITY);
        let c = ColorImage::filled(3, 2, [0.1, 0.2, 0.3]);
        let p = bootstrap_prior(&d, &c, 1.0).unwrap();
        assert!(p.is_consistent());
        assert!(p.is_hole(1, 1));
        assert_eq!(p.depth.valid_count(), 5);
        assert!(p.confidence.iter().filter(|w| w.is_finite()).all(|&w| w == 1.0));
        let any_mask = Grid::filled(3, 2, 0.3);
        let fused = temporal_blend(&d, &p.depth, &any_mask).unwrap();
        for (a, b) in fused.iter().zip(d.iter()) {
            assert!(a == b || (a.is_infinite() && b.is_infinite()));
        }
    }

    #[test]
    fn finalize_forces_holes_and_clamps() {
        let mut dp = DepthMap::filled(2, 1, 1.0);
        dp.set(1, 0, f64::INFINITY);
        let prior = prior_of(dp, [0.0; 3]);
        let m = Grid::from_vec(2, 1, vec![1.7, 0.0]).unwrap();
        assert_eq!(finalize_mask(&m, &prior).unwrap().as_slice(), &[1.0, 1.0]);
    }
}
