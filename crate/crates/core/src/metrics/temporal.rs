//! Temporal consistency metrics over consecutive frame pairs.

use alloc::vec::Vec;

use super::flow::FlowEstimator;
use super::spatial::gt_usable;
use super::ssim::ssim;
use super::MetricConfig;
use crate::error::FusionError;
use crate::geometry::{backward_warp_flow, rigid_flow, CameraIntrinsics, CameraPose};
use crate::grid::{ColorImage, DepthMap, FlowField, Grid};

/// Per-pixel weights and validity for one frame pair.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalMask {
    /// `exp(-κ ‖c_w − c‖₂)`, or 1 without colors.
    pub weight: Grid<f64>,
    pub valid: Grid<bool>,
}

/// Builds the occlusion weight and validity of a pair.
///
/// A pixel is valid when the current and warped depths are finite, the warped
/// color (if colors are given) is finite, and, under the cutoff protocol, the
/// driving flow and the reference depth are within their limits. The
/// reference depth is the ground truth when available, else the estimate.
pub fn eval_mask(
    depth: &DepthMap,
    warped_depth: &DepthMap,
    colors: Option<(&ColorImage, &ColorImage)>,
    flow: &FlowField,
    reference: &DepthMap,
    cfg: &MetricConfig,
) -> EvalMask {
    let (w, h) = depth.dims();
    let mut weight = Grid::filled(w, h, 1.0);
    let mut valid = Grid::filled(w, h, false);
    for v in 0..h {
        for u in 0..w {
            let (d, dw) = (*depth.get(u, v), *warped_depth.get(u, v));
            if !(d.is_finite() && dw.is_finite()) {
                continue;
            }
            if let Some((c, cw)) = colors {
                let (a, b) = (*c.get(u, v), *cw.get(u, v));
                if !(a.iter().chain(&b).all(|x| x.is_finite())) {
                    continue;
                }
                let dist = libm::sqrt((0..3).map(|i| (b[i] - a[i]) * (b[i] - a[i])).sum::<f64>());
                weight.set(u, v, libm::exp(-cfg.kappa * dist));
            }
            if cfg.sintel_cutoffs {
                let f = *flow.get(u, v);
                if !(libm::sqrt(f[0] * f[0] + f[1] * f[1]) <= cfg.max_flow) {
                    continue;
                }
                if !gt_usable(*reference.get(u, v), Some(cfg.max_depth)) {
                    continue;
                }
            }
            valid.set(u, v, true);
        }
    }
    EvalMask { weight, valid }
}

/// A per-pair trace with its aggregate.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PairSeries {
    pub value: f64,
    /// One entry per pair `(t, t+1)`; `None` when no pixel was valid.
    pub per_pair: Vec<Option<f64>>,
}

/// Consecutive-frame inputs of the warp-based metrics.
#[derive(Debug, Clone, Copy)]
pub struct PairInputs<'a> {
    pub depths: &'a [DepthMap],
    pub colors: Option<&'a [ColorImage]>,
    pub ground_truth: Option<&'a [DepthMap]>,
}

impl PairInputs<'_> {
    fn check(&self) -> Result<(), FusionError> {
        let n = self.depths.len();
        if n < 2 {
            return Err(FusionError::TooFewFrames { needed: 2, found: n });
        }
        let first = &self.depths[0];
        for d in self.depths {
            first.check_shape(d, "sequence depth")?;
        }
        if let Some(c) = self.colors {
            if c.len() != n {
                return Err(FusionError::InvalidParameter("one color image per depth map required"));
            }
            for img in c {
                first.check_shape(img, "sequence color")?;
            }
        }
        if let Some(g) = self.ground_truth {
            if g.len() != n {
                return Err(FusionError::MissingGroundTruth { frame: g.len().min(n) });
            }
            for gt in g {
                first.check_shape(gt, "sequence ground truth")?;
            }
        }
        Ok(())
    }

    fn reference(&self, t: usize) -> &DepthMap {
        self.ground_truth.map_or(&self.depths[t], |g| &g[t])
    }
}

/// Warped quantities of one pair: the next depth brought into frame `t`, the
/// depth it is compared against, and the validity mask.
struct WarpedPair {
    warped: DepthMap,
    target: DepthMap,
    mask: EvalMask,
}

fn flow_pair(seq: &PairInputs<'_>, flow: &FlowField, t: usize, cfg: &MetricConfig) -> Result<WarpedPair, FusionError> {
    let warped = backward_warp_flow(&seq.depths[t + 1], flow)?;
    let cw = seq.colors.map(|c| backward_warp_flow(&c[t + 1], flow)).transpose()?;
    let colors = seq.colors.zip(cw.as_ref()).map(|(c, cw)| (&c[t], cw));
    let mask = eval_mask(&seq.depths[t], &warped, colors, flow, seq.reference(t), cfg);
    Ok(WarpedPair { warped, target: seq.depths[t].clone(), mask })
}

fn rigid_pair(
    seq: &PairInputs<'_>,
    poses: &[CameraPose],
    k: &CameraIntrinsics,
    t: usize,
    cfg: &MetricConfig,
) -> Result<WarpedPair, FusionError> {
    let rf = rigid_flow(&seq.depths[t], &poses[t], &poses[t + 1], k)?;
    let warped = backward_warp_flow(&seq.depths[t + 1], &rf.flow)?;
    let cw = seq.colors.map(|c| backward_warp_flow(&c[t + 1], &rf.flow)).transpose()?;
    let colors = seq.colors.zip(cw.as_ref()).map(|(c, cw)| (&c[t], cw));
    let mask = eval_mask(&rf.depth_in_dst, &warped, colors, &rf.flow, seq.reference(t), cfg);
    Ok(WarpedPair { warped, target: rf.depth_in_dst, mask })
}

fn weighted_abs_mean(p: &WarpedPair) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for i in 0..p.target.len() {
        if p.mask.valid.as_slice()[i] {
            sum += p.mask.weight.as_slice()[i] * (p.warped.as_slice()[i] - p.target.as_slice()[i]).abs();
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

fn mean_of_pairs(per_pair: Vec<Option<f64>>, what: &'static str) -> Result<PairSeries, FusionError> {
    let vals: Vec<f64> = per_pair.iter().flatten().copied().collect();
    if vals.is_empty() {
        return Err(FusionError::NoValidPixels(what));
    }
    Ok(PairSeries { value: vals.iter().sum::<f64>() / vals.len() as f64, per_pair })
}

fn check_flows(seq: &PairInputs<'_>, flows: &[FlowField]) -> Result<(), FusionError> {
    seq.check()?;
    if flows.len() + 1 != seq.depths.len() {
        return Err(FusionError::InvalidParameter("one flow per consecutive frame pair required"));
    }
    for f in flows {
        seq.depths[0].check_shape(f, "sequence flow")?;
    }
    Ok(())
}

/// Flow-warped error: mean over pairs of the masked mean `M·|d_w − d|`.
pub fn opw(seq: &PairInputs<'_>, flows: &[FlowField], cfg: &MetricConfig) -> Result<PairSeries, FusionError> {
    check_flows(seq, flows)?;
    let mut per_pair = Vec::with_capacity(flows.len());
    for (t, f) in flows.iter().enumerate() {
        per_pair.push(weighted_abs_mean(&flow_pair(seq, f, t, cfg)?));
    }
    mean_of_pairs(per_pair, "opw")
}

/// Pose-warped error: like [`opw`] but the next depth is fetched through the
/// rigid flow of `d^t` and compared with the depth of the same 3D point in
/// the next camera.
pub fn sc(
    seq: &PairInputs<'_>,
    poses: &[CameraPose],
    k: &CameraIntrinsics,
    cfg: &MetricConfig,
) -> Result<PairSeries, FusionError> {
    seq.check()?;
    if poses.len() != seq.depths.len() {
        return Err(FusionError::InvalidParameter("one pose per frame required"));
    }
    k.check_grid(&seq.depths[0], "sc depth")?;
    let mut per_pair = Vec::with_capacity(poses.len() - 1);
    for t in 0..poses.len() - 1 {
        per_pair.push(weighted_abs_mean(&rigid_pair(seq, poses, k, t, cfg)?));
    }
    mean_of_pairs(per_pair, "sc")
}

/// Ratio-consistency fractions, printed form and gated form.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RtcScores {
    /// Fraction of valid pixels with `M · max(d_w/d, d/d_w) < τ`.
    pub literal: PairSeries,
    /// Fraction of pixels with `M >= gate` whose ratio is below `τ`;
    /// `None` when no pixel passes the gate.
    pub gated: Option<PairSeries>,
}

/// Relative temporal consistency. Aggregates are pixel-count weighted over
/// all pairs; nonpositive depths are excluded.
pub fn rtc(seq: &PairInputs<'_>, flows: &[FlowField], cfg: &MetricConfig) -> Result<RtcScores, FusionError> {
    check_flows(seq, flows)?;
    let mut lit = (0usize, 0usize, Vec::with_capacity(flows.len()));
    let mut gat = (0usize, 0usize, Vec::with_capacity(flows.len()));
    for (t, f) in flows.iter().enumerate() {
        let p = flow_pair(seq, f, t, cfg)?;
        let (mut lh, mut ln, mut gh, mut gn) = (0usize, 0usize, 0usize, 0usize);
        for i in 0..p.target.len() {
            let (d, dw) = (p.target.as_slice()[i], p.warped.as_slice()[i]);
            if !p.mask.valid.as_slice()[i] || d <= 0.0 || dw <= 0.0 {
                continue;
            }
            let m = p.mask.weight.as_slice()[i];
            let ratio = (dw / d).max(d / dw);
            ln += 1;
            lh += usize::from(m * ratio < cfg.tau);
            if m >= cfg.rtc_gate {
                gn += 1;
                gh += usize::from(ratio < cfg.tau);
            }
        }
        for (acc, hit, n) in [(&mut lit, lh, ln), (&mut gat, gh, gn)] {
            acc.0 += hit;
            acc.1 += n;
            acc.2.push((n > 0).then(|| hit as f64 / n as f64));
        }
    }
    let finish = |acc: (usize, usize, Vec<Option<f64>>)| {
        if acc.1 == 0 {
            Err(FusionError::NoValidPixels("rtc"))
        } else {
            Ok(PairSeries { value: acc.0 as f64 / acc.1 as f64, per_pair: acc.2 })
        }
    };
    Ok(RtcScores { literal: finish(lit)?, gated: finish(gat).ok() })
}

fn check_gt(depths: &[DepthMap], gts: &[DepthMap]) -> Result<(), FusionError> {
    if depths.len() < 2 {
        return Err(FusionError::TooFewFrames { needed: 2, found: depths.len() });
    }
    if gts.len() != depths.len() {
        return Err(FusionError::MissingGroundTruth { frame: gts.len().min(depths.len()) });
    }
    for (d, g) in depths.iter().zip(gts) {
        depths[0].check_shape(d, "sequence depth")?;
        depths[0].check_shape(g, "sequence ground truth")?;
    }
    Ok(())
}

/// `|d^t − d^{t+1}|` and `|g^t − g^{t+1}|`, zeroed wherever any input is invalid.
pub fn change_maps(d0: &DepthMap, d1: &DepthMap, g0: &DepthMap, g1: &DepthMap) -> (Grid<f64>, Grid<f64>) {
    let (w, h) = d0.dims();
    let ok = |u, v| [d0, d1, g0, g1].iter().all(|m| m.get(u, v).is_finite());
    let dd = Grid::from_fn(w, h, |u, v| if ok(u, v) { (d0.get(u, v) - d1.get(u, v)).abs() } else { 0.0 });
    let dg = Grid::from_fn(w, h, |u, v| if ok(u, v) { (g0.get(u, v) - g1.get(u, v)).abs() } else { 0.0 });
    (dd, dg)
}

/// Temporal change consistency: mean SSIM between estimated and true depth changes.
pub fn tcc(depths: &[DepthMap], gts: &[DepthMap]) -> Result<PairSeries, FusionError> {
    check_gt(depths, gts)?;
    let mut per_pair = Vec::with_capacity(depths.len() - 1);
    for t in 0..depths.len() - 1 {
        let (dd, dg) = change_maps(&depths[t], &depths[t + 1], &gts[t], &gts[t + 1]);
        per_pair.push(Some(ssim(&dd, &dg)?));
    }
    mean_of_pairs(per_pair, "tcc")
}

/// Temporal motion consistency: mean over pairs of the per-channel SSIM
/// between flows estimated on the estimates and on the ground truth.
pub fn tcm(depths: &[DepthMap], gts: &[DepthMap], estimator: &dyn FlowEstimator) -> Result<PairSeries, FusionError> {
    check_gt(depths, gts)?;
    let mut per_pair = Vec::with_capacity(depths.len() - 1);
    for t in 0..depths.len() - 1 {
        let fd = estimator.estimate(&depths[t], &depths[t + 1]);
        let fg = estimator.estimate(&gts[t], &gts[t + 1]);
        let mut s = 0.0;
        for c in 0..2 {
            s += ssim(&fd.map(|f| f[c]), &fg.map(|f| f[c]))?;
        }
        per_pair.push(Some(0.5 * s));
    }
    mean_of_pairs(per_pair, "tcm")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CameraPose;
    use crate::math::Vec3;
    use alloc::vec;

    fn seq<'a>(d: &'a [DepthMap], c: Option<&'a [ColorImage]>) -> PairInputs<'a> {
        PairInputs { depths: d, colors: c, ground_truth: None }
    }

    fn zero_flows(n: usize, w: usize, h: usize) -> Vec<FlowField> {
        vec![Grid::filled(w, h, [0.0, 0.0]); n]
    }

    #[test]
    fn opw_two_single_pixel_frames() {
        let d = [Grid::filled(1, 1, 1.0), Grid::filled(1, 1, 3.0)];
        let c = [Grid::filled(1, 1, [0.2; 3]), Grid::filled(1, 1, [0.2; 3])];
        let r = opw(&seq(&d, Some(&c)), &zero_flows(1, 1, 1), &MetricConfig::default()).unwrap();
        assert_eq!(r.value, 2.0);
        assert_eq!(r.per_pair, vec![Some(2.0)]);
    }

    #[test]
    fn opw_zero_for_constant_sequence() {
        let d = vec![Grid::filled(5, 4, 2.5); 4];
        let c = vec![Grid::filled(5, 4, [0.1, 0.5, 0.9]); 4];
        assert_eq!(opw(&seq(&d, Some(&c)), &zero_flows(3, 5, 4), &MetricConfig::default()).unwrap().value, 0.0);
    }

    #[test]
    fn color_change_suppresses_error() {
        let d = [Grid::filled(1, 1, 1.0), Grid::filled(1, 1, 5.0)];
        let c = [Grid::filled(1, 1, [0.0; 3]), Grid::filled(1, 1, [1.0, 0.0, 0.0])];
        let r = opw(&seq(&d, Some(&c)), &zero_flows(1, 1, 1), &MetricConfig::default()).unwrap();
        assert!(r.value > 0.0 && r.value < 1e-20);
        assert_eq!(r.value, 4.0 * libm::exp(-50.0));
    }

    #[test]
    fn opw_needs_two_frames() {
        let d = [Grid::filled(1, 1, 1.0)];
        assert!(matches!(
            opw(&seq(&d, None), &[], &MetricConfig::default()),
            Err(FusionError::TooFewFrames { .. })
        ));
    }

    #[test]
    fn rtc_examples() {
        let cfg = MetricConfig::default();
        let same = vec![Grid::filled(4, 2, 1.0); 2];
        assert_eq!(rtc(&seq(&same, None), &zero_flows(1, 4, 2), &cfg).unwrap().literal.value, 1.0);
        let drift = [Grid::filled(4, 2, 1.0), Grid::filled(4, 2, 1.02)];
        assert_eq!(rtc(&seq(&drift, None), &zero_flows(1, 4, 2), &cfg).unwrap().literal.value, 0.0);
        let half = [Grid::filled(4, 2, 1.0), Grid::from_fn(4, 2, |u, _| if u < 2 { 1.0 } else { 1.05 })];
        let r = rtc(&seq(&half, None), &zero_flows(1, 4, 2), &cfg).unwrap();
        assert_eq!((r.literal.value, r.gated.unwrap().value), (0.5, 0.5));
    }

    #[test]
    fn rtc_literal_form_accepts_occluded_pixels() {
        let d = [Grid::filled(1, 1, 1.0), Grid::filled(1, 1, 2.0)];
        let c = [Grid::filled(1, 1, [0.0; 3]), Grid::filled(1, 1, [1.0, 0.0, 0.0])];
        let r = rtc(&seq(&d, Some(&c)), &zero_flows(1, 1, 1), &MetricConfig::default()).unwrap();
        assert_eq!(r.literal.value, 1.0);
        assert_eq!(r.gated, None);
    }

    #[test]
    fn sc_identity_poses_reduce_to_depth_change() {
        let k = CameraIntrinsics::new(10.0, 10.0, 2.0, 2.0, 5, 5).unwrap();
        let d = [Grid::filled(5, 5, 2.0), Grid::filled(5, 5, 2.5), Grid::filled(5, 5, 1.5)];
        let poses = [CameraPose::identity(0), CameraPose::identity(1), CameraPose::identity(2)];
        let r = sc(&seq(&d, None), &poses, &k, &MetricConfig::default()).unwrap();
        assert!((r.value - 0.75).abs() < 1e-15);
    }

    #[test]
    fn sc_is_zero_for_exact_static_plane() {
        let k = CameraIntrinsics::new(40.0, 40.0, 15.5, 15.5, 32, 32).unwrap();
        let poses: Vec<CameraPose> =
            (0..3).map(|t| CameraPose::from_translation(Vec3::new(0.05 * t as f64, 0.0, 0.0), t)).collect();
        // Plane z = 3 + 0.2 x in world coordinates, ray-cast per camera.
        let depth = |p: &CameraPose| {
            Grid::from_fn(32, 32, |u, _| {
                let rx = (u as f64 - k.cx) / k.fx;
                let tx = p.translation().x;
                (3.0 + 0.2 * tx) / (1.0 - 0.2 * rx)
            })
        };
        let d: Vec<DepthMap> = poses.iter().map(depth).collect();
        let r = sc(&seq(&d, None), &poses, &k, &MetricConfig::default()).unwrap();
        // Bilinear resampling of a non-linear depth profile leaves a small residual.
        assert!(r.value < 1e-4, "sc = {}", r.value);
    }

    #[test]
    fn uncovered_pixels_are_excluded() {
        let k = CameraIntrinsics::new(10.0, 10.0, 2.0, 0.0, 5, 1).unwrap();
        let d = [Grid::filled(5, 1, 1.0), Grid::filled(5, 1, 1.0)];
        // Shift by one pixel: the last source pixel leaves the image.
        let poses = [CameraPose::identity(0), CameraPose::from_translation(Vec3::new(-0.1, 0.0, 0.0), 1)];
        let r = sc(&seq(&d, None), &poses, &k, &MetricConfig::default()).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn tcc_and_tcm_are_one_on_ground_truth() {
        let g: Vec<DepthMap> =
            (0..3).map(|t| Grid::from_fn(16, 16, |u, v| 2.0 + libm::sin(0.5 * (u + t) as f64) + 0.1 * v as f64)).collect();
        assert!((tcc(&g, &g).unwrap().value - 1.0).abs() < 1e-12);
        let est = super::super::flow::BlockFlow::default();
        assert!((tcm(&g, &g, &est).unwrap().value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_estimate_is_caught_by_tcc_only() {
        let g: Vec<DepthMap> = (0..3).map(|t| Grid::from_fn(12, 12, |u, _| 2.0 + 0.1 * (u * (t + 1)) as f64)).collect();
        let d = vec![Grid::filled(12, 12, 2.0); 3];
        let c = vec![Grid::filled(12, 12, [0.5; 3]); 3];
        let cfg = MetricConfig::default();
        let inputs = PairInputs { depths: &d, colors: Some(&c), ground_truth: Some(&g) };
        assert_eq!(opw(&inputs, &zero_flows(2, 12, 12), &cfg).unwrap().value, 0.0);
        assert_eq!(rtc(&inputs, &zero_flows(2, 12, 12), &cfg).unwrap().literal.value, 1.0);
        assert!(tcc(&d, &g).unwrap().value < 1.0);
    }
}
