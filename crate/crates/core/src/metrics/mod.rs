//! Temporal and spatial evaluation of depth sequences.
//!
//! Temporal metrics compare consecutive frames after motion compensation:
//! OPW and RTC warp with a given optical flow, SC warps with the estimated
//! depth and the camera poses, and TCC/TCM compare temporal changes against
//! ground truth with SSIM. Spatial metrics compare each frame with its ground
//! truth and are averaged over frames.

pub mod flow;
pub mod spatial;
pub mod ssim;
pub mod temporal;

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::FusionError;
use crate::geometry::{CameraIntrinsics, CameraPose};
use crate::grid::{ColorImage, DepthMap, FlowField};

pub use flow::{block_flow, BlockFlow, FlowEstimator};
pub use spatial::{align_scale_shift, sd_l1, spatial_metrics, Alignment, SpatialMetrics, DELTA_THRESHOLDS};
pub use ssim::ssim;
pub use temporal::{eval_mask, opw, rtc, sc, tcc, tcm, EvalMask, PairInputs, PairSeries, RtcScores};

pub const DEFAULT_KAPPA: f64 = 50.0;
pub const DEFAULT_TAU: f64 = 1.01;
pub const SINTEL_MAX_FLOW: f64 = 250.0;
pub const SINTEL_MAX_DEPTH: f64 = 30.0;

/// Optional least-squares alignment of estimates to ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum AlignMode {
    #[default]
    None,
    /// Fit scale and shift on the values as given.
    Depth,
    /// Fit on inverse values, then convert back to depth.
    InverseDepth,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricConfig {
    /// Color sensitivity of the occlusion weight.
    pub kappa: f64,
    /// Ratio threshold of RTC.
    pub tau: f64,
    /// Minimum occlusion weight for a pixel to count in gated RTC.
    pub rtc_gate: f64,
    /// Restrict every metric to pixels within `max_flow` and `max_depth`.
    pub sintel_cutoffs: bool,
    pub max_flow: f64,
    pub max_depth: f64,
    pub align: AlignMode,
    /// Flow estimator used for TCM.
    pub tcm_flow: BlockFlow,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            kappa: DEFAULT_KAPPA,
            tau: DEFAULT_TAU,
            rtc_gate: 0.5,
            sintel_cutoffs: false,
            max_flow: SINTEL_MAX_FLOW,
            max_depth: SINTEL_MAX_DEPTH,
            align: AlignMode::None,
            tcm_flow: BlockFlow::default(),
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(FusionError::InvalidParameter("kappa must be finite and nonnegative"));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(FusionError::InvalidParameter("tau must be finite and positive"));
        }
        if !(self.max_flow > 0.0 && self.max_depth > 0.0) {
            return Err(FusionError::InvalidParameter("cutoffs must be positive"));
        }
        Ok(())
    }

    fn depth_cap(&self) -> Option<f64> {
        self.sintel_cutoffs.then_some(self.max_depth)
    }
}

/// Borrowed view of a sequence to evaluate. Every present slice has one entry
/// per frame, except `flows`, which has one entry per consecutive pair.
#[derive(Debug, Clone, Copy)]
pub struct SequenceView<'a> {
    pub depths: &'a [DepthMap],
    pub colors: Option<&'a [ColorImage]>,
    pub flows: Option<&'a [FlowField]>,
    pub ground_truth: Option<&'a [DepthMap]>,
    pub poses: Option<&'a [CameraPose]>,
    pub intrinsics: Option<&'a CameraIntrinsics>,
}

impl<'a> SequenceView<'a> {
    pub fn new(depths: &'a [DepthMap]) -> Self {
        SequenceView { depths, colors: None, flows: None, ground_truth: None, poses: None, intrinsics: None }
    }
}

/// Metrics of one frame; the temporal entries describe the pair `(frame, frame + 1)`.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FrameMetrics {
    pub frame: usize,
    pub rae: Option<f64>,
    pub rms: Option<f64>,
    pub l1: Option<f64>,
    pub delta_bad: Option<[f64; 3]>,
    pub opw: Option<f64>,
    pub rtc: Option<f64>,
    pub rtc_gated: Option<f64>,
    pub sc: Option<f64>,
    pub tcc: Option<f64>,
    pub tcm: Option<f64>,
}

/// Sequence-level results. A metric is `None` when its inputs were not provided.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricReport {
    /// Number of frames `n`.
    pub frames: usize,
    /// Pixels per frame `m`.
    pub pixels: usize,
    pub config: MetricConfig,
    pub opw: Option<f64>,
    /// Pixel-weighted over all pairs.
    pub rtc: Option<f64>,
    pub rtc_gated: Option<f64>,
    pub tcc: Option<f64>,
    pub tcm: Option<f64>,
    /// Flow operator behind TCM.
    pub tcm_flow: Option<String>,
    pub sc: Option<f64>,
    pub sd_l1: Option<f64>,
    pub rae: Option<f64>,
    pub rms: Option<f64>,
    pub delta_bad: Option<[f64; 3]>,
    /// `1 - delta_bad`, the classical accuracy form.
    pub delta_accuracy: Option<[f64; 3]>,
    pub per_frame: Vec<FrameMetrics>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn apply_alignment(depths: &[DepthMap], gts: &[DepthMap], mode: AlignMode) -> Result<Vec<DepthMap>, FusionError> {
    let inv = |m: &DepthMap| m.map(|&x| if x.is_finite() && x > 0.0 { 1.0 / x } else { f64::INFINITY });
    depths
        .iter()
        .zip(gts)
        .map(|(d, g)| match mode {
            AlignMode::None => Ok(d.clone()),
            AlignMode::Depth => Ok(align_scale_shift(d, g)?.aligned),
            AlignMode::InverseDepth => Ok(inv(&align_scale_shift(&inv(d), &inv(g))?.aligned)),
        })
        .collect()
}

fn fill_trace(per_frame: &mut [FrameMetrics], series: &PairSeries, set: impl Fn(&mut FrameMetrics, Option<f64>)) {
    for (f, v) in per_frame.iter_mut().zip(&series.per_pair) {
        set(f, *v);
    }
}

/// Evaluates every metric whose inputs are present, using [`BlockFlow`] from
/// the config for TCM.
pub fn evaluate(seq: &SequenceView<'_>, cfg: &MetricConfig) -> Result<MetricReport, FusionError> {
    evaluate_with(seq, cfg, &cfg.tcm_flow)
}

/// Like [`evaluate`] with an explicit TCM flow estimator.
///
/// Spatial metrics and SD(L1) need ground truth; OPW and RTC need flows; SC
/// needs poses and intrinsics; TCC and TCM need ground truth and frames of at
/// least the SSIM window size. Temporal metrics need two frames.
pub fn evaluate_with(
    seq: &SequenceView<'_>,
    cfg: &MetricConfig,
    estimator: &dyn FlowEstimator,
) -> Result<MetricReport, FusionError> {
    cfg.validate()?;
    let n = seq.depths.len();
    if n == 0 {
        return Err(FusionError::EmptySequence);
    }
    let (w, h) = seq.depths[0].dims();
    let aligned;
    let depths = match (cfg.align, seq.ground_truth) {
        (AlignMode::None, _) => seq.depths,
        (_, Some(g)) => {
            if g.len() != n {
                return Err(FusionError::MissingGroundTruth { frame: g.len().min(n) });
            }
            aligned = apply_alignment(seq.depths, g, cfg.align)?;
            &aligned[..]
        }
        (_, None) => return Err(FusionError::MissingGroundTruth { frame: 0 }),
    };
    let mut report = MetricReport {
        frames: n,
        pixels: w * h,
        config: *cfg,
        opw: None,
        rtc: None,
        rtc_gated: None,
        tcc: None,
        tcm: None,
        tcm_flow: None,
        sc: None,
        sd_l1: None,
        rae: None,
        rms: None,
        delta_bad: None,
        delta_accuracy: None,
        per_frame: (0..n).map(|frame| FrameMetrics { frame, ..Default::default() }).collect(),
    };
    let pairs = PairInputs { depths, colors: seq.colors, ground_truth: seq.ground_truth };

    if let Some(g) = seq.ground_truth {
        if g.len() != n {
            return Err(FusionError::MissingGroundTruth { frame: g.len().min(n) });
        }
        let mut per = Vec::with_capacity(n);
        for (t, (d, gt)) in depths.iter().zip(g).enumerate() {
            let m = spatial_metrics(d, gt, cfg.depth_cap())?;
            let f = &mut report.per_frame[t];
            f.rae = Some(m.rae);
            f.rms = Some(m.rms);
            f.l1 = Some(m.l1);
            f.delta_bad = Some(m.delta_bad);
            per.push(m);
        }
        report.rae = Some(mean(per.iter().map(|m| m.rae)));
        report.rms = Some(mean(per.iter().map(|m| m.rms)));
        let bad: [f64; 3] = core::array::from_fn(|i| mean(per.iter().map(|m| m.delta_bad[i])));
        report.delta_bad = Some(bad);
        report.delta_accuracy = Some(bad.map(|b| 1.0 - b));
        if n >= 2 {
            let l1: Vec<f64> = per.iter().map(|m| m.l1).collect();
            report.sd_l1 = Some(spatial::population_sd(&l1));
            if w >= ssim::WINDOW && h >= ssim::WINDOW {
                let t = tcc(depths, g)?;
                fill_trace(&mut report.per_frame, &t, |f, v| f.tcc = v);
                report.tcc = Some(t.value);
                let m = tcm(depths, g, estimator)?;
                fill_trace(&mut report.per_frame, &m, |f, v| f.tcm = v);
                report.tcm = Some(m.value);
                report.tcm_flow = Some(String::from(estimator.name()));
            }
        }
    }
    if n >= 2 {
        if let Some(flows) = seq.flows {
            let o = opw(&pairs, flows, cfg)?;
            fill_trace(&mut report.per_frame, &o, |f, v| f.opw = v);
            report.opw = Some(o.value);
            let r = rtc(&pairs, flows, cfg)?;
            fill_trace(&mut report.per_frame, &r.literal, |f, v| f.rtc = v);
            report.rtc = Some(r.literal.value);
            if let Some(g) = &r.gated {
                fill_trace(&mut report.per_frame, g, |f, v| f.rtc_gated = v);
                report.rtc_gated = Some(g.value);
            }
        }
        if let (Some(poses), Some(k)) = (seq.poses, seq.intrinsics) {
            let s = sc(&pairs, poses, k, cfg)?;
            fill_trace(&mut report.per_frame, &s, |f, v| f.sc = v);
            report.sc = Some(s.value);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use alloc::vec;

    #[test]
    fn defaults() {
        let c = MetricConfig::default();
        assert_eq!((c.kappa, c.tau), (50.0, 1.01));
        assert_eq!((c.max_flow, c.max_depth), (250.0, 30.0));
        assert!(!c.sintel_cutoffs);
    }

    #[test]
    fn ground_truth_sequence_scores_perfectly() {
        let g: Vec<DepthMap> =
            (0..4).map(|t| Grid::from_fn(12, 12, |u, v| 2.0 + 0.05 * (u * v) as f64 + 0.1 * t as f64)).collect();
        let c = vec![Grid::filled(12, 12, [0.3; 3]); 4];
        let flows = vec![Grid::filled(12, 12, [0.0, 0.0]); 3];
        let view = SequenceView { colors: Some(&c), flows: Some(&flows), ground_truth: Some(&g), ..SequenceView::new(&g) };
        let r = evaluate(&view, &MetricConfig::default()).unwrap();
        assert_eq!((r.frames, r.pixels), (4, 144));
        assert_eq!(r.rae, Some(0.0));
        assert_eq!(r.delta_bad, Some([0.0; 3]));
        assert!((r.tcc.unwrap() - 1.0).abs() < 1e-12);
        assert!((r.tcm.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(r.tcm_flow.as_deref(), Some("block_flow"));
        assert_eq!(r.sd_l1, Some(0.0));
        assert_eq!(r.per_frame.len(), 4);
        assert_eq!(r.per_frame[3].opw, None);
        let mean_rae = r.per_frame.iter().map(|f| f.rae.unwrap()).sum::<f64>() / 4.0;
        assert_eq!(r.rae, Some(mean_rae));
    }

    #[test]
    fn alignment_fixes_affine_estimates() {
        let g: Vec<DepthMap> = (0..2).map(|t| Grid::from_fn(4, 4, |u, v| 1.0 + (u + 2 * v + t) as f64)).collect();
        let d: Vec<DepthMap> = g.iter().map(|m| m.map(|x| 0.5 * x - 0.2)).collect();
        let view = SequenceView { ground_truth: Some(&g), ..SequenceView::new(&d) };
        let cfg = MetricConfig { align: AlignMode::Depth, ..Default::default() };
        assert!(evaluate(&view, &cfg).unwrap().rae.unwrap() < 1e-12);
        assert!(evaluate(&SequenceView::new(&d), &cfg).is_err());
    }

    #[test]
    fn empty_sequence_is_an_error() {
        assert_eq!(evaluate(&SequenceView::new(&[]), &MetricConfig::default()).err(), Some(FusionError::EmptySequence));
    }
}
