//! The per-frame fusion loop.

use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::error::FusionError;
use crate::geometry::{unproject, CameraIntrinsics, CameraPose};
use crate::grid::{BlendMask, ColorImage, ConfidenceMap, DepthMap, Grid, Pixel};
use crate::metrics::MetricConfig;
use crate::pointcloud::{integrate_frame, FrameIntegrationStats, GlobalPointCloud, ObservationView, DEFAULT_EPSILON};
use crate::render::{render_prior, PriorProjection, RenderConfig};
use crate::spatial::{
    beta_weight, gamma_weight, spatial_fuse, BetaGate, GradientUncertainty, UncertaintyContext, UncertaintyProvider,
    UncertaintyRole,
};
use crate::temporal::{bootstrap_prior, finalize_mask, soften_mask, temporal_blend, MaskContext, MaskProvider, ResidualMask};

/// Which stages run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Ablation {
    #[default]
    Full,
    /// `α = 0` wherever the prior exists.
    NoTemporal,
    /// `d_o = d_f`; weights carry no fused-depth uncertainty.
    NoSpatial,
    /// The prior comes only from the previous output, re-created every frame.
    NoGlobalPc,
}

/// Representation in which the image-space blending runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Parameterization {
    #[default]
    Depth,
    InverseDepth,
}

impl Parameterization {
    fn to_param(self, d: &DepthMap) -> DepthMap {
        match self {
            Parameterization::Depth => d.clone(),
            Parameterization::InverseDepth => d.map(|&x| if x.is_valid() { 1.0 / x } else { f64::HOLE }),
        }
    }

    fn to_depth(self, d: &DepthMap) -> DepthMap {
        match self {
            Parameterization::Depth => d.clone(),
            Parameterization::InverseDepth => {
                d.map(|&x| if x.is_valid() && x > 0.0 { 1.0 / x } else { f64::HOLE })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PipelineConfig {
    pub render: RenderConfig,
    /// Side of the box filter applied to the prior confidence.
    pub box_size: usize,
    /// Points with confidence below this are pruned.
    pub epsilon: f64,
    pub ablation: Ablation,
    pub parameterization: Parameterization,
    pub beta_gate: BetaGate,
    /// Smooth the blend mask with a 3x3 box filter before use.
    pub mask_blur: bool,
    /// Confidence of the points inserted at the first frame.
    pub initial_confidence: f64,
    pub metrics: MetricConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            render: RenderConfig::default(),
            box_size: 5,
            epsilon: DEFAULT_EPSILON,
            ablation: Ablation::Full,
            parameterization: Parameterization::Depth,
            beta_gate: BetaGate::Static,
            mask_blur: false,
            initial_confidence: 1.0,
            metrics: MetricConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        if !(self.epsilon > 0.0) {
            return Err(FusionError::InvalidParameter("epsilon must be positive"));
        }
        if self.box_size == 0 || self.box_size.is_multiple_of(2) {
            return Err(FusionError::InvalidParameter("box filter size must be odd"));
        }
        if self.render.supersample == 0 {
            return Err(FusionError::InvalidParameter("supersample must be at least 1"));
        }
        if !(self.render.background_ratio >= 1.0) {
            return Err(FusionError::InvalidParameter("background ratio must be at least 1"));
        }
        if !(self.initial_confidence > 0.0 && self.initial_confidence.is_finite()) {
            return Err(FusionError::InvalidParameter("initial confidence must be positive"));
        }
        self.metrics.validate()
    }
}

/// Inputs of one frame.
#[derive(Debug, Clone, Copy)]
pub struct FrameInput<'a> {
    pub frame: usize,
    pub color: &'a ColorImage,
    pub depth: &'a DepthMap,
    pub pose: &'a CameraPose,
    /// Only read by providers that need it, such as the oracle mask.
    pub ground_truth: Option<&'a DepthMap>,
}

/// Intermediates and output of one processed frame. Image-space maps are in
/// metric depth regardless of the parameterization.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame: usize,
    pub pose: CameraPose,
    /// `d_p`, `c_p`, `w_p`.
    pub prior: PriorProjection,
    /// `α` after hole forcing.
    pub mask: BlendMask,
    /// `d_f`.
    pub fused: DepthMap,
    pub beta: ConfidenceMap,
    pub gamma: ConfidenceMap,
    /// `d_o`.
    pub output: DepthMap,
    /// Pixels where spatial fusion fell back to the observation.
    pub fallback_pixels: usize,
    pub integration: FrameIntegrationStats,
    pub cloud_size: usize,
}

struct PreviousOutput {
    depth: DepthMap,
    color: ColorImage,
    confidence: ConfidenceMap,
    pose: CameraPose,
}

/// Online fusion state: the cloud plus the providers.
pub struct Pipeline {
    config: PipelineConfig,
    intrinsics: CameraIntrinsics,
    mask: Box<dyn MaskProvider>,
    uncertainty: Box<dyn UncertaintyProvider>,
    cloud: GlobalPointCloud,
    next_frame: usize,
    previous: Option<PreviousOutput>,
}

impl Pipeline {
    pub fn new(
        config: PipelineConfig,
        intrinsics: CameraIntrinsics,
        mask: Box<dyn MaskProvider>,
        uncertainty: Box<dyn UncertaintyProvider>,
    ) -> Result<Self, FusionError> {
        config.validate()?;
        intrinsics.validate()?;
        Ok(Pipeline {
            config,
            intrinsics,
            mask,
            uncertainty,
            cloud: GlobalPointCloud::new(),
            next_frame: 0,
            previous: None,
        })
    }

    /// Residual mask and gradient uncertainty.
    pub fn with_defaults(config: PipelineConfig, intrinsics: CameraIntrinsics) -> Result<Self, FusionError> {
        Self::new(config, intrinsics, Box::new(ResidualMask::default()), Box::new(GradientUncertainty::default()))
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intrinsics
    }

    pub fn cloud(&self) -> &GlobalPointCloud {
        &self.cloud
    }

    pub fn next_frame(&self) -> usize {
        self.next_frame
    }

    pub fn mask_provider_name(&self) -> &'static str {
        self.mask.name()
    }

    pub fn uncertainty_provider_name(&self) -> &'static str {
        self.uncertainty.name()
    }

    /// Processes all frames in order.
    pub fn fuse_sequence<'a>(
        &mut self,
        frames: impl IntoIterator<Item = FrameInput<'a>>,
    ) -> Result<Vec<FrameRecord>, FusionError> {
        let records: Vec<FrameRecord> = frames.into_iter().map(|f| self.run_frame(&f)).collect::<Result<_, _>>()?;
        if records.is_empty() {
            return Err(FusionError::EmptySequence);
        }
        Ok(records)
    }

    /// Temporal fusion, spatial fusion and cloud integration for the next frame.
    pub fn run_frame(&mut self, input: &FrameInput<'_>) -> Result<FrameRecord, FusionError> {
        if input.frame != self.next_frame {
            return Err(FusionError::FrameOrder { expected: self.next_frame, found: input.frame });
        }
        let k = self.intrinsics;
        k.check_grid(input.depth, "input depth")?;
        k.check_grid(input.color, "input color")?;
        if let Some(g) = input.ground_truth {
            k.check_grid(g, "ground truth")?;
        }
        let cfg = self.config;
        let frame = input.frame;
        let observed = input.depth.map(|&d| if d.is_valid() && d > 0.0 { d } else { f64::HOLE });
        let first = frame == 0;

        // Temporal fusion.
        let prior = if first {
            bootstrap_prior(&observed, input.color, cfg.initial_confidence)?
        } else {
            if cfg.ablation == Ablation::NoGlobalPc {
                self.rebuild_from_previous()?;
            }
            render_prior(&self.cloud, input.pose, &k, &cfg.render)?
        };
        let mask = if first {
            Grid::filled(k.width, k.height, 1.0)
        } else {
            self.blend_mask(input, &observed, &prior)?
        };
        let param = cfg.parameterization;
        let observed_p = param.to_param(&observed);
        let fused_p = temporal_blend(&observed_p, &param.to_param(&prior.depth), &mask)?;

        // Spatial fusion.
        let s_obs = self.uncertainty.uncertainty(&UncertaintyContext {
            frame,
            role: UncertaintyRole::Observation,
            depth: &observed_p,
            color: input.color,
        })?;
        k.check_grid(&s_obs, "observation uncertainty")?;
        let gamma = gamma_weight(&s_obs);
        let gate = cfg.beta_gate.apply(&mask);
        let (output_p, beta, fallback_pixels) = if cfg.ablation == Ablation::NoSpatial {
            let zero = Grid::filled(k.width, k.height, 0.0);
            let beta = beta_weight(&gate, &prior.confidence, &zero, cfg.box_size)?;
            (fused_p.clone(), beta, 0)
        } else {
            let s_fused = self.uncertainty.uncertainty(&UncertaintyContext {
                frame,
                role: UncertaintyRole::Fused,
                depth: &fused_p,
                color: input.color,
            })?;
            k.check_grid(&s_fused, "fused uncertainty")?;
            let beta = beta_weight(&gate, &prior.confidence, &s_fused, cfg.box_size)?;
            let fused = spatial_fuse(&fused_p, &observed_p, &beta, &gamma)?;
            let n = fused.fallback_count();
            (fused.depth, beta, n)
        };
        let output = param.to_depth(&output_p);
        let fused = param.to_depth(&fused_p);

        // Point-cloud integration.
        let integration = if cfg.ablation == Ablation::NoGlobalPc {
            let conf = beta.zip_map(&gamma, |b, g| b + g);
            self.previous =
                Some(PreviousOutput { depth: output.clone(), color: input.color.clone(), confidence: conf, pose: *input.pose });
            FrameIntegrationStats::default()
        } else {
            let points = unproject(&observed, &k, input.pose)?;
            let obs = ObservationView {
                points: &points,
                color: input.color,
                mask: &mask,
                beta: &beta,
                gamma: &gamma,
                pose: input.pose,
                intrinsics: &k,
            };
            let init = if first { Grid::filled(k.width, k.height, cfg.initial_confidence) } else { gamma.clone() };
            integrate_frame(&mut self.cloud, &obs, &init, cfg.epsilon)?
        };

        self.next_frame += 1;
        Ok(FrameRecord {
            frame,
            pose: *input.pose,
            prior,
            mask,
            fused,
            beta,
            gamma,
            output,
            fallback_pixels,
            integration,
            cloud_size: self.cloud.len(),
        })
    }

    fn blend_mask(
        &mut self,
        input: &FrameInput<'_>,
        observed: &DepthMap,
        prior: &PriorProjection,
    ) -> Result<BlendMask, FusionError> {
        let k = self.intrinsics;
        let raw = if self.config.ablation == Ablation::NoTemporal {
            Grid::filled(k.width, k.height, 0.0)
        } else {
            let ctx = MaskContext {
                frame: input.frame,
                depth: observed,
                color: input.color,
                prior,
                ground_truth: input.ground_truth,
            };
            let m = self.mask.blend_mask(&ctx)?;
            k.check_grid(&m, "blend mask")?;
            m
        };
        let mask = finalize_mask(&raw, prior)?;
        if self.config.mask_blur {
            finalize_mask(&soften_mask(&mask), prior)
        } else {
            Ok(mask)
        }
    }

    /// Replaces the cloud with the back-projected previous output.
    fn rebuild_from_previous(&mut self) -> Result<(), FusionError> {
        self.cloud.clear();
        let Some(prev) = &self.previous else { return Ok(()) };
        let points = unproject(&prev.depth, &self.intrinsics, &prev.pose)?;
        for (u, v, c) in prev.color.enumerate() {
            let (Some(x), rho) = (points.get(u, v), *prev.confidence.get(u, v)) else { continue };
            if c.is_valid() && rho.is_valid() {
                self.cloud.push(x, *c, rho);
            }
        }
        Ok(())
    }
}
