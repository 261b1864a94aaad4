//! Running the pipeline over a loaded sequence and writing its outputs.

use std::path::{Path, PathBuf};

use pcfuse_core::metrics::{evaluate, MetricConfig, MetricReport, SequenceView};
use pcfuse_core::{DepthMap, FrameInput, FrameRecord, GlobalPointCloud, Pipeline, PipelineConfig};

use crate::error::{Error, Result};
use crate::manifest::SequenceData;
use crate::pfm::write_depth_pfm;
use crate::ply::write_ply;
use crate::providers::{MaskSpec, UncertaintyKind, UncertaintySpec};
use crate::report::{write_csv, ReportDocument, ReportFormat};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub mask: MaskSpec,
    pub uncertainty: UncertaintySpec,
    pub uncertainty_kind: UncertaintyKind,
    /// Base directory for file-provider templates.
    pub provider_root: PathBuf,
    /// Also evaluate the raw input depth.
    pub evaluate_input: bool,
    /// Stop after this many frames.
    pub max_frames: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            pipeline: PipelineConfig::default(),
            mask: MaskSpec::Residual,
            uncertainty: UncertaintySpec::Gradient(10.0),
            uncertainty_kind: UncertaintyKind::LogVariance,
            provider_root: PathBuf::new(),
            evaluate_input: false,
            max_frames: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub records: Vec<FrameRecord>,
    pub report: MetricReport,
    pub input_report: Option<MetricReport>,
    pub cloud: GlobalPointCloud,
    pub mask_provider: &'static str,
    pub uncertainty_provider: &'static str,
}

impl RunResult {
    pub fn outputs(&self) -> Vec<DepthMap> {
        self.records.iter().map(|r| r.output.clone()).collect()
    }
}

pub fn build_pipeline(data: &SequenceData, cfg: &RunConfig) -> Result<Pipeline> {
    if cfg.mask.needs_ground_truth() && data.ground_truth.is_none() {
        return Err(Error::Manifest("the oracle mask needs ground-truth depth in the manifest".into()));
    }
    Ok(Pipeline::new(
        cfg.pipeline,
        data.intrinsics,
        cfg.mask.build(&cfg.provider_root),
        cfg.uncertainty.build(&cfg.provider_root, cfg.uncertainty_kind),
    )?)
}

/// Evaluates `depths` against whatever references `data` carries.
pub fn evaluate_depths(data: &SequenceData, depths: &[DepthMap], metrics: &MetricConfig) -> Result<MetricReport> {
    let n = depths.len();
    let view = SequenceView {
        depths,
        colors: Some(&data.colors[..n]),
        flows: data.flows.as_deref().map(|f| &f[..n.saturating_sub(1).min(f.len())]),
        ground_truth: data.ground_truth.as_deref().map(|g| &g[..n]),
        poses: Some(&data.poses[..n]),
        intrinsics: Some(&data.intrinsics),
    };
    Ok(evaluate(&view, metrics)?)
}

/// Fuses every frame in order, then evaluates the outputs.
pub fn run_sequence(data: &SequenceData, cfg: &RunConfig) -> Result<RunResult> {
    if data.is_empty() {
        return Err(pcfuse_core::FusionError::EmptySequence.into());
    }
    let n = cfg.max_frames.map_or(data.len(), |m| m.min(data.len()));
    let mut pipeline = build_pipeline(data, cfg)?;
    let mut records = Vec::with_capacity(n);
    for t in 0..n {
        let input = FrameInput {
            frame: t,
            color: &data.colors[t],
            depth: &data.depths[t],
            pose: &data.poses[t],
            ground_truth: data.ground_truth.as_ref().map(|g| &g[t]),
        };
        let rec = pipeline.run_frame(&input).map_err(|e| Error::from(e).in_frame(t))?;
        log::debug!(
            "frame {t}: cloud {} points, +{} -{} ({} updated)",
            rec.cloud_size,
            rec.integration.inserted,
            rec.integration.pruned,
            rec.integration.updated
        );
        records.push(rec);
    }
    let outputs: Vec<DepthMap> = records.iter().map(|r| r.output.clone()).collect();
    let metrics = &cfg.pipeline.metrics;
    let report = evaluate_depths(data, &outputs, metrics)?;
    let input_report = if cfg.evaluate_input { Some(evaluate_depths(data, &data.depths[..n], metrics)?) } else { None };
    Ok(RunResult {
        records,
        report,
        input_report,
        cloud: pipeline.cloud().clone(),
        mask_provider: pipeline.mask_provider_name(),
        uncertainty_provider: pipeline.uncertainty_provider_name(),
    })
}

/// Writes `depth/NNNNNN.pfm`, the requested reports and optionally `cloud.ply` into `out`.
pub fn write_run(
    out: &Path,
    result: &RunResult,
    cfg: &RunConfig,
    formats: &[ReportFormat],
    ply: bool,
) -> Result<()> {
    let depth_dir = out.join("depth");
    std::fs::create_dir_all(&depth_dir).map_err(|e| Error::io(&depth_dir, e))?;
    for r in &result.records {
        write_depth_pfm(&depth_dir.join(format!("{:06}.pfm", r.frame)), &r.output)?;
    }
    let mut doc = ReportDocument::new(result.report.clone());
    doc.input = result.input_report.clone();
    let p = &cfg.pipeline;
    doc.settings.insert("mask".into(), result.mask_provider.into());
    doc.settings.insert("uncertainty".into(), result.uncertainty_provider.into());
    doc.settings.insert("pipeline".into(), serde_json::to_value(p).expect("config serializes"));
    for f in formats {
        match f {
            ReportFormat::Json => doc.write_json(&out.join("report.json"))?,
            ReportFormat::Csv => {
                write_csv(&out.join("report.csv"), &result.report)?;
                if let Some(i) = &result.input_report {
                    write_csv(&out.join("report_input.csv"), i)?;
                }
            }
        }
    }
    if ply {
        write_ply(&out.join("cloud.ply"), &result.cloud)?;
    }
    Ok(())
}
