use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use pcfuse::manifest::SequenceData;
use pcfuse::pfm::read_depth_pfm;
use pcfuse::providers::{MaskSpec, UncertaintyKind, UncertaintySpec};
use pcfuse::report::{write_csv, ReportDocument, ReportFormat};
use pcfuse::runner::{evaluate_depths, run_sequence, write_run, RunConfig};
use pcfuse::synthetic::{generate, write_dataset, SceneKind, SyntheticConfig};
use pcfuse::{Error, SequenceManifest};
use pcfuse_core::metrics::{AlignMode, MetricConfig};
use pcfuse_core::spatial::BetaGate;
use pcfuse_core::{Ablation, Parameterization, PipelineConfig};

#[derive(Parser)]
#[command(name = "pcfuse", version, about = "Online video depth fusion with a global point cloud")]
struct Cli {
    /// Log verbosity (error, warn, info, debug, trace); overrides RUST_LOG.
    #[arg(long, global = true)]
    log: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fuse a sequence and write per-frame depth plus reports.
    Run {
        /// Sequence manifest (JSON).
        manifest: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[command(flatten)]
        output: OutputArgs,
        /// Also write the final point cloud as cloud.ply.
        #[arg(long)]
        ply: bool,
    },
    /// Evaluate existing depth maps against a sequence.
    Eval {
        /// Sequence manifest providing colors, poses, flows and ground truth.
        manifest: PathBuf,
        /// Directory of estimates named NNNNNN.pfm; defaults to the manifest's input depth.
        #[arg(long)]
        depth_dir: Option<PathBuf>,
        #[command(flatten)]
        metrics: MetricArgs,
        #[command(flatten)]
        output: OutputArgs,
        /// Number of frames to evaluate.
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Fuse a sequence and write only the final point cloud.
    ExportPly {
        manifest: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Output PLY file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate an analytic synthetic sequence with exact ground truth.
    MakeSynthetic {
        #[arg(long, value_enum, default_value = "static")]
        scene: SceneKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        frames: usize,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 64)]
        height: usize,
        /// Standard deviation of the additive depth noise in meters.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sphere radius in meters.
        #[arg(long)]
        sphere_radius: Option<f64>,
        /// Sphere displacement per frame, as X,Y,Z meters.
        #[arg(long, value_delimiter = ',', num_args = 3)]
        sphere_velocity: Option<Vec<f64>>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AblationArg {
    Full,
    NoTemporal,
    NoSpatial,
    NoGlobalPc,
}

#[derive(Clone, Copy, ValueEnum)]
enum BetaGateArg {
    Static,
    Mask,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlignArg {
    None,
    Depth,
    InverseDepth,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportArg {
    Json,
    Csv,
}

#[derive(Args)]
struct MetricArgs {
    /// Color sensitivity of the occlusion weight.
    #[arg(long, default_value_t = pcfuse_core::metrics::DEFAULT_KAPPA)]
    kappa: f64,
    /// Ratio threshold of RTC.
    #[arg(long, default_value_t = pcfuse_core::metrics::DEFAULT_TAU)]
    tau: f64,
    /// Exclude pixels with flow above 250 px or depth above 30 m.
    #[arg(long)]
    sintel_cutoffs: bool,
    /// Least-squares alignment applied to estimates before evaluation.
    #[arg(long, value_enum, default_value = "none")]
    align: AlignArg,
}

impl MetricArgs {
    fn config(&self) -> MetricConfig {
        MetricConfig {
            kappa: self.kappa,
            tau: self.tau,
            sintel_cutoffs: self.sintel_cutoffs,
            align: match self.align {
                AlignArg::None => AlignMode::None,
                AlignArg::Depth => AlignMode::Depth,
                AlignArg::InverseDepth => AlignMode::InverseDepth,
            },
            ..MetricConfig::default()
        }
    }
}

#[derive(Args)]
struct PipelineArgs {
    /// Blend mask: residual, oracle, constant:A or file:TEMPLATE ({frame} or {frame:06}).
    #[arg(long, default_value = "residual")]
    mask: MaskSpec,
    /// Uncertainty: gradient[:SCALE], zero or file:OBS[,FUSED].
    #[arg(long, default_value = "gradient")]
    uncertainty: UncertaintySpec,
    /// How file uncertainties are read; only valid with --uncertainty file:...
    #[arg(long, value_enum)]
    uncertainty_kind: Option<UncertaintyKind>,
    #[arg(long, value_enum, default_value = "full")]
    ablation: AblationArg,
    /// Splatting supersample factor.
    #[arg(long, default_value_t = 2)]
    supersample: usize,
    /// Side of the box filter on the prior confidence (odd).
    #[arg(long, default_value_t = 5)]
    box_size: usize,
    /// Points below this confidence are pruned.
    #[arg(long, default_value_t = pcfuse_core::pointcloud::DEFAULT_EPSILON)]
    epsilon: f64,
    /// Blend in inverse depth.
    #[arg(long)]
    inverse_depth: bool,
    /// Mask factor of the prior weight.
    #[arg(long, value_enum, default_value = "static")]
    beta_gate: BetaGateArg,
    /// Soften the blend mask with a 3x3 box filter.
    #[arg(long)]
    mask_blur: bool,
    /// Hole-filling iterations.
    #[arg(long, default_value_t = 2)]
    fill_iterations: usize,
    /// Background-removal depth ratio.
    #[arg(long, default_value_t = 1.5)]
    background_ratio: f64,
    /// Process only the first N frames.
    #[arg(long)]
    frames: Option<usize>,
    #[command(flatten)]
    metrics: MetricArgs,
}

impl PipelineArgs {
    fn run_config(&self, root: &Path) -> anyhow::Result<RunConfig> {
        let file_uncertainty = matches!(self.uncertainty, UncertaintySpec::File { .. });
        if self.uncertainty_kind.is_some() && !file_uncertainty {
            bail!("--uncertainty-kind only applies to --uncertainty file:...");
        }
        if self.ablation_value() == Ablation::NoTemporal && self.mask != MaskSpec::Residual {
            bail!("--ablation no-temporal fixes the mask to 0 and conflicts with --mask");
        }
        let mut pipeline = PipelineConfig {
            box_size: self.box_size,
            epsilon: self.epsilon,
            ablation: self.ablation_value(),
            parameterization: if self.inverse_depth { Parameterization::InverseDepth } else { Parameterization::Depth },
            beta_gate: match self.beta_gate {
                BetaGateArg::Static => BetaGate::Static,
                BetaGateArg::Mask => BetaGate::Mask,
            },
            mask_blur: self.mask_blur,
            metrics: self.metrics.config(),
            ..PipelineConfig::default()
        };
        pipeline.render.supersample = self.supersample;
        pipeline.render.fill_iterations = self.fill_iterations;
        pipeline.render.background_ratio = self.background_ratio;
        pipeline.validate()?;
        Ok(RunConfig {
            pipeline,
            mask: self.mask.clone(),
            uncertainty: self.uncertainty.clone(),
            uncertainty_kind: self.uncertainty_kind.unwrap_or_default(),
            provider_root: root.to_path_buf(),
            evaluate_input: false,
            max_frames: self.frames,
        })
    }

    fn ablation_value(&self) -> Ablation {
        match self.ablation {
            AblationArg::Full => Ablation::Full,
            AblationArg::NoTemporal => Ablation::NoTemporal,
            AblationArg::NoSpatial => Ablation::NoSpatial,
            AblationArg::NoGlobalPc => Ablation::NoGlobalPc,
        }
    }
}

#[derive(Args)]
struct OutputArgs {
    /// Output directory; nothing is written elsewhere.
    #[arg(long)]
    out: PathBuf,
    /// Report formats (repeatable or comma separated).
    #[arg(long, value_enum, value_delimiter = ',', default_value = "json")]
    report: Vec<ReportArg>,
    /// Also evaluate the raw input depth (report.json "input", report_input.csv).
    #[arg(long)]
    eval_input: bool,
}

impl OutputArgs {
    fn formats(&self) -> Vec<ReportFormat> {
        let mut f: Vec<ReportFormat> = self
            .report
            .iter()
            .map(|r| match r {
                ReportArg::Json => ReportFormat::Json,
                ReportArg::Csv => ReportFormat::Csv,
            })
            .collect();
        f.dedup();
        f
    }
}

fn load(manifest: &Path) -> anyhow::Result<(SequenceManifest, SequenceData)> {
    let m = SequenceManifest::load(manifest)?;
    let data = m.load_data()?;
    Ok((m, data))
}

fn cmd_run(manifest: &Path, args: &PipelineArgs, output: &OutputArgs, ply: bool) -> anyhow::Result<()> {
    let (m, data) = load(manifest)?;
    let mut cfg = args.run_config(&m.root)?;
    cfg.evaluate_input = output.eval_input;
    let result = run_sequence(&data, &cfg)?;
    write_run(&output.out, &result, &cfg, &output.formats(), ply)?;
    log::info!("fused {} frames into {}", result.records.len(), output.out.display());
    Ok(())
}

fn read_estimates(dir: &Path, n: usize) -> pcfuse::Result<Vec<pcfuse_core::DepthMap>> {
    (0..n).map(|t| read_depth_pfm(&dir.join(format!("{t:06}.pfm"))).map_err(|e| e.in_frame(t))).collect()
}

fn cmd_eval(
    manifest: &Path,
    depth_dir: Option<&Path>,
    metrics: &MetricArgs,
    output: &OutputArgs,
    frames: Option<usize>,
) -> anyhow::Result<()> {
    let (_, data) = load(manifest)?;
    let n = frames.map_or(data.len(), |f| f.min(data.len()));
    let data = data.truncated(n);
    let cfg = metrics.config();
    let depths = match depth_dir {
        Some(dir) => read_estimates(dir, n)?,
        None => data.depths.clone(),
    };
    for (t, d) in depths.iter().enumerate() {
        if d.dims() != data.intrinsics.dims() {
            return Err(Error::Manifest(format!("frame {t}: estimate is {}x{}", d.width(), d.height())).into());
        }
    }
    let report = evaluate_depths(&data, &depths, &cfg)?;
    let input = if output.eval_input { Some(evaluate_depths(&data, &data.depths, &cfg)?) } else { None };
    std::fs::create_dir_all(&output.out).map_err(|e| Error::io(&output.out, e))?;
    let mut doc = ReportDocument::new(report.clone());
    doc.input = input.clone();
    doc.settings.insert("estimates".into(), depth_dir.map_or("input".into(), |d| d.display().to_string()).into());
    for f in output.formats() {
        match f {
            ReportFormat::Json => doc.write_json(&output.out.join("report.json"))?,
            ReportFormat::Csv => {
                write_csv(&output.out.join("report.csv"), &report)?;
                if let Some(i) = &input {
                    write_csv(&output.out.join("report_input.csv"), i)?;
                }
            }
        }
    }
    Ok(())
}

fn cmd_export_ply(manifest: &Path, args: &PipelineArgs, out: &Path) -> anyhow::Result<()> {
    let (m, data) = load(manifest)?;
    let cfg = args.run_config(&m.root)?;
    let result = run_sequence(&data, &cfg)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    pcfuse::ply::write_ply(out, &result.cloud)?;
    Ok(())
}

fn cmd_make_synthetic(cfg: SyntheticConfig, out: &Path) -> anyhow::Result<()> {
    let seq = generate(&cfg)?;
    let path = write_dataset(&seq, out)?;
    println!("{}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut logger = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"));
    if let Some(level) = &cli.log {
        logger.parse_filters(level);
    }
    logger.init();

    let result = match &cli.command {
        Command::Run { manifest, pipeline, output, ply } => cmd_run(manifest, pipeline, output, *ply),
        Command::Eval { manifest, depth_dir, metrics, output, frames } => {
            cmd_eval(manifest, depth_dir.as_deref(), metrics, output, *frames)
        }
        Command::ExportPly { manifest, pipeline, out } => cmd_export_ply(manifest, pipeline, out),
        Command::MakeSynthetic { scene, out, frames, width, height, noise, seed, sphere_radius, sphere_velocity } => {
            let mut cfg = SyntheticConfig {
                scene: *scene,
                width: *width,
                height: *height,
                frames: *frames,
                noise_sigma: *noise,
                seed: *seed,
                ..SyntheticConfig::default()
            };
            if let Some(r) = sphere_radius {
                cfg.sphere_radius = *r;
            }
            if let Some(v) = sphere_velocity {
                cfg.sphere_velocity = [v[0], v[1], v[2]];
            }
            cmd_make_synthetic(cfg, out).context("make-synthetic")
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
