//! Provider specifications and file-backed providers.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use pcfuse_core::spatial::{GradientUncertainty, UncertaintyContext, UncertaintyProvider, UncertaintyRole, ZeroUncertainty};
use pcfuse_core::temporal::{ConstantMask, MaskContext, MaskProvider, OracleMask, ResidualMask};
use pcfuse_core::{BlendMask, FusionError, Grid, UncertaintyMap};

use crate::pfm::{read_pfm, PfmImage};

/// Expands `{frame}` and `{frame:0N}` in a path template.
pub fn expand_template(template: &str, frame: usize) -> String {
    let mut out = String::with_capacity(template.len() + 8);
    let mut rest = template;
    while let Some(start) = rest.find("{frame") {
        out.push_str(&rest[..start]);
        let tail = &rest[start..];
        let Some(end) = tail.find('}') else {
            out.push_str(tail);
            return out;
        };
        let spec = &tail["{frame".len()..end];
        match spec.strip_prefix(":0").and_then(|w| w.parse::<usize>().ok()) {
            Some(width) => out.push_str(&format!("{frame:0width$}")),
            None if spec.is_empty() => out.push_str(&frame.to_string()),
            None => out.push_str(&tail[..=end]),
        }
        rest = &tail[end + 1..];
    }
    out.push_str(rest);
    out
}

fn read_gray(path: &Path, frame: usize) -> Result<Grid<f64>, FusionError> {
    let provider_err = |message: String| FusionError::Provider { frame, message };
    match read_pfm(path).map_err(|e| provider_err(e.to_string()))? {
        PfmImage::Gray(g) => Ok(g),
        PfmImage::Color(_) => Err(provider_err(format!("{}: expected a 1-channel PFM", path.display()))),
    }
}

/// Blend masks read from per-frame PFM files.
#[derive(Debug, Clone, PartialEq)]
pub struct FileMask {
    pub template: PathBuf,
}

impl MaskProvider for FileMask {
    fn blend_mask(&mut self, ctx: &MaskContext<'_>) -> Result<BlendMask, FusionError> {
        let path = PathBuf::from(expand_template(&self.template.to_string_lossy(), ctx.frame));
        read_gray(&path, ctx.frame)
    }

    fn name(&self) -> &'static str {
        "file"
    }
}

/// How stored uncertainty values are interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UncertaintyKind {
    /// Log-space uncertainty `s`, used as is.
    #[default]
    LogVariance,
    /// Confidence `c ∈ (0, 1]`, converted with `s = −ln c`.
    Confidence,
}

/// Uncertainties read from per-frame PFM files. The fused-depth template
/// falls back to the observation template.
#[derive(Debug, Clone, PartialEq)]
pub struct FileUncertainty {
    pub observation: PathBuf,
    pub fused: Option<PathBuf>,
    pub kind: UncertaintyKind,
}

impl UncertaintyProvider for FileUncertainty {
    fn uncertainty(&mut self, ctx: &UncertaintyContext<'_>) -> Result<UncertaintyMap, FusionError> {
        let template = match (ctx.role, &self.fused) {
            (UncertaintyRole::Fused, Some(f)) => f,
            _ => &self.observation,
        };
        let path = PathBuf::from(expand_template(&template.to_string_lossy(), ctx.frame));
        let raw = read_gray(&path, ctx.frame)?;
        Ok(match self.kind {
            UncertaintyKind::LogVariance => raw,
            UncertaintyKind::Confidence => raw.map(|&c| if c > 0.0 { -c.ln() } else { f64::INFINITY }),
        })
    }

    fn name(&self) -> &'static str {
        "file"
    }
}

/// `residual`, `oracle`, `constant:A` or `file:TEMPLATE`.
#[derive(Debug, Clone, PartialEq)]
pub enum MaskSpec {
    Residual,
    Oracle,
    Constant(f64),
    File(PathBuf),
}

impl FromStr for MaskSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "residual" => Ok(MaskSpec::Residual),
            "oracle" => Ok(MaskSpec::Oracle),
            _ => {
                if let Some(v) = s.strip_prefix("constant:") {
                    let a: f64 = v.parse().map_err(|_| format!("bad constant mask value {v:?}"))?;
                    if !(0.0..=1.0).contains(&a) {
                        return Err(format!("constant mask {a} outside [0, 1]"));
                    }
                    Ok(MaskSpec::Constant(a))
                } else if let Some(t) = s.strip_prefix("file:").filter(|t| !t.is_empty()) {
                    Ok(MaskSpec::File(t.into()))
                } else {
                    Err(format!("unknown mask provider {s:?} (residual, oracle, constant:A, file:TEMPLATE)"))
                }
            }
        }
    }
}

impl MaskSpec {
    /// File templates are resolved against `root` unless absolute.
    pub fn build(&self, root: &Path) -> Box<dyn MaskProvider> {
        match self {
            MaskSpec::Residual => Box::new(ResidualMask::default()),
            MaskSpec::Oracle => Box::new(OracleMask),
            MaskSpec::Constant(a) => Box::new(ConstantMask(*a)),
            MaskSpec::File(t) => Box::new(FileMask { template: root.join(t) }),
        }
    }

    pub fn needs_ground_truth(&self) -> bool {
        matches!(self, MaskSpec::Oracle)
    }
}

/// `gradient`, `gradient:SCALE`, `zero` or `file:OBS[,FUSED]`.
#[derive(Debug, Clone, PartialEq)]
pub enum UncertaintySpec {
    Gradient(f64),
    Zero,
    File { observation: PathBuf, fused: Option<PathBuf> },
}

impl FromStr for UncertaintySpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "gradient" {
            return Ok(UncertaintySpec::Gradient(GradientUncertainty::default().scale));
        }
        if s == "zero" {
            return Ok(UncertaintySpec::Zero);
        }
        if let Some(v) = s.strip_prefix("gradient:") {
            let k: f64 = v.parse().map_err(|_| format!("bad gradient scale {v:?}"))?;
            if !(k >= 0.0 && k.is_finite()) {
                return Err(format!("gradient scale {k} must be finite and nonnegative"));
            }
            return Ok(UncertaintySpec::Gradient(k));
        }
        if let Some(t) = s.strip_prefix("file:").filter(|t| !t.is_empty()) {
            let (obs, fused) = match t.split_once(',') {
                Some((a, b)) => (a, Some(PathBuf::from(b))),
                None => (t, None),
            };
            return Ok(UncertaintySpec::File { observation: obs.into(), fused });
        }
        Err(format!("unknown uncertainty provider {s:?} (gradient[:SCALE], zero, file:OBS[,FUSED])"))
    }
}

impl UncertaintySpec {
    pub fn build(&self, root: &Path, kind: UncertaintyKind) -> Box<dyn UncertaintyProvider> {
        match self {
            UncertaintySpec::Gradient(scale) => Box::new(GradientUncertainty { scale: *scale }),
            UncertaintySpec::Zero => Box::new(ZeroUncertainty),
            UncertaintySpec::File { observation, fused } => Box::new(FileUncertainty {
                observation: root.join(observation),
                fused: fused.as_ref().map(|f| root.join(f)),
                kind,
            }),
        }
    }
}
