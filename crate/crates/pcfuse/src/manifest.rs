//! Sequence manifests and dataset loading.
//!
//! A manifest is a JSON file next to the data it describes; every path in it
//! is relative to the manifest's directory.
//!
//! ```json
//! {
//!   "schema": 1,
//!   "intrinsics": { "fx": 64, "fy": 64, "cx": 31.5, "cy": 31.5, "width": 64, "height": 64 },
//!   "depth_encoding": { "format": "pfm" },
//!   "pose_convention": "camera-to-world",
//!   "frames": [
//!     { "color": "color/000000.png", "depth": "depth/000000.pfm", "pose": "pose/000000.txt",
//!       "ground_truth": "gt/000000.pfm", "flow": "flow/000000.flo" }
//!   ]
//! }
//! ```
//!
//! `intrinsics` may instead be a path to an intrinsics text file. Colors are
//! 8-bit PNG (scaled to `[0, 1]`) or 3-channel PFM. Depth and ground truth use
//! the depth encoding; 16-bit PNG depth decodes as `value / scale + offset`
//! with 0 read as a hole.

use std::path::{Path, PathBuf};

use pcfuse_core::{CameraIntrinsics, CameraPose, ColorImage, DepthMap, FlowField, Grid};
use serde::{Deserialize, Serialize};

use crate::camera::{read_intrinsics, read_pose, PoseConvention};
use crate::error::{read_file, Error, FormatError, Result};
use crate::flo::read_flo;
use crate::pfm::{read_color_pfm, read_depth_pfm, read_pfm, PfmImage};

pub const MANIFEST_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "format", rename_all = "lowercase")]
pub enum DepthEncoding {
    #[default]
    Pfm,
    Png16 {
        scale: f64,
        #[serde(default)]
        offset: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IntrinsicsSource {
    Inline { fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize },
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
    pub color: PathBuf,
    pub depth: PathBuf,
    pub pose: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<PathBuf>,
    /// Flow from this frame to the next.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<PathBuf>,
    /// Pixels of independently moving objects (nonzero = object).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_mask: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub schema: u32,
    pub intrinsics: IntrinsicsSource,
    #[serde(default)]
    pub depth_encoding: DepthEncoding,
    #[serde(default)]
    pub pose_convention: PoseConvention,
    pub frames: Vec<FrameEntry>,
}

/// A validated manifest with paths resolved against its directory.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceManifest {
    pub root: PathBuf,
    pub intrinsics: CameraIntrinsics,
    pub depth_encoding: DepthEncoding,
    pub pose_convention: PoseConvention,
    pub frames: Vec<FrameEntry>,
}

/// Everything a run needs, in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceData {
    pub intrinsics: CameraIntrinsics,
    pub colors: Vec<ColorImage>,
    pub depths: Vec<DepthMap>,
    pub poses: Vec<CameraPose>,
    pub ground_truth: Option<Vec<DepthMap>>,
    /// One per consecutive pair.
    pub flows: Option<Vec<FlowField>>,
    pub object_masks: Option<Vec<Grid<bool>>>,
}

impl SequenceData {
    pub fn len(&self) -> usize {
        self.depths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depths.is_empty()
    }

    /// The first `n` frames (flows trimmed to match).
    pub fn truncated(&self, n: usize) -> SequenceData {
        let n = n.min(self.len());
        SequenceData {
            intrinsics: self.intrinsics,
            colors: self.colors[..n].to_vec(),
            depths: self.depths[..n].to_vec(),
            poses: self.poses[..n].to_vec(),
            ground_truth: self.ground_truth.as_ref().map(|g| g[..n].to_vec()),
            flows: self.flows.as_ref().map(|f| f[..n.saturating_sub(1).min(f.len())].to_vec()),
            object_masks: self.object_masks.as_ref().map(|m| m[..n].to_vec()),
        }
    }

    /// Same sequence with `depths` replaced.
    pub fn with_depths(&self, depths: Vec<DepthMap>) -> SequenceData {
        SequenceData { depths, ..self.clone() }
    }
}

fn all_or_none<'a>(
    frames: &'a [FrameEntry],
    what: &str,
    pick: impl Fn(&'a FrameEntry) -> Option<&'a PathBuf>,
    expected: usize,
) -> Result<bool> {
    let n = frames.iter().take(expected).filter(|f| pick(f).is_some()).count();
    match n {
        0 => Ok(false),
        n if n == expected => Ok(true),
        _ => Err(Error::Manifest(format!("{what} given for only {n} of {expected} frames"))),
    }
}

impl SequenceManifest {
    /// Parses and validates a manifest without reading any frame data.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        let file: ManifestFile =
            serde_json::from_slice(&bytes).map_err(|e| Error::Json { path: path.to_path_buf(), source: e })?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_file(file, root)
    }

    pub fn from_file(file: ManifestFile, root: PathBuf) -> Result<Self> {
        if file.schema != MANIFEST_SCHEMA {
            return Err(Error::Manifest(format!("unsupported schema {}", file.schema)));
        }
        if file.frames.is_empty() {
            return Err(Error::Manifest("no frames".into()));
        }
        if let DepthEncoding::Png16 { scale, offset } = file.depth_encoding {
            if !(scale > 0.0 && scale.is_finite() && offset.is_finite()) {
                return Err(Error::Manifest("png16 scale must be positive".into()));
            }
        }
        let intrinsics = match &file.intrinsics {
            IntrinsicsSource::Inline { fx, fy, cx, cy, width, height } => {
                CameraIntrinsics::new(*fx, *fy, *cx, *cy, *width, *height)?
            }
            IntrinsicsSource::File(p) => read_intrinsics(&root.join(p), None)?,
        };
        let n = file.frames.len();
        for (i, f) in file.frames.iter().enumerate() {
            if let Some(idx) = f.index {
                if idx != i {
                    return Err(Error::Manifest(format!("frame {i} is labeled {idx}; indices must run from 0")));
                }
            }
            let paths = [Some(&f.color), Some(&f.depth), Some(&f.pose)]
                .into_iter()
                .chain([&f.ground_truth, &f.flow, &f.object_mask].map(Option::as_ref))
                .flatten();
            for p in paths {
                let full = root.join(p);
                if !full.is_file() {
                    return Err(Error::Manifest(format!("frame {i}: missing file {}", full.display())));
                }
            }
        }
        all_or_none(&file.frames, "ground_truth", |f| f.ground_truth.as_ref(), n)?;
        all_or_none(&file.frames, "object_mask", |f| f.object_mask.as_ref(), n)?;
        all_or_none(&file.frames, "flow", |f| f.flow.as_ref(), n - 1)?;
        Ok(SequenceManifest {
            root,
            intrinsics,
            depth_encoding: file.depth_encoding,
            pose_convention: file.pose_convention,
            frames: file.frames,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn path(&self, p: &Path) -> PathBuf {
        self.root.join(p)
    }

    pub fn has_ground_truth(&self) -> bool {
        self.frames[0].ground_truth.is_some()
    }

    fn check(&self, frame: usize, path: &Path, dims: (usize, usize)) -> Result<()> {
        if dims != self.intrinsics.dims() {
            let (w, h) = self.intrinsics.dims();
            return Err(Error::format(
                path,
                FormatError::new(format!("frame {frame}: {}x{} image, sequence is {w}x{h}", dims.0, dims.1)),
            ));
        }
        Ok(())
    }

    pub fn read_depth(&self, frame: usize, rel: &Path) -> Result<DepthMap> {
        let path = self.path(rel);
        let d = match self.depth_encoding {
            DepthEncoding::Pfm => read_depth_pfm(&path)?,
            DepthEncoding::Png16 { scale, offset } => read_png16_depth(&path, scale, offset)?,
        };
        self.check(frame, &path, d.dims())?;
        Ok(d)
    }

    pub fn read_color(&self, frame: usize, rel: &Path) -> Result<ColorImage> {
        let path = self.path(rel);
        let c = if is_pfm(&path) { read_color_pfm(&path)? } else { read_png_color(&path)? };
        self.check(frame, &path, c.dims())?;
        Ok(c)
    }

    /// Reads every frame into memory.
    pub fn load_data(&self) -> Result<SequenceData> {
        let n = self.len();
        let mut data = SequenceData {
            intrinsics: self.intrinsics,
            colors: Vec::with_capacity(n),
            depths: Vec::with_capacity(n),
            poses: Vec::with_capacity(n),
            ground_truth: self.has_ground_truth().then(Vec::new),
            flows: (n > 1 && self.frames[0].flow.is_some()).then(Vec::new),
            object_masks: self.frames[0].object_mask.is_some().then(Vec::new),
        };
        for (i, f) in self.frames.iter().enumerate() {
            let mut load = || -> Result<()> {
                data.colors.push(self.read_color(i, &f.color)?);
                data.depths.push(self.read_depth(i, &f.depth)?);
                data.poses.push(read_pose(&self.path(&f.pose), self.pose_convention, i)?);
                if let (Some(g), Some(p)) = (data.ground_truth.as_mut(), &f.ground_truth) {
                    g.push(self.read_depth(i, p)?);
                }
                if let (Some(fl), Some(p)) = (data.flows.as_mut(), &f.flow) {
                    if i + 1 < n {
                        let path = self.path(p);
                        let flow = read_flo(&path)?;
                        self.check(i, &path, flow.dims())?;
                        fl.push(flow);
                    }
                }
                if let (Some(m), Some(p)) = (data.object_masks.as_mut(), &f.object_mask) {
                    let path = self.path(p);
                    let mask = read_binary_mask(&path)?;
                    self.check(i, &path, mask.dims())?;
                    m.push(mask);
                }
                Ok(())
            };
            load().map_err(|e| e.in_frame(i))?;
        }
        Ok(data)
    }
}

fn is_pfm(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pfm"))
}

fn open_image(path: &Path) -> Result<image::DynamicImage> {
    let bytes = read_file(path)?;
    image::load_from_memory(&bytes).map_err(|e| Error::Image { path: path.to_path_buf(), source: e })
}

pub fn read_png_color(path: &Path) -> Result<ColorImage> {
    let img = open_image(path)?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.pixels().map(|p| p.0.map(|x| f64::from(x) / 255.0)).collect();
    Ok(Grid::from_vec(w, h, data)?)
}

pub fn write_png_color(path: &Path, color: &ColorImage) -> Result<()> {
    let (w, h) = color.dims();
    let buf: Vec<u8> = color
        .iter()
        .flat_map(|c| c.map(|x| if x.is_finite() { (x.clamp(0.0, 1.0) * 255.0).round() as u8 } else { 0 }))
        .collect();
    let img = image::RgbImage::from_raw(w as u32, h as u32, buf).expect("buffer sized from grid");
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Image { path: path.to_path_buf(), source: e })
}

/// 16-bit depth: `value / scale + offset`, with 0 read as a hole.
pub fn read_png16_depth(path: &Path, scale: f64, offset: f64) -> Result<DepthMap> {
    let img = open_image(path)?.to_luma16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.pixels().map(|p| if p.0[0] == 0 { f64::INFINITY } else { f64::from(p.0[0]) / scale + offset }).collect();
    Ok(Grid::from_vec(w, h, data)?)
}

/// Inverse of [`read_png16_depth`]; holes and out-of-range values become 0.
pub fn write_png16_depth(path: &Path, depth: &DepthMap, scale: f64, offset: f64) -> Result<()> {
    let (w, h) = depth.dims();
    let buf: Vec<u16> = depth
        .iter()
        .map(|&d| {
            let q = ((d - offset) * scale).round();
            if q.is_finite() && (1.0..=65535.0).contains(&q) {
                q as u16
            } else {
                0
            }
        })
        .collect();
    let img: image::ImageBuffer<image::Luma<u16>, Vec<u16>> =
        image::ImageBuffer::from_raw(w as u32, h as u32, buf).expect("buffer sized from grid");
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Image { path: path.to_path_buf(), source: e })
}

/// A PFM or PNG mask; nonzero finite values are `true`.
pub fn read_binary_mask(path: &Path) -> Result<Grid<bool>> {
    if is_pfm(path) {
        return match read_pfm(path)? {
            PfmImage::Gray(g) => Ok(g.map(|&x| x.is_finite() && x != 0.0)),
            PfmImage::Color(_) => Err(Error::format(path, FormatError::new("mask must be single-channel"))),
        };
    }
    let img = open_image(path)?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(Grid::from_vec(w, h, img.pixels().map(|p| p.0[0] != 0).collect())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png16_depth_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.png");
        let d = Grid::from_fn(5, 3, |u, v| if u == 0 && v == 0 { f64::INFINITY } else { 1.0 + 0.001 * (u * 7 + v) as f64 });
        write_png16_depth(&path, &d, 1000.0, 0.0).unwrap();
        let r = read_png16_depth(&path, 1000.0, 0.0).unwrap();
        for (a, b) in d.iter().zip(r.iter()) {
            assert!(a == b || (a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn png_color_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.png");
        let c = Grid::from_fn(4, 4, |u, v| [u as f64 / 255.0, v as f64 / 255.0, 1.0]);
        write_png_color(&path, &c).unwrap();
        assert_eq!(read_png_color(&path).unwrap(), c);
    }

    #[test]
    fn encoding_json_forms() {
        let e: DepthEncoding = serde_json::from_str(r#"{"format":"png16","scale":1000}"#).unwrap();
        assert_eq!(e, DepthEncoding::Png16 { scale: 1000.0, offset: 0.0 });
        let p: DepthEncoding = serde_json::from_str(r#"{"format":"pfm"}"#).unwrap();
        assert_eq!(p, DepthEncoding::Pfm);
        let k: IntrinsicsSource = serde_json::from_str(r#""K.txt""#).unwrap();
        assert_eq!(k, IntrinsicsSource::File("K.txt".into()));
    }
}
