//! Analytic test scenes with exact depth, poses and flow.
//!
//! Both scenes view a textured plane `z = 3 + 0.15 x + 0.1 y` from a camera
//! that slides right and yaws slowly. The dynamic scene adds a textured
//! sphere that moves right and toward the camera. Depth comes from ray
//! casting, flow from reprojecting each hit point (moved with its object) into
//! the next camera. Optional i.i.d. Gaussian noise is added to the depth input;
//! ground truth stays clean.

use std::f64::consts::TAU;
use std::path::Path;

use pcfuse_core::{CameraIntrinsics, CameraPose, DepthMap, FlowField, Grid, Vec3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::camera::{write_pose, PoseConvention};
use crate::error::{Error, Result};
use crate::flo::write_flo;
use crate::manifest::{DepthEncoding, FrameEntry, IntrinsicsSource, ManifestFile, SequenceData, MANIFEST_SCHEMA};
use crate::pfm::write_depth_pfm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneKind {
    Static,
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub scene: SceneKind,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    /// Standard deviation of the depth noise in meters.
    pub noise_sigma: f64,
    pub seed: u64,
    /// Sphere radius in meters (dynamic scene).
    pub sphere_radius: f64,
    /// Sphere displacement per frame in meters (dynamic scene).
    pub sphere_velocity: [f64; 3],
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            scene: SceneKind::Static,
            width: 64,
            height: 64,
            frames: 20,
            noise_sigma: 0.0,
            seed: 0,
            sphere_radius: 0.35,
            sphere_velocity: [0.08, 0.0, -0.02],
        }
    }
}

const PLANE: (f64, f64, f64) = (3.0, 0.15, 0.1);
#[derive(Debug, Clone, Copy)]
struct Sphere {
    start: Vec3,
    velocity: Vec3,
    radius: f64,
}

impl Sphere {
    fn from_config(cfg: &SyntheticConfig) -> Self {
        let [vx, vy, vz] = cfg.sphere_velocity;
        let velocity = Vec3::new(vx, vy, vz);
        // In front of the camera at the middle frame.
        let mid = 0.5 * cfg.frames.saturating_sub(1) as f64;
        let anchor = camera_pose_translation(mid) + Vec3::new(0.0, 0.05, 2.0);
        Sphere { start: anchor - velocity * mid, velocity, radius: cfg.sphere_radius }
    }

    fn center(&self, t: usize) -> Vec3 {
        self.start + self.velocity * t as f64
    }
}

/// The camera slides in its image plane, so static points keep their depth.
fn camera_pose(t: usize) -> CameraPose {
    CameraPose::from_translation(camera_pose_translation(t as f64), t)
}

fn camera_pose_translation(t: f64) -> Vec3 {
    Vec3::new(0.03 * t, 0.01 * (0.5 * t).sin(), 0.0)
}

fn plane_color(x: Vec3) -> [f64; 3] {
    [
        0.5 + 0.2 * (TAU * x.x / 0.6).sin(),
        0.5 + 0.2 * (TAU * x.y / 0.5).sin(),
        0.5 + 0.15 * (TAU * (x.x + x.y) / 0.8).sin(),
    ]
}

fn sphere_color(q: Vec3) -> [f64; 3] {
    [0.85 + 0.1 * (8.0 * q.y).sin(), 0.25 + 0.1 * (8.0 * q.x).sin(), 0.15 + 0.05 * (8.0 * q.z).sin()]
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Surface {
    Plane,
    Sphere,
}

struct Hit {
    depth: f64,
    point: Vec3,
    surface: Surface,
}

fn ray_plane(o: Vec3, r: Vec3) -> Option<f64> {
    let (z0, a, b) = PLANE;
    let den = r.z - a * r.x - b * r.y;
    let s = (z0 + a * o.x + b * o.y - o.z) / den;
    (den.abs() > 1e-12 && s > 0.0).then_some(s)
}

fn ray_sphere(o: Vec3, r: Vec3, c: Vec3, radius: f64) -> Option<f64> {
    let oc = o - c;
    let (qa, qb, qc) = (r.dot(r), 2.0 * r.dot(oc), oc.dot(oc) - radius * radius);
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return None;
    }
    let s = (-qb - disc.sqrt()) / (2.0 * qa);
    (s > 0.0).then_some(s)
}

fn cast(scene: SceneKind, sphere: &Sphere, t: usize, pose: &CameraPose, k: &CameraIntrinsics, u: usize, v: usize) -> Option<Hit> {
    let o = pose.translation();
    // Unit-depth ray, so the ray parameter is the camera-space depth.
    let r = pose.rotation().mul_vec(Vec3::new((u as f64 - k.cx) / k.fx, (v as f64 - k.cy) / k.fy, 1.0));
    let plane = ray_plane(o, r).map(|s| (s, Surface::Plane));
    let sphere = match scene {
        SceneKind::Static => None,
        SceneKind::Dynamic => ray_sphere(o, r, sphere.center(t), sphere.radius).map(|s| (s, Surface::Sphere)),
    };
    let (depth, surface) = match (plane, sphere) {
        (Some(p), Some(s)) => {
            if s.0 < p.0 {
                s
            } else {
                p
            }
        }
        (p, s) => p.or(s)?,
    };
    Some(Hit { depth, point: o + r * depth, surface })
}

/// A generated sequence; `data.depths` holds the (possibly noisy) input.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSequence {
    pub config: SyntheticConfig,
    pub data: SequenceData,
}

impl SyntheticSequence {
    pub fn ground_truth(&self) -> &[DepthMap] {
        self.data.ground_truth.as_deref().expect("synthetic sequences carry ground truth")
    }

    pub fn object_masks(&self) -> &[Grid<bool>] {
        self.data.object_masks.as_deref().expect("synthetic sequences carry object masks")
    }

    /// The same sequence with ground truth as input depth.
    pub fn noiseless(&self) -> SequenceData {
        self.data.with_depths(self.ground_truth().to_vec())
    }
}

/// Intrinsics with a ~53° horizontal field of view and a centered principal point.
pub fn synthetic_intrinsics(width: usize, height: usize) -> CameraIntrinsics {
    let f = width as f64;
    CameraIntrinsics::new(f, f, (width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0, width, height)
        .expect("positive focal length and centered principal point")
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticSequence> {
    if cfg.frames == 0 || cfg.width < 2 || cfg.height < 2 {
        return Err(Error::Manifest("synthetic scene needs frames and at least 2x2 pixels".into()));
    }
    if !(cfg.noise_sigma >= 0.0 && cfg.noise_sigma.is_finite()) {
        return Err(Error::Manifest("noise sigma must be finite and nonnegative".into()));
    }
    let k = synthetic_intrinsics(cfg.width, cfg.height);
    let (w, h) = (cfg.width, cfg.height);
    let poses: Vec<CameraPose> = (0..cfg.frames).map(camera_pose).collect();
    let sphere = Sphere::from_config(cfg);
    let mut colors = Vec::with_capacity(cfg.frames);
    let mut gts = Vec::with_capacity(cfg.frames);
    let mut objects = Vec::with_capacity(cfg.frames);
    let mut flows = Vec::with_capacity(cfg.frames.saturating_sub(1));
    for t in 0..cfg.frames {
        let hits: Vec<Option<Hit>> =
            (0..w * h).map(|i| cast(cfg.scene, &sphere, t, &poses[t], &k, i % w, i / w)).collect();
        gts.push(Grid::from_fn(w, h, |u, v| hits[v * w + u].as_ref().map_or(f64::INFINITY, |x| x.depth)));
        objects.push(Grid::from_fn(w, h, |u, v| hits[v * w + u].as_ref().is_some_and(|x| x.surface == Surface::Sphere)));
        colors.push(Grid::from_fn(w, h, |u, v| match &hits[v * w + u] {
            None => [0.0; 3],
            Some(x) if x.surface == Surface::Plane => plane_color(x.point),
            Some(x) => sphere_color(x.point - sphere.center(t)),
        }));
        if t + 1 < cfg.frames {
            let next = &poses[t + 1];
            let flow: FlowField = Grid::from_fn(w, h, |u, v| {
                let Some(x) = &hits[v * w + u] else { return [f64::INFINITY; 2] };
                let moved = match x.surface {
                    Surface::Plane => x.point,
                    Surface::Sphere => x.point + sphere.velocity,
                };
                match pcfuse_core::geometry::project_point(moved, next, &k) {
                    Some(p) => [p.u - u as f64, p.v - v as f64],
                    None => [f64::INFINITY; 2],
                }
            });
            flows.push(flow);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise_sigma).expect("sigma checked");
    let depths = gts
        .iter()
        .map(|g| {
            g.map(|&d| {
                if !d.is_finite() || cfg.noise_sigma == 0.0 {
                    d
                } else {
                    (d + noise.sample(&mut rng)).max(1e-3)
                }
            })
        })
        .collect();
    Ok(SyntheticSequence {
        config: *cfg,
        data: SequenceData {
            intrinsics: k,
            colors,
            depths,
            poses,
            ground_truth: Some(gts),
            flows: Some(flows),
            object_masks: Some(objects),
        },
    })
}

/// Writes the sequence as a dataset directory with a `manifest.json`.
pub fn write_dataset(seq: &SyntheticSequence, dir: &Path) -> Result<std::path::PathBuf> {
    let d = &seq.data;
    for sub in ["color", "depth", "gt", "pose", "flow", "object"] {
        std::fs::create_dir_all(dir.join(sub)).map_err(|e| Error::io(dir.join(sub), e))?;
    }
    let mut frames = Vec::with_capacity(d.len());
    for t in 0..d.len() {
        let name = format!("{t:06}");
        let entry = FrameEntry {
            index: Some(t),
            color: format!("color/{name}.png").into(),
            depth: format!("depth/{name}.pfm").into(),
            pose: format!("pose/{name}.txt").into(),
            ground_truth: Some(format!("gt/{name}.pfm").into()),
            flow: (t + 1 < d.len()).then(|| format!("flow/{name}.flo").into()),
            object_mask: Some(format!("object/{name}.pfm").into()),
        };
        crate::manifest::write_png_color(&dir.join(&entry.color), &d.colors[t])?;
        write_depth_pfm(&dir.join(&entry.depth), &d.depths[t])?;
        write_depth_pfm(&dir.join(entry.ground_truth.as_ref().expect("set above")), &seq.ground_truth()[t])?;
        write_pose(&dir.join(&entry.pose), &d.poses[t])?;
        if let Some(f) = &entry.flow {
            write_flo(&dir.join(f), &d.flows.as_ref().expect("synthetic flows")[t])?;
        }
        let obj = seq.object_masks()[t].map(|&b| if b { 1.0 } else { 0.0 });
        write_depth_pfm(&dir.join(entry.object_mask.as_ref().expect("set above")), &obj)?;
        frames.push(entry);
    }
    let k = d.intrinsics;
    let manifest = ManifestFile {
        schema: MANIFEST_SCHEMA,
        intrinsics: IntrinsicsSource::Inline { fx: k.fx, fy: k.fy, cx: k.cx, cy: k.cy, width: k.width, height: k.height },
        depth_encoding: DepthEncoding::Pfm,
        pose_convention: PoseConvention::CameraToWorld,
        frames,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    crate::error::write_file(&path, text.as_bytes())?;
    Ok(path)
}
