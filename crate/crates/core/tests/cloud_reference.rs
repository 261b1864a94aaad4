//! Point-cloud integration against a straightforward reference implementation.

use pcfuse_core::geometry::{project_point, unproject};
use pcfuse_core::pointcloud::{integrate_frame, CloudPoint, ObservationView, DEFAULT_EPSILON, FOOTPRINT_TOLERANCE};
use pcfuse_core::{CameraIntrinsics, CameraPose, DepthMap, GlobalPointCloud, Grid, Mat3, Vec3};
use proptest::prelude::*;

const W: usize = 8;
const H: usize = 8;

/// Plain row-major bilinear lookup; `None` outside the image or on a hole tap.
fn bilinear<const N: usize>(img: &[[f64; N]], u: f64, v: f64) -> Option<[f64; N]> {
    if !(u >= 0.0 && v >= 0.0 && u <= (W - 1) as f64 && v <= (H - 1) as f64) {
        return None;
    }
    let u0 = (u.floor() as usize).min(W - 2);
    let v0 = (v.floor() as usize).min(H - 2);
    let (tu, tv) = (u - u0 as f64, v - v0 as f64);
    let taps = [
        ((1.0 - tu) * (1.0 - tv), u0, v0),
        (tu * (1.0 - tv), u0 + 1, v0),
        ((1.0 - tu) * tv, u0, v0 + 1),
        (tu * tv, u0 + 1, v0 + 1),
    ];
    let mut acc = [0.0; N];
    for (wt, pu, pv) in taps {
        if wt == 0.0 {
            continue;
        }
        let px = img[pv * W + pu];
        if px.iter().any(|c| !c.is_finite()) {
            return None;
        }
        for i in 0..N {
            acc[i] += wt * px[i];
        }
    }
    Some(acc)
}

#[derive(Debug)]
struct Frame {
    depth: DepthMap,
    color: Vec<[f64; 3]>,
    mask: Vec<f64>,
    beta: Vec<f64>,
    gamma: Vec<f64>,
    pose: CameraPose,
    k: CameraIntrinsics,
}

/// Update, decay, insertion and pruning written out point by point.
fn reference(cloud: &[CloudPoint], next_id: &mut u64, f: &Frame, epsilon: f64) -> Vec<CloudPoint> {
    let pts = unproject(&f.depth, &f.k, &f.pose).unwrap();
    let targets: Vec<[f64; 3]> = pts.grid().iter().copied().collect();
    let one = |g: &[f64]| g.iter().map(|&x| [x]).collect::<Vec<[f64; 1]>>();
    let (mask, beta, gamma) = (one(&f.mask), one(&f.beta), one(&f.gamma));
    let tol = FOOTPRINT_TOLERANCE;

    let mut out = Vec::new();
    for p in cloud {
        let mut q = *p;
        let mut observed = false;
        if let Some(pr) = project_point(p.position, &f.pose, &f.k) {
            let inside = pr.u >= -tol && pr.v >= -tol && pr.u <= (W - 1) as f64 + tol && pr.v <= (H - 1) as f64 + tol;
            if inside {
                let (u, v) = (pr.u.clamp(0.0, (W - 1) as f64), pr.v.clamp(0.0, (H - 1) as f64));
                let samples = (
                    bilinear(&mask, u, v),
                    bilinear(&targets, u, v),
                    bilinear(&f.color, u, v),
                    bilinear(&beta, u, v),
                    bilinear(&gamma, u, v),
                );
                if let (Some([a]), Some(z), Some(c), Some([b]), Some([g])) = samples {
                    let total = b + g;
                    if a < 0.5 && total > 0.0 {
                        let x = p.position;
                        q.position = Vec3::new((x.x * b + z[0] * g) / total, (x.y * b + z[1] * g) / total, (x.z * b + z[2] * g) / total);
                        q.color = [0, 1, 2].map(|i| (p.color[i] * b + c[i] * g) / total);
                        q.confidence = total;
                        observed = true;
                    }
                }
            }
        }
        if !observed {
            q.confidence -= 1.0;
        }
        out.push(q);
    }
    for v in 0..H {
        for u in 0..W {
            let i = v * W + u;
            let x = targets[i];
            if f.mask[i] >= 0.5 && x.iter().all(|c| c.is_finite()) {
                out.push(CloudPoint { id: *next_id, position: Vec3::from_array(x), color: f.color[i], confidence: f.gamma[i] });
                *next_id += 1;
            }
        }
    }
    out.retain(|p| p.confidence >= epsilon);
    out
}

fn run_library(cloud: &mut GlobalPointCloud, f: &Frame, epsilon: f64) {
    let points = unproject(&f.depth, &f.k, &f.pose).unwrap();
    let color = Grid::from_vec(W, H, f.color.clone()).unwrap();
    let mask = Grid::from_vec(W, H, f.mask.clone()).unwrap();
    let beta = Grid::from_vec(W, H, f.beta.clone()).unwrap();
    let gamma = Grid::from_vec(W, H, f.gamma.clone()).unwrap();
    let obs = ObservationView {
        points: &points,
        color: &color,
        mask: &mask,
        beta: &beta,
        gamma: &gamma,
        pose: &f.pose,
        intrinsics: &f.k,
    };
    integrate_frame(cloud, &obs, &gamma, epsilon).unwrap();
}

fn k8() -> CameraIntrinsics {
    CameraIntrinsics::new(8.0, 8.0, 3.5, 3.5, W, H).unwrap()
}

prop_compose! {
    fn frame_strategy()(
        depth in prop::collection::vec(prop_oneof![6 => 1.5..3.0f64, 1 => Just(f64::INFINITY)], W * H),
        color in prop::collection::vec(prop::array::uniform3(0.0..1.0f64), W * H),
        mask in prop::collection::vec(prop_oneof![Just(0.0), Just(1.0), 0.0..1.0f64], W * H),
        beta in prop::collection::vec(prop_oneof![Just(0.0), 0.0..4.0f64], W * H),
        gamma in prop::collection::vec(prop_oneof![Just(0.0), 0.0..1.0f64], W * H),
        axis in prop::array::uniform3(-1.0..1.0f64),
        angle in -0.1..0.1f64,
        t in prop::array::uniform3(-0.2..0.2f64),
    ) -> Frame {
        let pose = CameraPose::from_parts(Mat3::from_axis_angle(Vec3::from_array(axis), angle), Vec3::from_array(t), 0).unwrap();
        Frame { depth: DepthMap::from_vec(W, H, depth).unwrap(), color, mask, beta, gamma, pose, k: k8() }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn integration_matches_reference_bit_for_bit(
        seed in prop::collection::vec((prop::array::uniform3(-1.0..1.0f64), prop::array::uniform3(0.0..1.0f64), 0.0..3.0f64), 0..=100),
        frames in prop::collection::vec(frame_strategy(), 1..4),
    ) {
        let mut cloud = GlobalPointCloud::new();
        for (p, c, rho) in seed {
            cloud.push(Vec3::new(p[0], p[1], 2.0 + 0.5 * p[2]), c, rho);
        }
        let mut expected: Vec<CloudPoint> = cloud.points().to_vec();
        let mut next_id = expected.len() as u64;
        for f in &frames {
            run_library(&mut cloud, f, DEFAULT_EPSILON);
            expected = reference(&expected, &mut next_id, f, DEFAULT_EPSILON);
            prop_assert_eq!(cloud.points().len(), expected.len());
            for (a, b) in cloud.points().iter().zip(&expected) {
                prop_assert_eq!(a.id, b.id);
                prop_assert_eq!(a.position.to_array().map(f64::to_bits), b.position.to_array().map(f64::to_bits));
                prop_assert_eq!(a.color.map(f64::to_bits), b.color.map(f64::to_bits));
                prop_assert_eq!(a.confidence.to_bits(), b.confidence.to_bits());
            }
        }
    }
}

#[test]
fn unobserved_point_is_pruned_after_three_decays() {
    let k = k8();
    let mut cloud = GlobalPointCloud::new();
    // Behind the camera, so never observed.
    cloud.push(Vec3::new(0.0, 0.0, -1.0), [0.5; 3], 2.5);
    let frame = Frame {
        depth: DepthMap::filled(W, H, 2.0),
        color: vec![[0.5; 3]; W * H],
        mask: vec![0.0; W * H],
        beta: vec![1.0; W * H],
        gamma: vec![1.0; W * H],
        pose: CameraPose::identity(0),
        k,
    };
    let mut sizes = Vec::new();
    for _ in 0..4 {
        run_library(&mut cloud, &frame, 3e-2);
        sizes.push((cloud.len(), cloud.points().first().map(|p| p.confidence)));
    }
    assert_eq!(sizes[0], (1, Some(1.5)));
    assert_eq!(sizes[1], (1, Some(0.5)));
    assert_eq!(sizes[2], (0, None));
    assert_eq!(sizes[3], (0, None));
}

#[test]
fn update_sets_confidence_to_weight_sum_and_moves_along_segment() {
    let k = k8();
    let pose = CameraPose::identity(0);
    let mut cloud = GlobalPointCloud::new();
    let old = Vec3::new(0.0, 0.0, 2.5);
    cloud.push(old, [0.0; 3], 7.0);
    let frame = Frame {
        depth: DepthMap::filled(W, H, 2.0),
        color: vec![[1.0; 3]; W * H],
        mask: vec![0.0; W * H],
        beta: vec![3.0; W * H],
        gamma: vec![1.0; W * H],
        pose,
        k,
    };
    run_library(&mut cloud, &frame, 3e-2);
    let p = cloud.points()[0];
    assert_eq!(p.confidence, 4.0);
    // The point projects to the principal point, where the observation is (0, 0, 2).
    let target = Vec3::new(0.0, 0.0, 2.0);
    let seg = target - old;
    let rel = p.position - old;
    assert!(rel.cross(seg).norm() < 1e-12);
    assert!((rel.norm() / seg.norm() - 0.25).abs() < 1e-12);
}
