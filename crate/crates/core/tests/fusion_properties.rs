//! Geometric, rendering and fusion invariants.

use pcfuse_core::geometry::{bilinear_sample, project_point, rigid_warp, unproject_pixel};
use pcfuse_core::render::{fill_holes, remove_background};
use pcfuse_core::spatial::spatial_fuse;
use pcfuse_core::temporal::{oracle_mask, temporal_blend};
use pcfuse_core::{CameraIntrinsics, CameraPose, ColorImage, DepthMap, Grid, Mat3, PriorProjection, Vec3};
use proptest::prelude::*;

const W: usize = 8;
const H: usize = 8;

fn k8() -> CameraIntrinsics {
    CameraIntrinsics::new(9.0, 8.0, 3.5, 3.25, W, H).unwrap()
}

fn pose_strategy() -> impl Strategy<Value = CameraPose> {
    (prop::array::uniform3(-1.0..1.0f64), -0.2..0.2f64, prop::array::uniform3(-0.2..0.2f64)).prop_map(|(axis, angle, t)| {
        CameraPose::from_parts(Mat3::from_axis_angle(Vec3::from_array(axis), angle), Vec3::from_array(t), 0).unwrap()
    })
}

fn grid(values: impl Strategy<Value = f64>) -> impl Strategy<Value = Grid<f64>> {
    prop::collection::vec(values, W * H).prop_map(|v| Grid::from_vec(W, H, v).unwrap())
}

fn depth_with_holes() -> impl Strategy<Value = DepthMap> {
    grid(prop_oneof![5 => 0.5..10.0f64, 1 => Just(f64::INFINITY)])
}

fn prior_strategy() -> impl Strategy<Value = PriorProjection> {
    depth_with_holes().prop_map(|depth| {
        let color = depth.map(|&d| if d.is_finite() { [d / 10.0, 0.5, 1.0 - d / 10.0] } else { [f64::INFINITY; 3] });
        let confidence = depth.map(|&d| if d.is_finite() { 1.0 + d } else { f64::INFINITY });
        PriorProjection { depth, color, confidence }
    })
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #[test]
    fn projection_inverts_unprojection(u in 0.0..7.0f64, v in 0.0..7.0f64, d in 0.1..100.0f64, pose in pose_strategy()) {
        let k = k8();
        let x = unproject_pixel(u, v, d, &k, &pose);
        let p = project_point(x, &pose, &k).unwrap();
        prop_assert!((p.u - u).abs() < 1e-5 && (p.v - v).abs() < 1e-5);
        prop_assert!(close(p.z, d, 1e-12));
    }

    #[test]
    fn bilinear_is_linear_in_the_image(a in grid(-5.0..5.0f64), b in grid(-5.0..5.0f64), s in -3.0..3.0f64, t in -3.0..3.0f64,
                                      u in 0.0..7.0f64, v in 0.0..7.0f64) {
        let combo = a.zip_map(&b, |x, y| s * x + t * y);
        let lhs = bilinear_sample(&combo, u, v).unwrap();
        let rhs = s * bilinear_sample(&a, u, v).unwrap() + t * bilinear_sample(&b, u, v).unwrap();
        prop_assert!(close(lhs, rhs, 1e-12), "{lhs} vs {rhs}");
    }

    #[test]
    fn fill_holes_keeps_valid_pixels(prior in prior_strategy(), iters in 0usize..4) {
        let out = fill_holes(&prior, iters);
        for (u, v, &d) in prior.depth.enumerate() {
            if d.is_finite() {
                prop_assert_eq!(*out.depth.get(u, v), d);
                prop_assert_eq!(*out.color.get(u, v), *prior.color.get(u, v));
                prop_assert_eq!(*out.confidence.get(u, v), *prior.confidence.get(u, v));
            }
        }
        prop_assert!(out.depth.valid_count() >= prior.depth.valid_count());
    }

    #[test]
    fn remove_background_never_creates_valid_pixels(prior in prior_strategy(), ratio in 1.0..3.0f64) {
        let out = remove_background(&prior, ratio);
        for (u, v, &d) in out.depth.enumerate() {
            if d.is_finite() {
                prop_assert_eq!(d, *prior.depth.get(u, v));
            }
        }
        prop_assert!(out.is_consistent());
    }

    #[test]
    fn temporal_blend_is_convex(dt in depth_with_holes(), dp in depth_with_holes(), mask in grid(0.0..=1.0f64)) {
        let df = temporal_blend(&dt, &dp, &mask).unwrap();
        for i in 0..W * H {
            let (a, b, f) = (dt.as_slice()[i], dp.as_slice()[i], df.as_slice()[i]);
            if a.is_finite() && b.is_finite() {
                let eps = 1e-12 * a.max(b);
                prop_assert!(a.min(b) - eps <= f && f <= a.max(b) + eps);
            }
        }
    }

    #[test]
    fn temporal_blend_of_equal_inputs_is_identity(dt in depth_with_holes(), mask in grid(0.0..=1.0f64)) {
        prop_assert_eq!(temporal_blend(&dt, &dt, &mask).unwrap(), dt);
    }

    #[test]
    fn oracle_blend_is_pointwise_best(dt in grid(0.5..10.0f64), dp in grid(0.5..10.0f64), g in grid(0.5..10.0f64)) {
        let mask = oracle_mask(&dt, &dp, &g).unwrap();
        let df = temporal_blend(&dt, &dp, &mask).unwrap();
        for i in 0..W * H {
            let e = |x: &DepthMap| (x.as_slice()[i] - g.as_slice()[i]).abs();
            prop_assert!(e(&df) <= e(&dt) && e(&df) <= e(&dp));
        }
    }

    #[test]
    fn spatial_fusion_is_convex(df in grid(0.5..10.0f64), dt in grid(0.5..10.0f64), beta in grid(0.0..5.0f64), gamma in grid(1e-3..1.0f64)) {
        let out = spatial_fuse(&df, &dt, &beta, &gamma).unwrap();
        for i in 0..W * H {
            let (a, b, o) = (df.as_slice()[i], dt.as_slice()[i], out.depth.as_slice()[i]);
            let eps = 1e-12 * a.max(b);
            prop_assert!(a.min(b) - eps <= o && o <= a.max(b) + eps);
        }
    }

    #[test]
    fn spatial_fusion_ignores_common_weight_scale(df in grid(0.5..10.0f64), dt in grid(0.5..10.0f64), beta in grid(0.0..5.0f64),
                                                  gamma in grid(1e-3..1.0f64), exp in -20i32..20, lambda in 1e-3..1e3f64) {
        let base = spatial_fuse(&df, &dt, &beta, &gamma).unwrap().depth;
        // Power-of-two scales are exact in binary floating point.
        let p = 2f64.powi(exp);
        let scaled = spatial_fuse(&df, &dt, &beta.map(|b| b * p), &gamma.map(|g| g * p)).unwrap().depth;
        prop_assert_eq!(&scaled, &base);
        // Other scales agree up to rounding.
        let scaled = spatial_fuse(&df, &dt, &beta.map(|b| b * lambda), &gamma.map(|g| g * lambda)).unwrap().depth;
        for (a, b) in scaled.iter().zip(base.iter()) {
            prop_assert!(close(*a, *b, 1e-14));
        }
    }

    #[test]
    fn warps_compose_on_a_plane(a in pose_strategy(), b in pose_strategy(), c in pose_strategy()) {
        let k = k8();
        let plane = DepthMap::filled(W, H, 4.0);
        let color = ColorImage::filled(W, H, [0.5; 3]);
        let ab = rigid_warp(&color, &plane, &a, &b, &k).unwrap();
        let abc = rigid_warp(&ab.color, &ab.depth, &b, &c, &k).unwrap();
        let ac = rigid_warp(&color, &plane, &a, &c, &k).unwrap();
        // One pixel of quantization in the intermediate view.
        let tol = max_step(&ab.depth) + 1e-9;
        for (u, v, &d) in abc.depth.enumerate() {
            if !d.is_finite() {
                continue;
            }
            // Interior of the directly warped region: the full 3x3 neighborhood is valid.
            let neighborhood: Option<Vec<f64>> = (-1..=1isize)
                .flat_map(|dv| (-1..=1isize).map(move |du| (du, dv)))
                .map(|(du, dv)| ac.depth.get_checked(u as isize + du, v as isize + dv).copied().filter(|x| x.is_finite()))
                .collect();
            let Some(n) = neighborhood else { continue };
            let lo = n.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = n.iter().copied().fold(0.0, f64::max);
            prop_assert!(lo - tol <= d && d <= hi + tol, "{d} outside [{lo}, {hi}] +- {tol}");
        }
    }
}

/// Largest depth difference between 4-adjacent valid pixels.
fn max_step(d: &DepthMap) -> f64 {
    let mut step: f64 = 0.0;
    for (u, v, &x) in d.enumerate() {
        for (nu, nv) in [(u + 1, v), (u, v + 1)] {
            if let Some(&y) = d.get_checked(nu as isize, nv as isize) {
                if x.is_finite() && y.is_finite() {
                    step = step.max((x - y).abs());
                }
            }
        }
    }
    step
}

#[test]
fn spatial_fusion_differs_from_alpha_blending_the_prior() {
    // Two pixels with equal prior confidence but different fused-depth uncertainty.
    let dt = DepthMap::filled(2, 1, 2.0);
    let df = DepthMap::filled(2, 1, 3.0);
    let gamma = Grid::filled(2, 1, 1.0);
    let wp = 2.0;
    let s_fused = [0.0f64, 3.0];
    let beta = Grid::from_vec(2, 1, s_fused.iter().map(|&s| wp * (-s).exp()).collect()).unwrap();
    let out = spatial_fuse(&df, &dt, &beta, &gamma).unwrap().depth;
    // The α-blend with the prior's own weight gives the same value at both pixels.
    let a = 1.0 / (1.0 + wp);
    let naive = a * 2.0 + (1.0 - a) * 3.0;
    assert_eq!(*out.get(0, 0), naive);
    assert!((*out.get(1, 0) - naive).abs() > 0.1);
}
