//! Per-frame accuracy metrics and least-squares scale/shift alignment.

use crate::error::FusionError;
use crate::grid::{DepthMap, Grid};

/// Ratio thresholds `1.25^i` for the bad-pixel fractions.
pub const DELTA_THRESHOLDS: [f64; 3] = [1.25, 1.25 * 1.25, 1.25 * 1.25 * 1.25];

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpatialMetrics {
    pub rae: f64,
    pub rms: f64,
    /// Mean absolute error, the per-frame input of SD(L1).
    pub l1: f64,
    /// Fraction of pixels with `max(d/g, g/d) >= 1.25^i`.
    pub delta_bad: [f64; 3],
    pub pixels: usize,
}

impl SpatialMetrics {
    /// Classical accuracy form `1 - delta_bad`.
    pub fn delta_accuracy(&self) -> [f64; 3] {
        self.delta_bad.map(|b| 1.0 - b)
    }
}

/// Whether a ground-truth pixel takes part in an evaluation.
#[inline]
pub(crate) fn gt_usable(g: f64, depth_cap: Option<f64>) -> bool {
    g.is_finite() && g > 0.0 && depth_cap.is_none_or(|cap| g <= cap)
}

/// RAE, RMS, L1 and bad-pixel fractions of `d` against `g`.
///
/// Pixels are used where both maps are finite, `g > 0`, and `g` does not
/// exceed `depth_cap`. A nonpositive prediction counts as a bad pixel at
/// every threshold.
pub fn spatial_metrics(d: &DepthMap, g: &DepthMap, depth_cap: Option<f64>) -> Result<SpatialMetrics, FusionError> {
    d.check_shape(g, "spatial_metrics")?;
    let (mut n, mut rae, mut sq, mut l1) = (0usize, 0.0, 0.0, 0.0);
    let mut bad = [0usize; 3];
    for (&p, &q) in d.iter().zip(g.iter()) {
        if !p.is_finite() || !gt_usable(q, depth_cap) {
            continue;
        }
        n += 1;
        let e = (p - q).abs();
        rae += e / q;
        sq += e * e;
        l1 += e;
        let ratio = if p > 0.0 { (p / q).max(q / p) } else { f64::INFINITY };
        for (b, t) in bad.iter_mut().zip(DELTA_THRESHOLDS) {
            if ratio >= t {
                *b += 1;
            }
        }
    }
    if n == 0 {
        return Err(FusionError::NoValidPixels("spatial_metrics"));
    }
    let nf = n as f64;
    Ok(SpatialMetrics {
        rae: rae / nf,
        rms: libm::sqrt(sq / nf),
        l1: l1 / nf,
        delta_bad: bad.map(|b| b as f64 / nf),
        pixels: n,
    })
}

/// Population standard deviation of per-frame L1 errors.
pub fn sd_l1(depths: &[DepthMap], gts: &[DepthMap], depth_cap: Option<f64>) -> Result<f64, FusionError> {
    if depths.len() < 2 {
        return Err(FusionError::TooFewFrames { needed: 2, found: depths.len() });
    }
    if gts.len() != depths.len() {
        return Err(FusionError::MissingGroundTruth { frame: gts.len().min(depths.len()) });
    }
    let mut errors = alloc::vec::Vec::with_capacity(depths.len());
    for (d, g) in depths.iter().zip(gts) {
        errors.push(spatial_metrics(d, g, depth_cap)?.l1);
    }
    Ok(population_sd(&errors))
}

pub(crate) fn population_sd(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    libm::sqrt(xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub scale: f64,
    pub shift: f64,
    /// `scale * d + shift`; holes stay holes.
    pub aligned: DepthMap,
}

/// Least-squares `(s, b)` minimizing `Σ (s·d + b − g)²` over pixels where
/// both maps are finite.
pub fn align_scale_shift(d: &DepthMap, g: &DepthMap) -> Result<Alignment, FusionError> {
    d.check_shape(g, "align_scale_shift")?;
    let pairs = || d.iter().zip(g.iter()).filter(|(p, q)| p.is_finite() && q.is_finite());
    let n = pairs().count();
    if n < 2 {
        return Err(FusionError::DegenerateAlignment);
    }
    let nf = n as f64;
    let (sd, sg) = pairs().fold((0.0, 0.0), |(a, b), (p, q)| (a + p, b + q));
    let (md, mg) = (sd / nf, sg / nf);
    let (sdd, sdg) = pairs().fold((0.0, 0.0), |(a, b), (p, q)| {
        let x = p - md;
        (a + x * x, b + x * (q - mg))
    });
    if !(sdd > 1e-24 * nf * (1.0 + md * md)) {
        return Err(FusionError::DegenerateAlignment);
    }
    let scale = sdg / sdd;
    let shift = mg - scale * md;
    let aligned: Grid<f64> = d.map(|&p| if p.is_finite() { scale * p + shift } else { f64::INFINITY });
    Ok(Alignment { scale, shift, aligned })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn g() -> DepthMap {
        Grid::from_fn(6, 5, |u, v| 1.0 + 0.3 * u as f64 + 0.7 * v as f64)
    }

    #[test]
    fn perfect_prediction() {
        let m = spatial_metrics(&g(), &g(), None).unwrap();
        assert_eq!((m.rae, m.rms, m.l1, m.delta_bad), (0.0, 0.0, 0.0, [0.0; 3]));
        assert_eq!(m.delta_accuracy(), [1.0; 3]);
    }

    #[test]
    fn uniform_twenty_percent_overestimate() {
        let d = g().map(|x| 1.2 * x);
        let m = spatial_metrics(&d, &g(), None).unwrap();
        assert!((m.rae - 0.2).abs() < 1e-12);
        assert_eq!(m.delta_bad, [0.0; 3]);
    }

    #[test]
    fn half_doubled_gives_half_bad() {
        let gt = Grid::filled(4, 2, 2.0);
        let d = Grid::from_fn(4, 2, |_, v| if v == 0 { 4.0 } else { 2.0 });
        let m = spatial_metrics(&d, &gt, None).unwrap();
        assert_eq!(m.delta_bad, [0.5, 0.5, 0.5]);
        let d3 = Grid::from_fn(4, 2, |_, v| if v == 0 { 2.0 * 1.25 * 1.25 } else { 2.0 });
        assert_eq!(spatial_metrics(&d3, &gt, None).unwrap().delta_bad, [0.5, 0.5, 0.0]);
    }

    #[test]
    fn depth_cap_excludes_far_pixels() {
        let gt = Grid::from_vec(2, 1, vec![10.0, 40.0]).unwrap();
        let d = Grid::from_vec(2, 1, vec![10.0, 80.0]).unwrap();
        assert_eq!(spatial_metrics(&d, &gt, Some(30.0)).unwrap().pixels, 1);
        assert_eq!(spatial_metrics(&d, &gt, Some(30.0)).unwrap().rae, 0.0);
        let far = Grid::filled(2, 1, 50.0);
        assert!(matches!(spatial_metrics(&far, &far, Some(30.0)), Err(FusionError::NoValidPixels(_))));
    }

    #[test]
    fn sd_of_two_frames() {
        let gt = Grid::filled(3, 3, 5.0);
        let d = [gt.map(|x| x + 1.0), gt.map(|x| x - 3.0)];
        let gts = [gt.clone(), gt.clone()];
        assert!((sd_l1(&d, &gts, None).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(sd_l1(&gts, &gts, None).unwrap(), 0.0);
        assert_eq!(sd_l1(&[d[0].clone(), d[0].clone()], &gts, None).unwrap(), 0.0);
        assert!(sd_l1(&d[..1], &gts[..1], None).is_err());
    }

    #[test]
    fn recovers_known_affine_map() {
        let (s0, b0) = (2.5, -0.75);
        let d = g().map(|x| (x - b0) / s0);
        let a = align_scale_shift(&d, &g()).unwrap();
        assert!((a.scale - s0).abs() < 1e-12 && (a.shift - b0).abs() < 1e-12);
        for (p, q) in a.aligned.iter().zip(g().iter()) {
            assert!((p - q).abs() < 1e-12);
        }
        let id = align_scale_shift(&g(), &g()).unwrap();
        assert!((id.scale - 1.0).abs() < 1e-14 && id.shift.abs() < 1e-13);
    }

    #[test]
    fn three_pixel_normal_equations() {
        // d = (0, 1, 2), g = (1, 2, 4): s = 1.5, b = 5/6
        let d = Grid::from_vec(3, 1, vec![0.0, 1.0, 2.0]).unwrap();
        let gt = Grid::from_vec(3, 1, vec![1.0, 2.0, 4.0]).unwrap();
        let a = align_scale_shift(&d, &gt).unwrap();
        assert!((a.scale - 1.5).abs() < 1e-14);
        assert!((a.shift - 5.0 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn constant_prediction_is_degenerate() {
        let d = Grid::filled(3, 3, 1.0);
        assert!(matches!(align_scale_shift(&d, &g()), Err(FusionError::ShapeMismatch { .. })));
        assert_eq!(align_scale_shift(&d, &d).err(), Some(FusionError::DegenerateAlignment));
    }
}
