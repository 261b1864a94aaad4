//! Structural similarity (SSIM) for single-channel grids.
//!
//! Standard formulation: an 11x11 Gaussian window with `σ = 1.5`, constants
//! `C1 = (0.01 L)²` and `C2 = (0.03 L)²`, averaged over all window positions
//! that fit inside the image. `L` is the dynamic range of the pair (largest
//! minus smallest value over both images); a pair with zero range uses `L = 1`.

use alloc::vec::Vec;

use crate::error::FusionError;
use crate::grid::Grid;

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
pub const K1: f64 = 0.01;
pub const K2: f64 = 0.03;

/// Normalized 1D Gaussian taps; the 2D window is their outer product.
pub fn gaussian_taps() -> [f64; WINDOW] {
    let c = (WINDOW / 2) as f64;
    let mut taps = [0.0; WINDOW];
    for (i, t) in taps.iter_mut().enumerate() {
        let x = i as f64 - c;
        *t = libm::exp(-(x * x) / (2.0 * SIGMA * SIGMA));
    }
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// 'valid' separable filtering with the Gaussian window.
fn filter_valid(data: &[f64], w: usize, h: usize, taps: &[f64; WINDOW]) -> (Vec<f64>, usize, usize) {
    let ow = w - WINDOW + 1;
    let oh = h - WINDOW + 1;
    let mut rows = Vec::with_capacity(ow * h);
    for v in 0..h {
        let row = &data[v * w..(v + 1) * w];
        for u in 0..ow {
            rows.push(taps.iter().zip(&row[u..u + WINDOW]).map(|(t, x)| t * x).sum::<f64>());
        }
    }
    let mut out = Vec::with_capacity(ow * oh);
    for v in 0..oh {
        for u in 0..ow {
            out.push((0..WINDOW).map(|k| taps[k] * rows[(v + k) * ow + u]).sum::<f64>());
        }
    }
    (out, ow, oh)
}

/// Dynamic range used for the SSIM constants.
pub fn dynamic_range(a: &Grid<f64>, b: &Grid<f64>) -> f64 {
    let (lo, hi) = a
        .iter()
        .chain(b.iter())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let range = hi - lo;
    if range > 0.0 && range.is_finite() {
        range
    } else {
        1.0
    }
}

/// Mean SSIM of two equally sized, finite, single-channel grids.
pub fn ssim(a: &Grid<f64>, b: &Grid<f64>) -> Result<f64, FusionError> {
    a.check_shape(b, "ssim")?;
    let (w, h) = a.dims();
    if w < WINDOW || h < WINDOW {
        return Err(FusionError::ImageTooSmall { min: WINDOW, width: w, height: h });
    }
    if a.iter().chain(b.iter()).any(|x| !x.is_finite()) {
        return Err(FusionError::InvalidParameter("ssim inputs must be finite"));
    }
    let l = dynamic_range(a, b);
    let c1 = (K1 * l) * (K1 * l);
    let c2 = (K2 * l) * (K2 * l);
    let taps = gaussian_taps();
    let (x, y) = (a.as_slice(), b.as_slice());
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(p, q)| p * q).collect();
    let (mx, ow, oh) = filter_valid(x, w, h, &taps);
    let (my, _, _) = filter_valid(y, w, h, &taps);
    let (sxx, _, _) = filter_valid(&xx, w, h, &taps);
    let (syy, _, _) = filter_valid(&yy, w, h, &taps);
    let (sxy, _, _) = filter_valid(&xy, w, h, &taps);
    let mut total = 0.0;
    for i in 0..ow * oh {
        let (m1, m2) = (mx[i], my[i]);
        let var1 = sxx[i] - m1 * m1;
        let var2 = syy[i] - m2 * m2;
        let cov = sxy[i] - m1 * m2;
        total += ((2.0 * m1 * m2 + c1) * (2.0 * cov + c2)) / ((m1 * m1 + m2 * m2 + c1) * (var1 + var2 + c2));
    }
    Ok(total / (ow * oh) as f64)
}
