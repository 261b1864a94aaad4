//! Spatial fusion: uncertainty to confidence weights, and the weighted
//! combination of the temporally fused depth with the observation.

use crate::error::FusionError;
use crate::grid::{BlendMask, ColorImage, ConfidenceMap, DepthMap, Grid, Pixel, UncertaintyMap};

/// Upper clamp on log-space uncertainty so that `exp(-s)` stays positive.
pub const S_MAX: f64 = 20.0;

/// Below this total weight [`spatial_fuse`] falls back to the observation.
pub const MIN_TOTAL_WEIGHT: f64 = 1e-12;

/// Which depth an uncertainty map describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum UncertaintyRole {
    /// The raw observation `d_t`; gives `γ`.
    Observation,
    /// The temporally fused depth `d_f`; enters `β`.
    Fused,
}

#[derive(Debug, Clone, Copy)]
pub struct UncertaintyContext<'a> {
    pub frame: usize,
    pub role: UncertaintyRole,
    pub depth: &'a DepthMap,
    pub color: &'a ColorImage,
}

/// Produces a log-space uncertainty map `s` for a depth/color pair.
pub trait UncertaintyProvider {
    fn uncertainty(&mut self, ctx: &UncertaintyContext<'_>) -> Result<UncertaintyMap, FusionError>;

    fn name(&self) -> &'static str;
}

/// High uncertainty at depth edges that have no matching color edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientUncertainty {
    pub scale: f64,
}

impl Default for GradientUncertainty {
    fn default() -> Self {
        GradientUncertainty { scale: 10.0 }
    }
}

impl UncertaintyProvider for GradientUncertainty {
    fn uncertainty(&mut self, ctx: &UncertaintyContext<'_>) -> Result<UncertaintyMap, FusionError> {
        gradient_uncertainty(ctx.depth, ctx.color, self.scale)
    }

    fn name(&self) -> &'static str {
        "gradient"
    }
}

/// Zero uncertainty everywhere, i.e. unit confidence.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ZeroUncertainty;

impl UncertaintyProvider for ZeroUncertainty {
    fn uncertainty(&mut self, ctx: &UncertaintyContext<'_>) -> Result<UncertaintyMap, FusionError> {
        let (w, h) = ctx.depth.dims();
        Ok(Grid::filled(w, h, 0.0))
    }

    fn name(&self) -> &'static str {
        "zero"
    }
}

#[inline]
fn clamp_uncertainty(s: f64) -> f64 {
    if s.is_nan() {
        S_MAX
    } else {
        s.clamp(-S_MAX, S_MAX)
    }
}

/// `γ = exp(−s)`, with `s` clamped to `[−S_MAX, S_MAX]`.
pub fn gamma_weight(uncertainty: &UncertaintyMap) -> ConfidenceMap {
    uncertainty.map(|&s| libm::exp(-clamp_uncertainty(s)))
}

/// Mean filter over a `size x size` window with edge replication.
///
/// Non-finite inputs are treated as 0.
pub fn box_filter(grid: &Grid<f64>, size: usize) -> Grid<f64> {
    let (w, h) = grid.dims();
    if w == 0 || h == 0 || size <= 1 {
        return grid.map(|&x| if x.is_finite() { x } else { 0.0 });
    }
    let r = (size / 2) as isize;
    let n = (2 * r + 1) as f64;
    let clean = |x: f64| if x.is_finite() { x } else { 0.0 };
    let horizontal = Grid::from_fn(w, h, |u, v| {
        (-r..=r).map(|du| clean(*grid.get_clamped(u as isize + du, v as isize))).sum::<f64>() / n
    });
    Grid::from_fn(w, h, |u, v| {
        (-r..=r).map(|dv| *horizontal.get_clamped(u as isize, v as isize + dv)).sum::<f64>() / n
    })
}

/// How the blend mask gates the prior confidence in `β`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum BetaGate {
    /// Gate by `1 − α`: the prior keeps its weight where the mask says static.
    #[default]
    Static,
    /// Gate by `α` as-is.
    Mask,
}

impl BetaGate {
    pub fn apply(self, mask: &BlendMask) -> Grid<f64> {
        match self {
            BetaGate::Static => mask.map(|&a| 1.0 - a),
            BetaGate::Mask => mask.clone(),
        }
    }
}

/// `β = gate · box(w_p) · exp(−s_fused)`.
///
/// `gate` is the mask factor chosen by [`BetaGate`]; prior-confidence holes
/// count as zero confidence before filtering.
pub fn beta_weight(
    gate: &Grid<f64>,
    prior_confidence: &ConfidenceMap,
    fused_uncertainty: &UncertaintyMap,
    box_size: usize,
) -> Result<ConfidenceMap, FusionError> {
    if box_size == 0 || box_size.is_multiple_of(2) {
        return Err(FusionError::InvalidParameter("box filter size must be odd"));
    }
    gate.check_shape(prior_confidence, "beta prior confidence")?;
    gate.check_shape(fused_uncertainty, "beta fused uncertainty")?;
    let filtered = box_filter(prior_confidence, box_size);
    let conf = gamma_weight(fused_uncertainty);
    Ok(Grid::from_fn(gate.width(), gate.height(), |u, v| {
        (gate.get(u, v) * filtered.get(u, v) * conf.get(u, v)).max(0.0)
    }))
}

/// Output of [`spatial_fuse`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialFusion {
    pub depth: DepthMap,
    /// Pixels whose weights summed below [`MIN_TOTAL_WEIGHT`] and took `d_t`.
    pub fallback: Grid<bool>,
}

impl SpatialFusion {
    pub fn fallback_count(&self) -> usize {
        self.fallback.iter().filter(|&&f| f).count()
    }
}

/// `d_o = (β·d_f + γ·d_t) / (β + γ)`.
///
/// Where only one of the depths is valid that one is returned.
pub fn spatial_fuse(
    fused: &DepthMap,
    observed: &DepthMap,
    beta: &ConfidenceMap,
    gamma: &ConfidenceMap,
) -> Result<SpatialFusion, FusionError> {
    fused.check_shape(observed, "spatial_fuse observation")?;
    fused.check_shape(beta, "spatial_fuse beta")?;
    fused.check_shape(gamma, "spatial_fuse gamma")?;
    let (w, h) = fused.dims();
    let mut fallback = Grid::filled(w, h, false);
    let depth = Grid::from_fn(w, h, |u, v| {
        let (df, dt) = (*fused.get(u, v), *observed.get(u, v));
        let (b, g) = (*beta.get(u, v), *gamma.get(u, v));
        if dt.is_hole() {
            return df;
        }
        if df.is_hole() {
            return dt;
        }
        let total = b + g;
        if !(total >= MIN_TOTAL_WEIGHT) {
            fallback.set(u, v, true);
            return dt;
        }
        (b * df + g * dt) / total
    });
    Ok(SpatialFusion { depth, fallback })
}

/// Heuristic log-space uncertainty from image gradients.
///
/// With central differences (edge replicated; hole neighbors replaced by the
/// center value):
///
/// * `n_d = min(1, |∇d| / d)`, the relative depth gradient,
/// * `n_c = min(1, |∇c|)`, the RGB gradient magnitude over all channels,
///
/// `s = clamp(scale · n_d · (1 − n_c), 0, S_MAX)`. Hole pixels get `s = 0`.
pub fn gradient_uncertainty(depth: &DepthMap, color: &ColorImage, scale: f64) -> Result<UncertaintyMap, FusionError> {
    depth.check_shape(color, "gradient_uncertainty color")?;
    Ok(Grid::from_fn(depth.width(), depth.height(), |u, v| {
        let d = *depth.get(u, v);
        if !(d.is_finite() && d > 0.0) {
            return 0.0;
        }
        let (ui, vi) = (u as isize, v as isize);
        let at = |du: isize, dv: isize| {
            let x = *depth.get_clamped(ui + du, vi + dv);
            if x.is_finite() {
                x
            } else {
                d
            }
        };
        let gx = 0.5 * (at(1, 0) - at(-1, 0));
        let gy = 0.5 * (at(0, 1) - at(0, -1));
        let nd = (libm::sqrt(gx * gx + gy * gy) / d).min(1.0);

        let c = *color.get(u, v);
        let cat = |du: isize, dv: isize| {
            let x = *color.get_clamped(ui + du, vi + dv);
            if x.is_valid() {
                x
            } else {
                c
            }
        };
        let (cr, cl, cd, cu) = (cat(1, 0), cat(-1, 0), cat(0, 1), cat(0, -1));
        let mut sq = 0.0;
        for i in 0..3 {
            let cx = 0.5 * (cr[i] - cl[i]);
            let cy = 0.5 * (cd[i] - cu[i]);
            sq += cx * cx + cy * cy;
        }
        let nc = libm::sqrt(sq).min(1.0);
        let s = scale * nd * (1.0 - nc);
        if s.is_nan() {
            S_MAX
        } else {
            s.clamp(0.0, S_MAX)
        }
    }))
}
