//! Minimal block-matching flow used by the TCM metric.

use crate::grid::{FlowField, Grid};

/// Maps an image pair to a dense flow field from `a` to `b`.
pub trait FlowEstimator {
    fn estimate(&self, a: &Grid<f64>, b: &Grid<f64>) -> FlowField;
    /// Label written into reports next to flow-derived metrics.
    fn name(&self) -> &'static str;
}

/// Integer SAD block matching over a two-level pyramid.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BlockFlow {
    /// Patch half-size; patches are `(2r+1)²`.
    pub radius: usize,
    /// Search half-range per pyramid level.
    pub search: usize,
}

impl Default for BlockFlow {
    fn default() -> Self {
        BlockFlow { radius: 2, search: 3 }
    }
}

impl FlowEstimator for BlockFlow {
    fn estimate(&self, a: &Grid<f64>, b: &Grid<f64>) -> FlowField {
        block_flow(a, b, self.radius, self.search)
    }

    fn name(&self) -> &'static str {
        "block_flow"
    }
}

fn sanitize(g: &Grid<f64>) -> Grid<f64> {
    g.map(|&x| if x.is_finite() { x } else { 0.0 })
}

fn downsample(g: &Grid<f64>) -> Grid<f64> {
    let (w, h) = (g.width() / 2, g.height() / 2);
    Grid::from_fn(w, h, |u, v| {
        let (x, y) = (2 * u, 2 * v);
        0.25 * (g.get(x, y) + g.get(x + 1, y) + g.get(x, y + 1) + g.get(x + 1, y + 1))
    })
}

fn sad(a: &Grid<f64>, b: &Grid<f64>, u: isize, v: isize, du: isize, dv: isize, r: isize) -> f64 {
    let mut s = 0.0;
    for j in -r..=r {
        for i in -r..=r {
            s += (a.get_clamped(u + i, v + j) - b.get_clamped(u + i + du, v + j + dv)).abs();
        }
    }
    s
}

/// Best displacement in a window around `center`. Ties go to the smaller
/// total displacement, then to the first candidate in scan order.
fn search_level(
    a: &Grid<f64>,
    b: &Grid<f64>,
    u: isize,
    v: isize,
    center: (isize, isize),
    radius: isize,
    search: isize,
) -> (isize, isize) {
    let mut best = (f64::INFINITY, isize::MAX, (0, 0));
    for dv in center.1 - search..=center.1 + search {
        for du in center.0 - search..=center.0 + search {
            let cost = sad(a, b, u, v, du, dv, radius);
            let mag = du * du + dv * dv;
            if cost < best.0 || (cost == best.0 && mag < best.1) {
                best = (cost, mag, (du, dv));
            }
        }
    }
    best.2
}

/// Dense integer flow from `a` to `b` (so `b[p + flow[p]] ≈ a[p]`).
///
/// Non-finite inputs are read as 0 and borders are clamped. The coarse level
/// searches `±search` at half resolution; the fine level searches `±search`
/// around twice the coarse estimate. Panics if the shapes differ.
pub fn block_flow(a: &Grid<f64>, b: &Grid<f64>, radius: usize, search: usize) -> FlowField {
    assert!(a.same_shape(b), "block_flow inputs must share a shape");
    let (a, b) = (sanitize(a), sanitize(b));
    let (w, h) = a.dims();
    let (r, s) = (radius as isize, search as isize);
    let coarse = if w >= 2 && h >= 2 {
        let (ca, cb) = (downsample(&a), downsample(&b));
        Some(Grid::from_fn(ca.width(), ca.height(), |u, v| {
            search_level(&ca, &cb, u as isize, v as isize, (0, 0), r, s)
        }))
    } else {
        None
    };
    Grid::from_fn(w, h, |u, v| {
        let guess = match &coarse {
            Some(c) => {
                let (gu, gv) = *c.get((u / 2).min(c.width() - 1), (v / 2).min(c.height() - 1));
                (2 * gu, 2 * gv)
            }
            None => (0, 0),
        };
        let (du, dv) = search_level(&a, &b, u as isize, v as isize, guess, r, s);
        [du as f64, dv as f64]
    })
}
