//! Row-major pixel grids.
//!
//! Every per-frame signal is a [`Grid`]: depth, confidence, blend mask and
//! uncertainty are `Grid<f64>`, color is `Grid<[f64; 3]>` and optical flow is
//! `Grid<[f64; 2]>`. A pixel is a hole when any of its channels is not
//! finite; [`Pixel::HOLE`] is the canonical `+inf` sentinel.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::FusionError;

/// A fixed number of `f64` channels.
pub trait Pixel: Copy + PartialEq + core::fmt::Debug {
    const CHANNELS: usize;
    const HOLE: Self;

    fn channel(&self, i: usize) -> f64;

    fn from_channels(f: impl FnMut(usize) -> f64) -> Self;

    fn is_valid(&self) -> bool {
        (0..Self::CHANNELS).all(|i| self.channel(i).is_finite())
    }

    fn is_hole(&self) -> bool {
        !self.is_valid()
    }

    /// Channel-wise `a * self + b * other`.
    fn combine(self, a: f64, other: Self, b: f64) -> Self {
        Self::from_channels(|i| a * self.channel(i) + b * other.channel(i))
    }
}

impl Pixel for f64 {
    const CHANNELS: usize = 1;
    const HOLE: f64 = f64::INFINITY;

    fn channel(&self, _: usize) -> f64 {
        *self
    }

    fn from_channels(mut f: impl FnMut(usize) -> f64) -> Self {
        f(0)
    }
}

impl<const N: usize> Pixel for [f64; N] {
    const CHANNELS: usize = N;
    const HOLE: [f64; N] = [f64::INFINITY; N];

    fn channel(&self, i: usize) -> f64 {
        self[i]
    }

    fn from_channels(f: impl FnMut(usize) -> f64) -> Self {
        core::array::from_fn(f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

pub type DepthMap = Grid<f64>;
pub type ConfidenceMap = Grid<f64>;
/// Per-pixel `α ∈ [0, 1]`; 1 trusts the observation, 0 trusts the prior.
pub type BlendMask = Grid<f64>;
/// Log-space uncertainty `s`; the matching confidence is `exp(-s)`.
pub type UncertaintyMap = Grid<f64>;
/// RGB in `[0, 1]`.
pub type ColorImage = Grid<[f64; 3]>;
/// Displacement `(du, dv)` in pixels.
pub type FlowField = Grid<[f64; 2]>;

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Grid { width, height, data: vec![value; width * height] }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self, FusionError> {
        if data.len() != width * height {
            return Err(FusionError::BufferLength { expected: width * height, found: data.len() });
        }
        Ok(Grid { width, height, data })
    }

    /// Builds a grid by evaluating `f(u, v)` in row-major order.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v));
            }
        }
        Grid { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// `(width, height)`
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index_of(&self, u: usize, v: usize) -> usize {
        debug_assert!(u < self.width && v < self.height);
        v * self.width + u
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> &T {
        &self.data[self.index_of(u, v)]
    }

    #[inline]
    pub fn get_mut(&mut self, u: usize, v: usize) -> &mut T {
        let i = self.index_of(u, v);
        &mut self.data[i]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, value: T) {
        let i = self.index_of(u, v);
        self.data[i] = value;
    }

    /// Signed lookup; `None` outside the grid.
    pub fn get_checked(&self, u: isize, v: isize) -> Option<&T> {
        if u < 0 || v < 0 || u as usize >= self.width || v as usize >= self.height {
            None
        } else {
            Some(self.get(u as usize, v as usize))
        }
    }

    /// Lookup with coordinates clamped to the border (edge replication).
    pub fn get_clamped(&self, u: isize, v: isize) -> &T {
        let u = u.clamp(0, self.width as isize - 1) as usize;
        let v = v.clamp(0, self.height as isize - 1) as usize;
        self.get(u, v)
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid { width: self.width, height: self.height, data: self.data.iter().map(f).collect() }
    }

    pub fn zip_map<S, U>(&self, other: &Grid<S>, mut f: impl FnMut(&T, &S) -> U) -> Grid<U> {
        assert_eq!(self.dims(), other.dims(), "zip_map on grids of different shape");
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(other.data.iter()).map(|(a, b)| f(a, b)).collect(),
        }
    }

    pub fn iter(&self) -> core::slice::Iter<'_, T> {
        self.data.iter()
    }

    /// Iterates `(u, v, &value)` in row-major order.
    pub fn enumerate(&self) -> impl Iterator<Item = (usize, usize, &T)> + '_ {
        let w = self.width;
        self.data.iter().enumerate().map(move |(i, x)| (i % w, i / w, x))
    }

    pub fn same_shape<S>(&self, other: &Grid<S>) -> bool {
        self.dims() == other.dims()
    }

    pub fn check_shape<S>(&self, other: &Grid<S>, what: &'static str) -> Result<(), FusionError> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(FusionError::ShapeMismatch { what, expected: self.dims(), found: other.dims() })
        }
    }
}

impl<T: Pixel> Grid<T> {
    pub fn holes(width: usize, height: usize) -> Self {
        Grid::filled(width, height, T::HOLE)
    }

    pub fn is_valid_at(&self, u: usize, v: usize) -> bool {
        self.get(u, v).is_valid()
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|p| p.is_valid()).count()
    }
}

impl Grid<f64> {
    /// Smallest and largest finite value, if any.
    pub fn finite_range(&self) -> Option<(f64, f64)> {
        let mut range: Option<(f64, f64)> = None;
        for &x in self.data.iter().filter(|x| x.is_finite()) {
            range = Some(match range {
                None => (x, x),
                Some((lo, hi)) => (lo.min(x), hi.max(x)),
            });
        }
        range
    }
}
