//! Square pixel grids, images over them, and window geometry.
//!
//! Pixels are integer `(row, col)` indices in `0..side`. Anything that reaches
//! past the image edge is resolved by whole-sample mirror reflection: index
//! `-1` maps to `0`, `-2` to `1`, and `side` maps to `side - 1`. Windows near
//! the boundary therefore always have their full cardinality.

use crate::error::{Error, Result};

/// The `side × side` pixel grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelGrid {
    side: usize,
}

impl PixelGrid {
    pub fn new(side: usize) -> Result<Self> {
        if side == 0 {
            return Err(Error::invalid("grid side must be positive"));
        }
        Ok(Self { side })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Number of pixels, `side²`.
    pub fn len(&self) -> usize {
        self.side * self.side
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, p: Pixel) -> bool {
        p.row < self.side && p.col < self.side
    }

    pub fn pixels(&self) -> impl Iterator<Item = Pixel> + '_ {
        (0..self.side).flat_map(move |row| (0..self.side).map(move |col| Pixel { row, col }))
    }

    /// Grid coordinate of a pixel on the unit square, `((row+1)/N, (col+1)/N)`.
    pub fn unit_coords(&self, p: Pixel) -> (f64, f64) {
        let n = self.side as f64;
        ((p.row + 1) as f64 / n, (p.col + 1) as f64 / n)
    }

    fn check(&self, p: Pixel) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "pixel ({}, {}) outside {}x{} grid",
                p.row, p.col, self.side, self.side
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pixel {
    pub row: usize,
    pub col: usize,
}

impl Pixel {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

/// Displacement between two pixels, in pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Offset {
    pub dr: isize,
    pub dc: isize,
}

impl Offset {
    pub const ZERO: Offset = Offset { dr: 0, dc: 0 };

    pub fn new(dr: isize, dc: isize) -> Self {
        Self { dr, dc }
    }

    /// Even coordinate sum; the centre offset is even.
    pub fn is_even(&self) -> bool {
        (self.dr + self.dc).rem_euclid(2) == 0
    }

    pub fn linf(&self) -> usize {
        self.dr.unsigned_abs().max(self.dc.unsigned_abs())
    }

    pub fn norm2_sq(&self) -> f64 {
        (self.dr * self.dr + self.dc * self.dc) as f64
    }
}

/// All offsets with `‖o‖∞ ≤ radius`, row-major from `(-r, -r)`.
pub fn window_offsets(radius: usize) -> impl Iterator<Item = Offset> {
    let r = radius as isize;
    (-r..=r).flat_map(move |dr| (-r..=r).map(move |dc| Offset { dr, dc }))
}

/// Mirror an arbitrary index into `0..len` without duplicating the edge sample.
///
/// Folds with period `2·len`, so offsets larger than the image still land on a
/// valid pixel.
#[inline]
pub fn reflect_index(k: isize, len: usize) -> usize {
    let n = len as isize;
    let period = 2 * n;
    let k = k.rem_euclid(period);
    if k < n {
        k as usize
    } else {
        (period - 1 - k) as usize
    }
}

/// Values a pixel can carry.
pub trait PixelValue: Copy + Send + Sync + 'static {
    fn is_valid(self) -> bool;
    fn to_f64(self) -> f64;
}

impl PixelValue for f64 {
    fn is_valid(self) -> bool {
        self.is_finite() && self >= 0.0
    }

    fn to_f64(self) -> f64 {
        self
    }
}

impl PixelValue for u32 {
    fn is_valid(self) -> bool {
        true
    }

    fn to_f64(self) -> f64 {
        self as f64
    }
}

/// A square image stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    side: usize,
    data: Vec<T>,
}

/// Clean intensity `f`: expected photon count per pixel, nonnegative.
pub type IntensityImage = Image<f64>;

/// Observed photon counts `Y`.
pub type CountImage = Image<u32>;

impl<T: PixelValue> Image<T> {
    pub fn new(side: usize, data: Vec<T>) -> Result<Self> {
        PixelGrid::new(side)?;
        if data.len() != side * side {
            return Err(Error::invalid(format!(
                "expected {} pixels for a {side}x{side} image, got {}",
                side * side,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_valid()) {
            return Err(Error::invalid(format!(
                "pixel {i} holds an invalid value (negative or non-finite)"
            )));
        }
        Ok(Self { side, data })
    }

    pub fn filled(side: usize, value: T) -> Result<Self> {
        Self::new(side, vec![value; side * side])
    }

    pub fn from_fn(side: usize, mut f: impl FnMut(Pixel) -> T) -> Result<Self> {
        let grid = PixelGrid::new(side)?;
        let data = grid.pixels().map(&mut f).collect();
        Self::new(side, data)
    }

    pub fn grid(&self) -> PixelGrid {
        PixelGrid { side: self.side }
    }

    pub fn side(&self) -> usize {
        self.side
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

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, p: Pixel) -> T {
        self.data[p.row * self.side + p.col]
    }

    /// Value at `p + o`, with out-of-range coordinates reflected back in.
    #[inline]
    pub fn at_offset(&self, p: Pixel, o: Offset) -> T {
        let r = reflect_index(p.row as isize + o.dr, self.side);
        let c = reflect_index(p.col as isize + o.dc, self.side);
        self.data[r * self.side + c]
    }

    pub fn check_pixel(&self, p: Pixel) -> Result<()> {
        self.grid().check(p)
    }

    pub fn ensure_same_grid<U: PixelValue>(&self, other: &Image<U>) -> Result<()> {
        if self.side != other.side() {
            return Err(Error::invalid(format!(
                "grid mismatch: {0}x{0} vs {1}x{1}",
                self.side,
                other.side()
            )));
        }
        Ok(())
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .map(|v| v.to_f64())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn to_intensity(&self) -> IntensityImage {
        Image {
            side: self.side,
            data: self.data.iter().map(|v| v.to_f64()).collect(),
        }
    }
}

impl IntensityImage {
    /// `Γ = sup f`.
    pub fn peak(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }
}

/// Extends `image` by `pad` pixels on every side using mirror reflection.
///
/// The interior of the result equals the input bit for bit.
pub fn symmetrize_pad<T: PixelValue>(image: &Image<T>, pad: usize) -> Result<Image<T>> {
    let n = image.side();
    if pad > n {
        return Err(Error::invalid(format!(
            "pad of {pad} exceeds image side {n}"
        )));
    }
    let side = n + 2 * pad;
    let mut data = Vec::with_capacity(side * side);
    for r in 0..side {
        let sr = reflect_index(r as isize - pad as isize, n);
        for c in 0..side {
            let sc = reflect_index(c as isize - pad as isize, n);
            data.push(image.data[sr * n + sc]);
        }
    }
    Ok(Image { side, data })
}

/// Search-window and patch geometry, both as pixel radii.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub search_radius: usize,
    pub patch_radius: usize,
}

impl WindowSpec {
    pub fn new(search_radius: usize, patch_radius: usize) -> Self {
        Self {
            search_radius,
            patch_radius,
        }
    }

    /// `M = (2·Nh + 1)²`.
    pub fn search_size(&self) -> usize {
        (2 * self.search_radius + 1).pow(2)
    }

    /// `m = (2·Nη + 1)²`.
    pub fn patch_size(&self) -> usize {
        (2 * self.patch_radius + 1).pow(2)
    }
}

/// Pixels within L∞ distance `radius` of `center`, reflected into the grid.
///
/// Always returns `(2·radius + 1)²` entries; near the edge some pixels repeat.
pub fn window_pixels(grid: PixelGrid, center: Pixel, radius: usize) -> Result<Vec<Pixel>> {
    grid.check(center)?;
    let n = grid.side();
    Ok(window_offsets(radius)
        .map(|o| Pixel {
            row: reflect_index(center.row as isize + o.dr, n),
            col: reflect_index(center.col as isize + o.dc, n),
        })
        .collect())
}

/// Checkerboard partition of the grid relative to a centre pixel.
///
/// A pixel is in the even set when its offset from the centre has an even
/// coordinate sum. Similarities for the split estimator are built from the odd
/// set and averages are taken over the even set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelSplit {
    grid: PixelGrid,
    center: Pixel,
}

impl PixelSplit {
    pub fn center(&self) -> Pixel {
        self.center
    }

    pub fn grid(&self) -> PixelGrid {
        self.grid
    }

    pub fn is_even(&self, p: Pixel) -> bool {
        (p.row + p.col + self.center.row + self.center.col) % 2 == 0
    }

    pub fn even_set(&self) -> Vec<Pixel> {
        self.grid.pixels().filter(|&p| self.is_even(p)).collect()
    }

    pub fn odd_set(&self) -> Vec<Pixel> {
        self.grid.pixels().filter(|&p| !self.is_even(p)).collect()
    }
}

pub fn checkerboard_split(grid: PixelGrid, center: Pixel) -> Result<PixelSplit> {
    grid.check(center)?;
    Ok(PixelSplit { grid, center })
}
