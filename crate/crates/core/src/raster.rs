//! Row-major grids and the geometric transforms shared by every pipeline stage.
//!
//! Origin is the top-left pixel; `h` grows downward and `w` grows to the right.
//! All three pipeline raster kinds are instances of [`Grid`]:
//!
//! * [`FloatRaster`] holds probabilities or logits as binary32,
//! * [`BinaryMask`] holds foreground (blade) flags,
//! * [`RgbImage`] holds 8-bit color triples.

use crate::error::RasterError;

/// A `height × width` grid stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

pub type FloatRaster = Grid<f32>;
pub type BinaryMask = Grid<bool>;
pub type RgbImage = Grid<[u8; 3]>;

impl<T> Grid<T> {
    /// Wraps `data` as a grid, checking that both sides are non-zero and the
    /// length matches exactly.
    pub fn from_vec(height: usize, width: usize, data: Vec<T>) -> Result<Self, RasterError> {
        if height == 0 || width == 0 {
            return Err(RasterError::EmptyDimensions { height, width });
        }
        let expected = height
            .checked_mul(width)
            .ok_or(RasterError::DimensionOverflow { height, width })?;
        if data.len() != expected {
            return Err(RasterError::LengthMismatch {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { height, width, data })
    }

    /// Builds a grid by evaluating `f(h, w)` for every pixel in row-major order.
    ///
    /// Panics if either dimension is zero.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(height > 0 && width > 0, "grid dimensions must be non-zero");
        let mut data = Vec::with_capacity(height * width);
        for h in 0..height {
            for w in 0..width {
                data.push(f(h, w));
            }
        }
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    /// Always false; grids have at least one pixel.
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
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
    pub fn index_of(&self, h: usize, w: usize) -> usize {
        debug_assert!(h < self.height && w < self.width);
        h * self.width + w
    }

    #[inline]
    pub fn get(&self, h: usize, w: usize) -> &T {
        &self.data[self.index_of(h, w)]
    }

    #[inline]
    pub fn set(&mut self, h: usize, w: usize, value: T) {
        let i = self.index_of(h, w);
        self.data[i] = value;
    }

    /// Applies `f` to every pixel, keeping the shape.
    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn same_dims<U>(&self, other: &Grid<U>) -> bool {
        self.dims() == other.dims()
    }

    /// Errors with [`RasterError::ShapeMismatch`] unless `other` has the same shape.
    pub fn check_same_dims<U>(&self, other: &Grid<U>) -> Result<(), RasterError> {
        if self.same_dims(other) {
            Ok(())
        } else {
            Err(RasterError::ShapeMismatch {
                left: self.dims(),
                right: other.dims(),
            })
        }
    }
}

impl<T: Clone> Grid<T> {
    pub fn filled(height: usize, width: usize, value: T) -> Self {
        Self::from_fn(height, width, |_, _| value.clone())
    }

    /// Swaps rows and columns.
    pub fn transpose(&self) -> Self {
        Self::from_fn(self.width, self.height, |h, w| self.get(w, h).clone())
    }
}

impl FloatRaster {
    /// Errors unless every value is finite.
    pub fn check_finite(&self) -> Result<(), RasterError> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(RasterError::NonFinite {
                index: i,
                value: self.data[i] as f64,
            }),
        }
    }

    /// Errors unless every value lies in `[0, 1]` (NaN is rejected).
    pub fn check_probability(&self) -> Result<(), RasterError> {
        match self.data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            None => Ok(()),
            Some(i) => Err(RasterError::OutOfRange {
                index: i,
                value: self.data[i] as f64,
            }),
        }
    }
}

impl BinaryMask {
    pub fn count_foreground(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn complement(&self) -> Self {
        self.map(|v| !v)
    }

    /// True when every foreground pixel of `self` is also foreground in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.same_dims(other) && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }
}

/// The four flip variants used for test-time augmentation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FlipTransform {
    Identity,
    /// Column reversal: `(h, w) → (h, W−1−w)`.
    FlipHorizontal,
    /// Row reversal: `(h, w) → (H−1−h, w)`.
    FlipVertical,
    FlipBoth,
}

impl FlipTransform {
    pub const ALL: [FlipTransform; 4] = [
        FlipTransform::Identity,
        FlipTransform::FlipHorizontal,
        FlipTransform::FlipVertical,
        FlipTransform::FlipBoth,
    ];

    /// Position of this transform in [`FlipTransform::ALL`].
    pub fn index(self) -> usize {
        match self {
            FlipTransform::Identity => 0,
            FlipTransform::FlipHorizontal => 1,
            FlipTransform::FlipVertical => 2,
            FlipTransform::FlipBoth => 3,
        }
    }

    /// Every variant is an involution, so each one is its own inverse.
    pub fn inverse(self) -> Self {
        self
    }

    pub fn tag(self) -> &'static str {
        match self {
            FlipTransform::Identity => "id",
            FlipTransform::FlipHorizontal => "fh",
            FlipTransform::FlipVertical => "fv",
            FlipTransform::FlipBoth => "fhv",
        }
    }

    fn flips(self) -> (bool, bool) {
        match self {
            FlipTransform::Identity => (false, false),
            FlipTransform::FlipHorizontal => (false, true),
            FlipTransform::FlipVertical => (true, false),
            FlipTransform::FlipBoth => (true, true),
        }
    }

    /// Returns a new grid with each pixel moved according to the transform.
    pub fn apply<T: Clone>(self, grid: &Grid<T>) -> Grid<T> {
        let (rows, cols) = self.flips();
        let (height, width) = grid.dims();
        Grid::from_fn(height, width, |h, w| {
            let sh = if rows { height - 1 - h } else { h };
            let sw = if cols { width - 1 - w } else { w };
            grid.get(sh, sw).clone()
        })
    }
}

/// Convenience form of [`FlipTransform::apply`].
pub fn apply_flip<T: Clone>(grid: &Grid<T>, transform: FlipTransform) -> Grid<T> {
    transform.apply(grid)
}

/// Binarizes a probability raster: foreground iff `p ≥ threshold`.
pub fn quantize(probabilities: &FloatRaster, threshold: f64) -> Result<BinaryMask, RasterError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(RasterError::InvalidThreshold(threshold));
    }
    if let Some(i) = probabilities.as_slice().iter().position(|v| v.is_nan()) {
        return Err(RasterError::NonFinite {
            index: i,
            value: f64::NAN,
        });
    }
    Ok(probabilities.map(|&p| p as f64 >= threshold))
}
