//! Dense row-major rasters: grayscale frames, boolean masks and flow fields.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn check_len(width: usize, height: usize, len: usize) -> Result<()> {
    if width.checked_mul(height) != Some(len) {
        return Err(Error::InvalidArgument(format!("{len} values do not fill a {width}x{height} raster")));
    }
    Ok(())
}

/// Grayscale intensity image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame<T> {
    pub width: usize,
    pub height: usize,
    /// Capture time in microseconds.
    pub timestamp: u64,
    pub pixels: Vec<T>,
}

impl<T: Scalar> Frame<T> {
    pub fn new(width: usize, height: usize, timestamp: u64, pixels: Vec<T>) -> Result<Self> {
        check_len(width, height, pixels.len())?;
        Ok(Self { width, height, timestamp, pixels })
    }

    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self { width, height, timestamp: 0, pixels: vec![value; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self { width, height, timestamp: 0, pixels }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> T {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

/// Per-pixel boolean raster (event masks, validity masks).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, value: bool) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Clears an `n`-pixel frame around the border.
    pub fn without_border(mut self, n: usize) -> Self {
        for y in 0..self.height {
            for x in 0..self.width {
                if x < n || y < n || x + n >= self.width || y + n >= self.height {
                    self.set(x, y, false);
                }
            }
        }
        self
    }
}

/// Dense per-pixel displacement `(u, v)` in pixels with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField<T> {
    pub width: usize,
    pub height: usize,
    pub u: Vec<T>,
    pub v: Vec<T>,
    pub valid: Vec<bool>,
}

impl<T: Scalar> FlowField<T> {
    pub fn new(width: usize, height: usize, u: Vec<T>, v: Vec<T>, valid: Vec<bool>) -> Result<Self> {
        check_len(width, height, u.len())?;
        check_len(width, height, v.len())?;
        check_len(width, height, valid.len())?;
        Ok(Self { width, height, u, v, valid })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::constant(width, height, T::zero(), T::zero())
    }

    pub fn constant(width: usize, height: usize, u: T, v: T) -> Self {
        let n = width * height;
        Self { width, height, u: vec![u; n], v: vec![v; n], valid: vec![true; n] }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.u.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> Option<(T, T)> {
        let i = y * self.width + x;
        self.valid[i].then(|| (self.u[i], self.v[i]))
    }

    pub fn valid_mask(&self) -> Mask {
        Mask { width: self.width, height: self.height, data: self.valid.clone() }
    }

    /// Nearest-neighbour ×2 upsampling; displacements double with resolution.
    pub fn upsample2(&self) -> Self {
        let (w, h) = (self.width * 2, self.height * 2);
        let two = T::lit(2.0);
        let mut out = Self::zeros(w, h);
        for y in 0..h {
            for x in 0..w {
                let src = (y / 2) * self.width + x / 2;
                let dst = y * w + x;
                out.u[dst] = self.u[src] * two;
                out.v[dst] = self.v[src] * two;
                out.valid[dst] = self.valid[src];
            }
        }
        out
    }
}

pub(crate) fn ensure_same_dims(expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected != found {
        return Err(Error::ResolutionMismatch { expected, found });
    }
    Ok(())
}
