//! Pinhole camera with plumb-bob (radial-tangential) distortion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const UNDISTORT_MAX_ITERATIONS: usize = 50;
pub const UNDISTORT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel<T> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    #[serde(default)]
    pub k1: T,
    #[serde(default)]
    pub k2: T,
    #[serde(default)]
    pub p1: T,
    #[serde(default)]
    pub p2: T,
    #[serde(default)]
    pub k3: T,
}

impl<T: Scalar> CameraModel<T> {
    pub fn pinhole(fx: T, fy: T, cx: T, cy: T) -> Self {
        let z = T::zero();
        Self { fx, fy, cx, cy, k1: z, k2: z, p1: z, p2: z, k3: z }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.fx, self.fy, self.cx, self.cy, self.k1, self.k2, self.p1, self.p2, self.k3];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("camera parameters must be finite".into()));
        }
        if self.fx <= T::zero() || self.fy <= T::zero() {
            return Err(Error::InvalidArgument("focal lengths must be positive".into()));
        }
        Ok(())
    }

    pub fn has_distortion(&self) -> bool {
        [self.k1, self.k2, self.p1, self.p2, self.k3].iter().any(|c| !c.is_zero())
    }

    #[inline]
    pub fn pixel_to_normalized(&self, col: T, row: T) -> (T, T) {
        ((col - self.cx) / self.fx, (row - self.cy) / self.fy)
    }

    #[inline]
    pub fn normalized_to_pixel(&self, x: T, y: T) -> (T, T) {
        (x * self.fx + self.cx, y * self.fy + self.cy)
    }

    /// Applies the lens model to an undistorted normalized point.
    pub fn distort(&self, x: T, y: T) -> (T, T) {
        let two = T::lit(2.0);
        let r2 = x * x + y * y;
        let radial = T::one() + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3));
        let xy = x * y;
        (
            x * radial + two * self.p1 * xy + self.p2 * (r2 + two * x * x),
            y * radial + self.p1 * (r2 + two * y * y) + two * self.p2 * xy,
        )
    }

    /// Inverts [`distort`](Self::distort) by fixed-point iteration. Returns
    /// `None` if the residual does not fall below [`UNDISTORT_TOLERANCE`]
    /// within [`UNDISTORT_MAX_ITERATIONS`] steps.
    pub fn undistort(&self, xd: T, yd: T) -> Option<(T, T)> {
        if !self.has_distortion() {
            return Some((xd, yd));
        }
        let tol = T::lit(UNDISTORT_TOLERANCE);
        let two = T::lit(2.0);
        let (mut x, mut y) = (xd, yd);
        for _ in 0..UNDISTORT_MAX_ITERATIONS {
            let r2 = x * x + y * y;
            let radial = T::one() + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3));
            let dx = two * self.p1 * x * y + self.p2 * (r2 + two * x * x);
            let dy = self.p1 * (r2 + two * y * y) + two * self.p2 * x * y;
            x = (xd - dx) / radial;
            y = (yd - dy) / radial;
            if !(x.is_finite() && y.is_finite()) {
                return None;
            }
            let (ex, ey) = self.distort(x, y);
            if (ex - xd).abs() < tol && (ey - yd).abs() < tol {
                return Some((x, y));
            }
        }
        None
    }

    /// Distorted pixel to undistorted normalized coordinates.
    pub fn undistort_pixel(&self, col: T, row: T) -> Option<(T, T)> {
        let (xd, yd) = self.pixel_to_normalized(col, row);
        self.undistort(xd, yd)
    }

    /// Undistorted normalized coordinates to distorted pixel.
    pub fn distort_to_pixel(&self, x: T, y: T) -> (T, T) {
        let (xd, yd) = self.distort(x, y);
        self.normalized_to_pixel(xd, yd)
    }
}
