//! Rigid-motion field and ground-truth flow from pose and depth.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::camera::CameraModel;
use super::pose::{interval_velocity, Trajectory, VelocitySample};
use crate::error::{Error, Result};
use crate::grid::FlowField;
use crate::scalar::Scalar;

/// Per-pixel scene depth in meters; non-finite cells mean "no depth".
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap<T> {
    pub width: usize,
    pub height: usize,
    pub timestamp: u64,
    pub depths: Vec<T>,
}

impl<T: Scalar> DepthMap<T> {
    pub fn new(width: usize, height: usize, timestamp: u64, depths: Vec<T>) -> Result<Self> {
        if width * height != depths.len() {
            return Err(Error::InvalidArgument(format!("{} depths do not fill a {width}x{height} map", depths.len())));
        }
        if depths.iter().any(|&d| d.is_finite() && d <= T::zero()) {
            return Err(Error::InvalidArgument("finite depths must be positive".into()));
        }
        Ok(Self { width, height, timestamp, depths })
    }

    pub fn constant(width: usize, height: usize, timestamp: u64, depth: T) -> Self {
        Self { width, height, timestamp, depths: vec![depth; width * height] }
    }

    /// Depth at a pixel, `None` for the no-depth sentinel.
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> Option<T> {
        let z = self.depths[y * self.width + x];
        (z.is_finite() && z > T::zero()).then_some(z)
    }
}

/// Which sign to use for the `v_z` entry of the first interaction-matrix row.
///
/// `Standard` is the pinhole motion field (`+x/Z`, consistent with the second
/// row's `+y/Z`). `NegatedX` uses `−x/Z` instead, the sign found in some
/// printed statements of the matrix; only the first row differs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    #[default]
    Standard,
    NegatedX,
}

/// Image-plane velocity of the normalized point `(x, y)` at depth `z`:
///
/// ```text
/// ẋ = −v_x/Z ± x v_z/Z + x y ω_x − (1 + x²) ω_y + y ω_z
/// ẏ = −v_y/Z + y v_z/Z + (1 + y²) ω_x − x y ω_y − x ω_z
/// ```
#[inline]
pub fn interaction<T: Scalar>(x: T, y: T, z: T, vel: &VelocitySample<T>, convention: Convention) -> (T, T) {
    let [vx, vy, vz] = vel.v.0;
    let [wx, wy, wz] = vel.omega.0;
    let inv_z = T::one() / z;
    let xz = match convention {
        Convention::Standard => x * inv_z,
        Convention::NegatedX => -x * inv_z,
    };
    let one = T::one();
    let xdot = -inv_z * vx + xz * vz + x * y * wx - (one + x * x) * wy + y * wz;
    let ydot = -inv_z * vy + y * inv_z * vz + (one + y * y) * wx - x * y * wy - x * wz;
    (xdot, ydot)
}

/// Motion field on the undistorted pixel grid, in normalized units per
/// second. Pixels without depth are invalid.
pub fn motion_field<T: Scalar>(
    vel: &VelocitySample<T>,
    depth: &DepthMap<T>,
    cam: &CameraModel<T>,
    convention: Convention,
) -> FlowField<T> {
    let (w, h) = (depth.width, depth.height);
    let mut out = FlowField::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            match depth.at(x, y) {
                Some(z) => {
                    let (nx, ny) = cam.pixel_to_normalized(T::from_count(x), T::from_count(y));
                    let (a, b) = interaction(nx, ny, z, vel, convention);
                    out.u[i] = a;
                    out.v[i] = b;
                }
                None => out.valid[i] = false,
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub struct GtFlowRequest<'a, T> {
    pub t0: u64,
    pub t1: u64,
    pub trajectory: &'a Trajectory<T>,
    pub depth: &'a DepthMap<T>,
    pub camera: &'a CameraModel<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtFlowOptions {
    pub convention: Convention,
    /// Half-width of the velocity moving average, in intervals of `t1 − t0`.
    pub smooth_half_width: usize,
    /// Largest allowed gap between the depth timestamp and `t0`, microseconds.
    pub depth_tolerance: u64,
}

impl Default for GtFlowOptions {
    fn default() -> Self {
        Self { convention: Convention::Standard, smooth_half_width: 5, depth_tolerance: 10_000 }
    }
}

/// Picks the depth map closest to `t0`, if one lies within `tolerance` µs.
pub fn select_depth<T>(maps: &[DepthMap<T>], t0: u64, tolerance: u64) -> Result<&DepthMap<T>> {
    maps.iter()
        .min_by_key(|m| m.timestamp.abs_diff(t0))
        .filter(|m| m.timestamp.abs_diff(t0) <= tolerance)
        .ok_or(Error::NoDepth { t0, tolerance })
}

/// Ground-truth flow in pixels on the distorted sensor grid.
///
/// Each distorted pixel is undistorted, moved by the motion field scaled by
/// `dt = t1 − t0`, and distorted again; the flow is the difference between
/// the distorted positions of the moved and unmoved points. Depth is looked up at the sensor pixel. Pixels
/// without depth, or whose undistortion does not converge, are invalid.
pub fn generate_gt_flow<T: Scalar>(request: &GtFlowRequest<'_, T>, options: &GtFlowOptions) -> Result<FlowField<T>> {
    let GtFlowRequest { t0, t1, trajectory, depth, camera } = *request;
    if t1 <= t0 {
        return Err(Error::InvalidWindow { t_start: t0, t_end: t1 });
    }
    camera.validate()?;
    if depth.timestamp.abs_diff(t0) > options.depth_tolerance {
        return Err(Error::NoDepth { t0, tolerance: options.depth_tolerance });
    }
    let vel = interval_velocity(trajectory, t0, t1, options.smooth_half_width)?;
    let dt = T::lit((t1 - t0) as f64 * 1e-6);
    Ok(flow_from_velocity(&vel, dt, depth, camera, options.convention))
}

/// Displacement field for a known velocity held for `dt` seconds.
pub fn flow_from_velocity<T: Scalar>(
    vel: &VelocitySample<T>,
    dt: T,
    depth: &DepthMap<T>,
    cam: &CameraModel<T>,
    convention: Convention,
) -> FlowField<T> {
    let w = depth.width;
    let distorted = cam.has_distortion();
    let rows: Vec<Vec<Option<(T, T)>>> = (0..depth.height)
        .into_par_iter()
        .map(|row| {
            (0..w)
                .map(|col| {
                    let z = depth.at(col, row)?;
                    let (c, r) = (T::from_count(col), T::from_count(row));
                    let (x, y) = cam.undistort_pixel(c, r)?;
                    let (xdot, ydot) = interaction(x, y, z, vel, convention);
                    let (dx, dy) = (xdot * dt, ydot * dt);
                    if distorted {
                        // difference of re-distorted points, so the
                        // undistortion residual cancels
                        let (ac, ar) = cam.distort_to_pixel(x, y);
                        let (bc, br) = cam.distort_to_pixel(x + dx, y + dy);
                        Some((bc - ac, br - ar))
                    } else {
                        Some((dx * cam.fx, dy * cam.fy))
                    }
                })
                .collect()
        })
        .collect();
    let mut out = FlowField::zeros(w, depth.height);
    for (i, cell) in rows.into_iter().flatten().enumerate() {
        match cell {
            Some((u, v)) if u.is_finite() && v.is_finite() => {
                out.u[i] = u;
                out.v[i] = v;
            }
            _ => out.valid[i] = false,
        }
    }
    out
}
