//! Camera trajectories and velocities by numerical differentiation.

use super::so3::{is_rotation, matrix_to_quaternion, quaternion_to_matrix, rotation_log, slerp};
use crate::error::{Error, Result};
use crate::linalg::{Mat3, Vec3};
use crate::scalar::Scalar;

/// Timestamped camera-to-world pose.
///
/// `quaternion` is the Hamilton `(x, y, z, w)` orientation exactly as the
/// sample was built (it may be off unit norm by the reader's tolerance) and is
/// what gets written back to disk; `rotation` is derived from its normalized
/// value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSample<T> {
    /// Microseconds.
    pub timestamp: u64,
    pub rotation: Mat3<T>,
    /// Meters.
    pub translation: Vec3<T>,
    pub quaternion: [T; 4],
}

impl<T: Scalar> PoseSample<T> {
    pub fn from_quaternion(timestamp: u64, quaternion: [T; 4], translation: Vec3<T>) -> Self {
        let norm = quaternion.iter().map(|&c| c * c).sum::<T>().sqrt();
        let unit = if norm == T::one() { quaternion } else { quaternion.map(|c| c / norm) };
        Self { timestamp, rotation: quaternion_to_matrix(unit), translation, quaternion }
    }

    pub fn from_rotation(timestamp: u64, rotation: Mat3<T>, translation: Vec3<T>) -> Result<Self> {
        if !is_rotation(&rotation, T::lit(1e-9)) {
            return Err(Error::InvalidArgument("matrix is not a rotation".into()));
        }
        Ok(Self { timestamp, rotation, translation, quaternion: matrix_to_quaternion(&rotation) })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    samples: Vec<PoseSample<T>>,
}

impl<T: Scalar> Trajectory<T> {
    /// Requires strictly increasing timestamps.
    pub fn new(samples: Vec<PoseSample<T>>) -> Result<Self> {
        for (i, pair) in samples.windows(2).enumerate() {
            if pair[1].timestamp <= pair[0].timestamp {
                return Err(Error::Unsorted { line: i + 2, t: pair[1].timestamp, previous: pair[0].timestamp });
            }
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[PoseSample<T>] {
        &self.samples
    }

    pub fn span(&self) -> Option<(u64, u64)> {
        Some((self.samples.first()?.timestamp, self.samples.last()?.timestamp))
    }

    /// Pose at `t`: translation interpolated linearly and rotation along the
    /// geodesic between the bracketing samples.
    pub fn pose_at(&self, t: u64) -> Result<(Mat3<T>, Vec3<T>)> {
        let (start, end) = self.span().ok_or(Error::OutsideTrajectory { t, start: 0, end: 0 })?;
        if t < start || t > end {
            return Err(Error::OutsideTrajectory { t, start, end });
        }
        let idx = self.samples.partition_point(|s| s.timestamp < t);
        let b = &self.samples[idx];
        if b.timestamp == t {
            return Ok((b.rotation, b.translation));
        }
        let a = &self.samples[idx - 1];
        let s = T::lit((t - a.timestamp) as f64 / (b.timestamp - a.timestamp) as f64);
        let translation = a.translation + (b.translation - a.translation).scale(s);
        Ok((slerp(&a.rotation, &b.rotation, s)?, translation))
    }
}

/// Camera-frame linear (m/s) and angular (rad/s) velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocitySample<T> {
    pub timestamp: u64,
    pub v: Vec3<T>,
    pub omega: Vec3<T>,
}

impl<T: Scalar> VelocitySample<T> {
    pub fn zero(timestamp: u64) -> Self {
        Self { timestamp, v: Vec3::zeros(), omega: Vec3::zeros() }
    }
}

/// Constant-velocity fit between the poses at `t0` and `t1`:
/// `v = R0ᵀ (p1 − p0) / dt` and `ω^ = logm(R0ᵀ R1) / dt`, both expressed in
/// the camera frame at `t0`.
pub fn differentiate_pose<T: Scalar>(traj: &Trajectory<T>, t0: u64, t1: u64) -> Result<VelocitySample<T>> {
    if t1 <= t0 {
        return Err(Error::InvalidWindow { t_start: t0, t_end: t1 });
    }
    let (r0, p0) = traj.pose_at(t0)?;
    let (r1, p1) = traj.pose_at(t1)?;
    let inv_dt = T::lit(1e6 / (t1 - t0) as f64);
    let r0t = r0.transpose();
    let v = r0t.mul_vec(&(p1 - p0)).scale(inv_dt);
    let omega = rotation_log(&(r0t * r1))?.scale(inv_dt);
    Ok(VelocitySample { timestamp: t0, v, omega })
}

/// Central moving average with half-width `half_width`; the window is
/// truncated at both ends of the sequence.
pub fn smooth_velocities<T: Scalar>(samples: &[VelocitySample<T>], half_width: usize) -> Vec<VelocitySample<T>> {
    let n = samples.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half_width);
            let hi = (i + half_width).min(n - 1);
            let count = T::from_count(hi - lo + 1);
            let (mut v, mut w) = (Vec3::zeros(), Vec3::zeros());
            for s in &samples[lo..=hi] {
                v = v + s.v;
                w = w + s.omega;
            }
            VelocitySample {
                timestamp: samples[i].timestamp,
                v: v.scale(T::one() / count),
                omega: w.scale(T::one() / count),
            }
        })
        .collect()
}

/// Velocity for `[t0, t1)` smoothed over up to `half_width` neighbouring
/// intervals of the same length on each side (those leaving the trajectory
/// span are dropped).
pub fn interval_velocity<T: Scalar>(
    traj: &Trajectory<T>,
    t0: u64,
    t1: u64,
    half_width: usize,
) -> Result<VelocitySample<T>> {
    let center = differentiate_pose(traj, t0, t1)?;
    if half_width == 0 {
        return Ok(center);
    }
    let (start, end) = traj.span().expect("non-empty after differentiation");
    let dt = t1 - t0;
    let mut before = Vec::new();
    for k in 1..=half_width as u64 {
        match t0.checked_sub(k * dt) {
            Some(a) if a >= start => before.push(differentiate_pose(traj, a, a + dt)?),
            _ => break,
        }
    }
    let mut seq: Vec<_> = before.into_iter().rev().collect();
    let center_index = seq.len();
    seq.push(center);
    for k in 1..=half_width as u64 {
        let a = t0 + k * dt;
        if a + dt > end {
            break;
        }
        seq.push(differentiate_pose(traj, a, a + dt)?);
    }
    Ok(smooth_velocities(&seq, half_width)[center_index])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::so3::rotation_exp;
    use std::f64::consts::FRAC_PI_4;

    fn traj_from(f: impl Fn(f64) -> (Mat3<f64>, Vec3<f64>), times: &[u64]) -> Trajectory<f64> {
        Trajectory::new(
            times
                .iter()
                .map(|&t| {
                    let (r, p) = f(t as f64 * 1e-6);
                    PoseSample::from_rotation(t, r, p).unwrap()
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn static_trajectory() {
        let tr = traj_from(|_| (Mat3::identity(), Vec3::new(1.0, 2.0, 3.0)), &[0, 100_000]);
        let v = differentiate_pose(&tr, 0, 100_000).unwrap();
        assert_eq!(v.v, Vec3::zeros());
        assert_eq!(v.omega, Vec3::zeros());
    }

    #[test]
    fn linear_motion() {
        let tr = traj_from(|t| (Mat3::identity(), Vec3::new(t, 0.0, 0.0)), &[0, 500_000, 1_000_000]);
        let v = differentiate_pose(&tr, 250_000, 750_000).unwrap();
        assert!((v.v - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        assert_eq!(v.omega, Vec3::zeros());
    }

    #[test]
    fn constant_rate_rotation_about_z() {
        let times: Vec<u64> = (0..=10).map(|k| k * 50_000).collect();
        let tr = traj_from(|t| (rotation_exp(&Vec3::new(0.0, 0.0, FRAC_PI_4 * t)), Vec3::zeros()), &times);
        let v = differentiate_pose(&tr, 100_000, 200_000).unwrap();
        assert!((v.omega - Vec3::new(0.0, 0.0, FRAC_PI_4)).norm() < 1e-9);
        // interpolated endpoints
        let v = differentiate_pose(&tr, 120_000, 220_000).unwrap();
        assert!((v.omega - Vec3::new(0.0, 0.0, FRAC_PI_4)).norm() < 1e-9);
    }

    #[test]
    fn velocity_is_in_camera_frame() {
        // camera yawed 90° about z moving along world +y: forward in its own x
        let r = rotation_exp(&Vec3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2));
        let tr = traj_from(move |t| (r, Vec3::new(0.0, t, 0.0)), &[0, 1_000_000]);
        let v = differentiate_pose(&tr, 0, 1_000_000).unwrap();
        assert!((v.v - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn outside_span() {
        let tr = traj_from(|_| (Mat3::identity(), Vec3::zeros()), &[10, 20]);
        assert!(matches!(differentiate_pose(&tr, 5, 15), Err(Error::OutsideTrajectory { t: 5, .. })));
        assert!(differentiate_pose(&tr, 15, 15).is_err());
    }

    #[test]
    fn non_increasing_timestamps() {
        let p = PoseSample::from_quaternion(5, [0.0, 0.0, 0.0, 1.0], Vec3::zeros());
        assert!(Trajectory::new(vec![p, p]).is_err());
    }

    fn scalar_seq(values: &[f64]) -> Vec<VelocitySample<f64>> {
        values
            .iter()
            .enumerate()
            .map(|(i, &x)| VelocitySample {
                timestamp: i as u64,
                v: Vec3::new(x, 0.0, 0.0),
                omega: Vec3::new(0.0, 0.0, x),
            })
            .collect()
    }

    #[test]
    fn moving_average_with_truncation() {
        let out = smooth_velocities(&scalar_seq(&[0.0, 1.0, 0.0, 1.0, 0.0]), 1);
        let expected = [0.5, 1.0 / 3.0, 2.0 / 3.0, 1.0 / 3.0, 0.5];
        for (o, e) in out.iter().zip(expected) {
            assert!((o.v.x() - e).abs() < 1e-15);
            assert!((o.omega.z() - e).abs() < 1e-15);
        }
    }

    #[test]
    fn moving_average_identities() {
        let seq = scalar_seq(&[0.3, -1.0, 2.0]);
        assert_eq!(smooth_velocities(&seq, 0), seq);
        let c = scalar_seq(&[2.5; 6]);
        assert_eq!(smooth_velocities(&c, 3), c);
    }

    #[test]
    fn interval_velocity_of_linear_motion_ignores_smoothing() {
        let times: Vec<u64> = (0..=20).map(|k| k * 10_000).collect();
        let tr = traj_from(|t| (Mat3::identity(), Vec3::new(0.0, 2.0 * t, 0.0)), &times);
        let v = interval_velocity(&tr, 50_000, 60_000, 5).unwrap();
        assert!((v.v - Vec3::new(0.0, 2.0, 0.0)).norm() < 1e-9);
    }
}
