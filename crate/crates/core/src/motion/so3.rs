//! Rotation matrices: hat/vee maps, exponential and logarithm, quaternions.

use crate::error::{Error, Result};
use crate::linalg::{Mat3, Vec3};
use crate::scalar::Scalar;

/// Closest a rotation angle may get to π before the logarithm is refused.
pub const LOG_PI_MARGIN: f64 = 1e-6;

/// Maps `ω` to the skew-symmetric matrix `ω^` with `ω^ v = ω × v`.
pub fn skew<T: Scalar>(w: &Vec3<T>) -> Mat3<T> {
    let z = T::zero();
    let [x, y, zz] = w.0;
    Mat3([[z, -zz, y], [zz, z, -x], [-y, x, z]])
}

/// Inverse of [`skew`]; fails unless `m` is antisymmetric within 1e-9.
pub fn unskew<T: Scalar>(m: &Mat3<T>) -> Result<Vec3<T>> {
    let deviation = m.0.iter().enumerate().fold(T::zero(), |acc, (r, row)| {
        row.iter().enumerate().fold(acc, |acc, (c, &v)| acc.max((v + m.0[c][r]).abs()))
    });
    if !(deviation <= T::lit(1e-9)) {
        return Err(Error::NotAntisymmetric { deviation: deviation.to_f64_lossy() });
    }
    Ok(vee(m))
}

/// Antisymmetric part read back as a vector, without validation.
fn vee<T: Scalar>(m: &Mat3<T>) -> Vec3<T> {
    let half = T::lit(0.5);
    Vec3([(m[(2, 1)] - m[(1, 2)]) * half, (m[(0, 2)] - m[(2, 0)]) * half, (m[(1, 0)] - m[(0, 1)]) * half])
}

/// Rodrigues' formula: `exp(ω^)`.
pub fn rotation_exp<T: Scalar>(w: &Vec3<T>) -> Mat3<T> {
    let theta2 = w.dot(w);
    let theta = theta2.sqrt();
    let k = skew(w);
    let (a, b) = if theta < T::lit(1e-4) {
        // sin(θ)/θ and (1 - cos θ)/θ² by Taylor expansion
        (T::one() - theta2 / T::lit(6.0), T::lit(0.5) - theta2 / T::lit(24.0))
    } else {
        (theta.sin() / theta, (T::one() - theta.cos()) / theta2)
    };
    Mat3::identity() + k.scale(a) + (k * k).scale(b)
}

/// Principal matrix logarithm of a rotation, returned as `ω` with
/// `ω^ = logm(R)`. Angles within [`LOG_PI_MARGIN`] of π are refused because
/// the axis is ambiguous there.
pub fn rotation_log<T: Scalar>(r: &Mat3<T>) -> Result<Vec3<T>> {
    // sin(θ)·axis and cos(θ); atan2 keeps full precision at small angles
    let s_axis = vee(r);
    let sin = s_axis.norm();
    let cos = (r.trace() - T::one()) * T::lit(0.5);
    let theta = sin.atan2(cos);
    if theta >= T::lit(std::f64::consts::PI - LOG_PI_MARGIN) || !theta.is_finite() {
        return Err(Error::RotationNearPi { angle: theta.to_f64_lossy() });
    }
    let factor = if theta < T::lit(1e-4) {
        let t2 = theta * theta;
        T::one() + t2 / T::lit(6.0) + T::lit(7.0 / 360.0) * t2 * t2
    } else {
        theta / sin
    };
    Ok(s_axis.scale(factor))
}

/// Geodesic interpolation `a · exp(s · log(aᵀ b))` for `s ∈ [0, 1]`.
pub fn slerp<T: Scalar>(a: &Mat3<T>, b: &Mat3<T>, s: T) -> Result<Mat3<T>> {
    let delta = rotation_log(&(a.transpose() * *b))?;
    Ok(*a * rotation_exp(&delta.scale(s)))
}

/// Hamilton unit quaternion `(x, y, z, w)` to rotation matrix. The input is
/// assumed normalized.
pub fn quaternion_to_matrix<T: Scalar>(q: [T; 4]) -> Mat3<T> {
    let [x, y, z, w] = q;
    let one = T::one();
    let two = T::lit(2.0);
    Mat3([
        [one - two * (y * y + z * z), two * (x * y - z * w), two * (x * z + y * w)],
        [two * (x * y + z * w), one - two * (x * x + z * z), two * (y * z - x * w)],
        [two * (x * z - y * w), two * (y * z + x * w), one - two * (x * x + y * y)],
    ])
}

/// Rotation matrix to Hamilton quaternion `(x, y, z, w)` with `w ≥ 0`.
pub fn matrix_to_quaternion<T: Scalar>(r: &Mat3<T>) -> [T; 4] {
    let m = &r.0;
    let one = T::one();
    let quarter = T::lit(0.25);
    let two = T::lit(2.0);
    let tr = r.trace();
    let q = if tr > T::zero() {
        let s = (tr + one).sqrt() * two;
        [(m[2][1] - m[1][2]) / s, (m[0][2] - m[2][0]) / s, (m[1][0] - m[0][1]) / s, quarter * s]
    } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
        let s = (one + m[0][0] - m[1][1] - m[2][2]).sqrt() * two;
        [quarter * s, (m[0][1] + m[1][0]) / s, (m[0][2] + m[2][0]) / s, (m[2][1] - m[1][2]) / s]
    } else if m[1][1] > m[2][2] {
        let s = (one + m[1][1] - m[0][0] - m[2][2]).sqrt() * two;
        [(m[0][1] + m[1][0]) / s, quarter * s, (m[1][2] + m[2][1]) / s, (m[0][2] - m[2][0]) / s]
    } else {
        let s = (one + m[2][2] - m[0][0] - m[1][1]).sqrt() * two;
        [(m[0][2] + m[2][0]) / s, (m[1][2] + m[2][1]) / s, quarter * s, (m[1][0] - m[0][1]) / s]
    };
    if q[3] < T::zero() {
        q.map(|c| -c)
    } else {
        q
    }
}

/// Checks `RᵀR = I` and `det R = +1` within `tol`.
pub fn is_rotation<T: Scalar>(r: &Mat3<T>, tol: T) -> bool {
    (r.transpose() * *r).max_abs_diff(&Mat3::identity()) <= tol && (r.determinant() - T::one()).abs() <= tol
}
