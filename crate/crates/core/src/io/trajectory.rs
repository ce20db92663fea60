//! Pose CSV: `t,px,py,pz,qx,qy,qz,qw` with a Hamilton quaternion, `w` last.

use std::io::Write;

use super::{content_lines, parse_field, split_fields};
use crate::error::{Error, Result};
use crate::linalg::Vec3;
use crate::motion::{PoseSample, Trajectory};
use crate::scalar::Scalar;

const NORM_TOLERANCE: f64 = 1e-6;

/// Quaternions within 1e-6 of unit norm are normalized; others are rejected.
pub fn read_trajectory<T: Scalar>(text: &str) -> Result<Trajectory<T>> {
    let mut samples: Vec<PoseSample<T>> = Vec::new();
    for (line, content) in content_lines(text) {
        let f = split_fields(content, 8, line)?;
        let t: u64 = parse_field(f[0], "timestamp", line)?;
        let mut vals = [0.0f64; 7];
        for (dst, (src, name)) in vals.iter_mut().zip(f[1..].iter().zip(["px", "py", "pz", "qx", "qy", "qz", "qw"])) {
            *dst = parse_field(src, name, line)?;
            if !dst.is_finite() {
                return Err(Error::Parse { line, message: format!("non-finite {name}") });
            }
        }
        let q = [vals[3], vals[4], vals[5], vals[6]];
        let norm = q.iter().map(|c| c * c).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::NonUnitQuaternion { line, norm });
        }
        if let Some(last) = samples.last() {
            if t <= last.timestamp {
                return Err(Error::Parse {
                    line,
                    message: format!("timestamp {t} does not increase past {}", last.timestamp),
                });
            }
        }
        samples.push(PoseSample::from_quaternion(
            t,
            q.map(T::lit),
            Vec3::new(T::lit(vals[0]), T::lit(vals[1]), T::lit(vals[2])),
        ));
    }
    Trajectory::new(samples)
}

/// Writes each sample's stored quaternion, so a read trajectory re-reads to
/// identical values.
pub fn write_trajectory<T: Scalar, W: Write>(traj: &Trajectory<T>, mut out: W) -> Result<()> {
    for s in traj.samples() {
        let p = s.translation.0.map(|c| c.to_f64_lossy());
        let q = s.quaternion.map(|c| c.to_f64_lossy());
        writeln!(out, "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?}", s.timestamp, p[0], p[1], p[2], q[0], q[1], q[2], q[3])?;
    }
    Ok(())
}
