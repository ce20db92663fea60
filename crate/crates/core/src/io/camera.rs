//! Camera calibration as a JSON object with the nine scalars
//! `fx, fy, cx, cy, k1, k2, p1, p2, k3` (distortion terms default to 0).

use crate::error::Result;
use crate::motion::CameraModel;

pub fn read_camera(text: &str) -> Result<CameraModel<f64>> {
    let cam: CameraModel<f64> = serde_json::from_str(text)?;
    cam.validate()?;
    Ok(cam)
}

pub fn write_camera(cam: &CameraModel<f64>) -> Result<String> {
    Ok(serde_json::to_string_pretty(cam)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_nine_scalars() {
        let cam =
            read_camera(r#"{"fx":200,"fy":201,"cx":32,"cy":24,"k1":-0.2,"k2":0.05,"p1":0,"p2":0,"k3":0}"#).unwrap();
        assert_eq!(cam.k1, -0.2);
        assert_eq!(read_camera(&write_camera(&cam).unwrap()).unwrap(), cam);
    }

    #[test]
    fn rejects_missing_intrinsics() {
        assert!(read_camera(r#"{"fx":200,"fy":201,"cx":32}"#).is_err());
        assert!(read_camera(r#"{"fx":-1,"fy":201,"cx":32,"cy":1}"#).is_err());
    }
}
