//! Middlebury `.flo`: `PIEH`, width and height as `i32` LE, then interleaved
//! `(u, v)` `f32` LE values, row-major. Invalid pixels are stored as
//! `(1e9, 1e9)`; any component above `1e8` in magnitude reads back invalid.

use crate::error::{Error, Result};
use crate::grid::FlowField;
use crate::scalar::Scalar;

const MAGIC: &[u8; 4] = b"PIEH";
pub const INVALID_SENTINEL: f32 = 1e9;
pub const INVALID_THRESHOLD: f32 = 1e8;

pub fn read_flo<T: Scalar>(bytes: &[u8]) -> Result<FlowField<T>> {
    if bytes.len() < 12 {
        return Err(Error::Truncated { expected: 12, found: bytes.len() });
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format("flo magic must be \"PIEH\"".into()));
    }
    let width = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let height = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if width <= 0 || height <= 0 {
        return Err(Error::Format(format!("invalid flo dimensions {width}x{height}")));
    }
    let n = (width as usize)
        .checked_mul(height as usize)
        .and_then(|n| n.checked_mul(8).map(|_| n))
        .ok_or_else(|| Error::Format("flo dimensions overflow".into()))?;
    super::ensure_payload(&bytes[12..], n * 8)?;
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    let mut valid = Vec::with_capacity(n);
    for c in bytes[12..].chunks_exact(8) {
        let a = f32::from_le_bytes(c[..4].try_into().unwrap());
        let b = f32::from_le_bytes(c[4..].try_into().unwrap());
        let ok = a.is_finite() && b.is_finite() && a.abs() <= INVALID_THRESHOLD && b.abs() <= INVALID_THRESHOLD;
        valid.push(ok);
        u.push(if ok { T::from_f32(a).unwrap() } else { T::zero() });
        v.push(if ok { T::from_f32(b).unwrap() } else { T::zero() });
    }
    FlowField::new(width as usize, height as usize, u, v, valid)
}

pub fn write_flo<T: Scalar>(flow: &FlowField<T>) -> Result<Vec<u8>> {
    let w = i32::try_from(flow.width).map_err(|_| Error::InvalidArgument("flow too wide".into()))?;
    let h = i32::try_from(flow.height).map_err(|_| Error::InvalidArgument("flow too tall".into()))?;
    let mut out = Vec::with_capacity(12 + flow.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&w.to_le_bytes());
    out.extend_from_slice(&h.to_le_bytes());
    for i in 0..flow.len() {
        let (a, b) = if flow.valid[i] {
            (flow.u[i].to_f32().unwrap_or(f32::NAN), flow.v[i].to_f32().unwrap_or(f32::NAN))
        } else {
            (INVALID_SENTINEL, INVALID_SENTINEL)
        };
        out.extend_from_slice(&a.to_le_bytes());
        out.extend_from_slice(&b.to_le_bytes());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pixel_layout() {
        let f = FlowField::constant(1, 1, 1.5f64, -2.0);
        let bytes = write_flo(&f).unwrap();
        let mut expected = b"PIEH".to_vec();
        for x in [1i32, 1] {
            expected.extend_from_slice(&x.to_le_bytes());
        }
        for x in [1.5f32, -2.0] {
            expected.extend_from_slice(&x.to_le_bytes());
        }
        assert_eq!(bytes, expected);
        assert_eq!(read_flo::<f64>(&bytes).unwrap(), f);
    }

    #[test]
    fn invalid_pixels_use_sentinel() {
        let mut f = FlowField::constant(2, 1, 0.25f32, 0.5);
        f.valid[1] = false;
        let bytes = write_flo(&f).unwrap();
        assert_eq!(&bytes[20..24], &1e9f32.to_le_bytes());
        let back = read_flo::<f32>(&bytes).unwrap();
        assert_eq!(back.valid, vec![true, false]);
    }

    #[test]
    fn rejects_bad_magic_and_size() {
        let mut bytes = write_flo(&FlowField::<f64>::zeros(2, 2)).unwrap();
        assert!(read_flo::<f64>(&bytes[..bytes.len() - 4]).is_err());
        bytes.push(0);
        assert!(read_flo::<f64>(&bytes).is_err());
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(read_flo::<f64>(&bytes), Err(Error::Format(_))));
    }
}
