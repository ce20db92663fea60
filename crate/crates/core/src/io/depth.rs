//! `EVDEPTH <width> <height> <timestamp>\n` followed by row-major `f32` LE
//! depths in meters. NaN marks "no depth".

use super::{ensure_payload, header_line};
use crate::error::{Error, Result};
use crate::motion::DepthMap;
use crate::scalar::Scalar;

pub(crate) fn parse_dims(header: &str, magic: &str, count: usize) -> Result<Vec<u64>> {
    let mut parts = header.split(' ');
    if parts.next() != Some(magic) {
        return Err(Error::Format(format!("expected {magic} header")));
    }
    let fields: Vec<u64> = parts
        .map(|p| p.parse().map_err(|_| Error::Format(format!("bad {magic} header field {p:?}"))))
        .collect::<Result<_>>()?;
    if fields.len() != count {
        return Err(Error::Format(format!("{magic} header needs {count} fields")));
    }
    Ok(fields)
}

pub(crate) fn cells(width: u64, height: u64) -> Result<(usize, usize, usize)> {
    let w = usize::try_from(width).map_err(|_| Error::Format("width too large".into()))?;
    let h = usize::try_from(height).map_err(|_| Error::Format("height too large".into()))?;
    let n = w.checked_mul(h).filter(|n| n.checked_mul(8).is_some());
    Ok((w, h, n.ok_or_else(|| Error::Format("dimensions overflow".into()))?))
}

pub fn read_depth<T: Scalar>(bytes: &[u8]) -> Result<DepthMap<T>> {
    let (header, payload) = header_line(bytes, 128)?;
    let f = parse_dims(header, "EVDEPTH", 3)?;
    let (width, height, n) = cells(f[0], f[1])?;
    ensure_payload(payload, n * 4)?;
    let depths: Vec<T> = payload
        .chunks_exact(4)
        .map(|c| T::from_f32(f32::from_le_bytes(c.try_into().unwrap())).unwrap_or(T::nan()))
        .collect();
    DepthMap::new(width, height, f[2], depths).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_depth<T: Scalar>(depth: &DepthMap<T>) -> Vec<u8> {
    let mut out = format!("EVDEPTH {} {} {}\n", depth.width, depth.height, depth.timestamp).into_bytes();
    out.reserve(depth.depths.len() * 4);
    for d in &depth.depths {
        out.extend_from_slice(&d.to_f32().unwrap_or(f32::NAN).to_le_bytes());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_nan() {
        let d = DepthMap::new(2, 2, 123, vec![1.5f64, f64::NAN, 2.25, 10.0]).unwrap();
        let bytes = write_depth(&d);
        assert!(bytes.starts_with(b"EVDEPTH 2 2 123\n"));
        let back: DepthMap<f64> = read_depth(&bytes).unwrap();
        assert_eq!(back.timestamp, 123);
        assert!(back.depths[1].is_nan());
        assert_eq!(write_depth(&back), bytes);
    }

    #[test]
    fn truncated_and_bad_magic() {
        let d = DepthMap::constant(2, 2, 0, 1.0f32);
        let bytes = write_depth(&d);
        assert!(matches!(
            read_depth::<f32>(&bytes[..bytes.len() - 1]),
            Err(Error::Truncated { expected: 16, found: 15 })
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_depth::<f32>(&bad), Err(Error::Format(_))));
        assert!(read_depth::<f32>(b"EVDEPTH 2 2\n").is_err());
    }
}
