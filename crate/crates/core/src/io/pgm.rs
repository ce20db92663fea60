//! Binary 8-bit PGM (`P5`) frames plus the `timestamp,filename` sidecar index.

use super::{content_lines, ensure_payload, parse_field, split_fields};
use crate::error::{Error, Result};
use crate::grid::Frame;
use crate::scalar::Scalar;

struct Header {
    width: usize,
    height: usize,
    maxval: u32,
    data_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::Format("PGM magic must be \"P5\"".into()));
    }
    let mut pos = 2;
    let mut values = [0u64; 3];
    for value in values.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(Error::Format("truncated PGM header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("expected a number in PGM header".into()));
        }
        *value = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("PGM header number out of range".into()))?;
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::Format("missing whitespace after PGM maxval".into())),
    }
    let [width, height, maxval] = values;
    if width == 0 || height == 0 {
        return Err(Error::Format("PGM dimensions must be positive".into()));
    }
    Ok(Header {
        width: usize::try_from(width).map_err(|_| Error::Format("PGM width too large".into()))?,
        height: usize::try_from(height).map_err(|_| Error::Format("PGM height too large".into()))?,
        maxval: u32::try_from(maxval).unwrap_or(u32::MAX),
        data_start: pos,
    })
}

/// Decodes a `P5` image with maxval 255; intensities are scaled to `[0, 1]`.
/// The timestamp is left at 0; see [`read_frame_index`].
pub fn read_frame_pgm<T: Scalar>(bytes: &[u8]) -> Result<Frame<T>> {
    let header = parse_header(bytes)?;
    if header.maxval != 255 {
        return Err(Error::UnsupportedMaxval(header.maxval));
    }
    let n = header.width.checked_mul(header.height).ok_or_else(|| Error::Format("PGM dimensions overflow".into()))?;
    let payload = &bytes[header.data_start..];
    ensure_payload(payload, n)?;
    let scale = T::lit(255.0);
    let pixels = payload.iter().map(|&b| T::lit(b as f64) / scale).collect();
    Frame::new(header.width, header.height, 0, pixels)
}

/// Quantizes to 8 bits (round to nearest, clamped to `[0, 255]`).
pub fn write_frame_pgm<T: Scalar>(frame: &Frame<T>) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    out.extend(frame.pixels.iter().map(|&v| to_byte(v.to_f64_lossy() * 255.0)));
    out
}

pub(crate) fn to_byte(v: f64) -> u8 {
    if v.is_nan() {
        0
    } else {
        v.round_ties_even().clamp(0.0, 255.0) as u8
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameIndexEntry {
    pub timestamp: u64,
    pub filename: String,
}

/// Parses the `timestamp,filename` sidecar that timestamps PGM frames.
pub fn read_frame_index(text: &str) -> Result<Vec<FrameIndexEntry>> {
    let mut entries: Vec<FrameIndexEntry> = Vec::new();
    for (line, content) in content_lines(text) {
        let f = split_fields(content, 2, line)?;
        let timestamp = parse_field(f[0], "timestamp", line)?;
        if f[1].is_empty() {
            return Err(Error::Parse { line, message: "empty filename".into() });
        }
        if let Some(last) = entries.last() {
            if timestamp < last.timestamp {
                return Err(Error::Unsorted { line, t: timestamp, previous: last.timestamp });
            }
        }
        entries.push(FrameIndexEntry { timestamp, filename: f[1].to_string() });
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pgm(header: &str, payload: &[u8]) -> Vec<u8> {
        let mut v = header.as_bytes().to_vec();
        v.extend_from_slice(payload);
        v
    }

    #[test]
    fn scales_by_255() {
        let f: Frame<f64> = read_frame_pgm(&pgm("P5\n2 1\n255\n", &[0, 255])).unwrap();
        assert_eq!(f.pixels, vec![0.0, 1.0]);
        let f: Frame<f64> = read_frame_pgm(&pgm("P5 1 1 255\n", &[128])).unwrap();
        assert_eq!(f.pixels, vec![128.0 / 255.0]);
    }

    #[test]
    fn header_comments() {
        let f: Frame<f32> = read_frame_pgm(&pgm("P5\n# made by hand\n1 2\n255\n", &[0, 51])).unwrap();
        assert_eq!(f.dims(), (1, 2));
        assert_eq!(f.pixels[1], 0.2);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            read_frame_pgm::<f64>(&pgm("P5\n1 1\n65535\n", &[0, 0])),
            Err(Error::UnsupportedMaxval(65535))
        ));
        assert!(matches!(read_frame_pgm::<f64>(&pgm("P2\n1 1\n255\n", &[0])), Err(Error::Format(_))));
        assert!(matches!(
            read_frame_pgm::<f64>(&pgm("P5\n2 2\n255\n", &[0, 1, 2])),
            Err(Error::Truncated { expected: 4, found: 3 })
        ));
        assert!(read_frame_pgm::<f64>(b"P5\n2 2").is_err());
        assert!(read_frame_pgm::<f64>(b"").is_err());
    }

    #[test]
    fn write_then_read_is_identity_on_8bit_values() {
        let f = Frame::new(3, 1, 0, vec![0.0, 17.0 / 255.0, 1.0]).unwrap();
        let bytes = write_frame_pgm(&f);
        assert_eq!(read_frame_pgm::<f64>(&bytes).unwrap(), f);
    }

    #[test]
    fn index_file() {
        let idx = read_frame_index("0,frame0.pgm\n33000,frame1.pgm\n").unwrap();
        assert_eq!(idx[1].timestamp, 33000);
        assert_eq!(idx[1].filename, "frame1.pgm");
        assert!(read_frame_index("5,a\n4,b\n").is_err());
    }
}
