//! Lossless event-image dump: `EVIMAGE <width> <height> 4\n` followed by the
//! four channels (count_pos, count_neg, ts_pos, ts_neg), each a full
//! row-major plane of `f64` LE values.

use super::depth::{cells, parse_dims};
use super::{ensure_payload, header_line};
use crate::error::{Error, Result};
use crate::event_image::EventImage;
use crate::scalar::Scalar;

pub fn write_event_image<T: Scalar>(img: &EventImage<T>) -> Vec<u8> {
    let mut out = format!("EVIMAGE {} {} 4\n", img.width, img.height).into_bytes();
    let counts = [&img.count_pos, &img.count_neg];
    for ch in counts {
        for &c in ch.iter() {
            out.extend_from_slice(&(c as f64).to_le_bytes());
        }
    }
    for ch in [&img.ts_pos, &img.ts_neg] {
        for &t in ch.iter() {
            out.extend_from_slice(&t.to_f64_lossy().to_le_bytes());
        }
    }
    out
}

pub fn read_event_image(bytes: &[u8]) -> Result<EventImage<f64>> {
    let (header, payload) = header_line(bytes, 128)?;
    let f = parse_dims(header, "EVIMAGE", 3)?;
    if f[2] != 4 {
        return Err(Error::Format(format!("expected 4 channels, found {}", f[2])));
    }
    let (width, height, n) = cells(f[0], f[1])?;
    ensure_payload(payload, n * 8 * 4)?;
    let mut planes = payload
        .chunks_exact(n * 8)
        .map(|plane| plane.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect::<Vec<_>>());
    let counts = |plane: Vec<f64>| -> Result<Vec<u32>> {
        plane
            .into_iter()
            .map(|c| {
                if c >= 0.0 && c <= u32::MAX as f64 && c.fract() == 0.0 {
                    Ok(c as u32)
                } else {
                    Err(Error::Format(format!("invalid event count {c}")))
                }
            })
            .collect()
    };
    let count_pos = counts(planes.next().unwrap())?;
    let count_neg = counts(planes.next().unwrap())?;
    Ok(EventImage {
        width,
        height,
        count_pos,
        count_neg,
        ts_pos: planes.next().unwrap(),
        ts_neg: planes.next().unwrap(),
    })
}
