//! Readers and writers for every on-disk format the toolkit exchanges.
//!
//! All binary fields are little-endian. Text formats are comma separated;
//! blank lines and lines starting with `#` are skipped.

pub mod camera;
pub mod depth;
pub mod event_image;
pub mod events;
pub mod flo;
pub mod pgm;
pub mod trajectory;

pub use camera::{read_camera, write_camera};
pub use depth::{read_depth, write_depth};
pub use event_image::{read_event_image, write_event_image};
pub use events::{read_events, write_events};
pub use flo::{read_flo, write_flo};
pub use pgm::{read_frame_index, read_frame_pgm, write_frame_pgm, FrameIndexEntry};
pub use trajectory::{read_trajectory, write_trajectory};

use crate::error::{Error, Result};

/// Iterates `(line_number, trimmed_line)` over content lines.
pub(crate) fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub(crate) fn split_fields(line: &str, n: usize, lineno: usize) -> Result<Vec<&str>> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != n {
        return Err(Error::Parse { line: lineno, message: format!("expected {n} fields, found {}", fields.len()) });
    }
    Ok(fields)
}

pub(crate) fn parse_field<T: std::str::FromStr>(field: &str, name: &str, lineno: usize) -> Result<T> {
    field.parse().map_err(|_| Error::Parse { line: lineno, message: format!("invalid {name} {field:?}") })
}

/// Reads an ASCII header line terminated by `\n` (at most `limit` bytes).
pub(crate) fn header_line(bytes: &[u8], limit: usize) -> Result<(&str, &[u8])> {
    let end = bytes
        .iter()
        .take(limit)
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("missing header terminator".into()))?;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| Error::Format("header is not ASCII".into()))?;
    Ok((header, &bytes[end + 1..]))
}

pub(crate) fn ensure_payload(payload: &[u8], expected: usize) -> Result<()> {
    if payload.len() < expected {
        return Err(Error::Truncated { expected, found: payload.len() });
    }
    if payload.len() > expected {
        return Err(Error::Format(format!("{} trailing bytes after payload", payload.len() - expected)));
    }
    Ok(())
}
