use std::io::Write;

use super::{content_lines, parse_field, split_fields};
use crate::error::{Error, Result};
use crate::event::{Event, EventStream, Polarity};

/// Parses `t,x,y,p` lines (`p` in `{0, 1}`, `0` meaning negative).
pub fn read_events(text: &str, width: usize, height: usize) -> Result<EventStream> {
    let mut events = Vec::new();
    let mut previous = 0u64;
    for (line, content) in content_lines(text) {
        let f = split_fields(content, 4, line)?;
        let t: u64 = parse_field(f[0], "timestamp", line)?;
        let x: i64 = parse_field(f[1], "x", line)?;
        let y: i64 = parse_field(f[2], "y", line)?;
        let p = match f[3] {
            "1" => Polarity::Positive,
            "0" => Polarity::Negative,
            other => return Err(Error::Parse { line, message: format!("polarity must be 0 or 1, found {other:?}") }),
        };
        if x < 0 || y < 0 || x as usize >= width || y as usize >= height || x > u16::MAX as i64 || y > u16::MAX as i64 {
            return Err(Error::OutOfBounds { line, x, y, width, height });
        }
        if t < previous {
            return Err(Error::Unsorted { line, t, previous });
        }
        previous = t;
        events.push(Event::new(x as u16, y as u16, t, p));
    }
    Ok(EventStream { width, height, events })
}

pub fn write_events<W: Write>(stream: &EventStream, mut out: W) -> Result<()> {
    for e in &stream.events {
        writeln!(out, "{},{},{},{}", e.t, e.x, e.y, e.p.bit())?;
    }
    Ok(())
}
