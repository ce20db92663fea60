//! Four-channel event image: per-polarity event counts and the normalized
//! timestamp of the most recent event of each polarity.

use crate::error::{Error, Result};
use crate::event::{Event, EventStream, Polarity};
use crate::grid::Mask;
use crate::scalar::Scalar;

/// Events from the half-open interval `[t_start, t_end)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventWindow {
    pub width: usize,
    pub height: usize,
    pub t_start: u64,
    pub t_end: u64,
    pub events: Vec<Event>,
}

impl EventWindow {
    /// Validates the interval and that every event lies inside it and inside
    /// the sensor.
    pub fn new(width: usize, height: usize, t_start: u64, t_end: u64, events: Vec<Event>) -> Result<Self> {
        if t_start >= t_end {
            return Err(Error::InvalidWindow { t_start, t_end });
        }
        if let Some(e) = events.iter().find(|e| e.t < t_start || e.t >= t_end) {
            return Err(Error::InvalidArgument(format!("event at t={} outside window [{t_start}, {t_end})", e.t)));
        }
        if let Some((i, e)) = events.iter().enumerate().find(|(_, e)| e.x as usize >= width || e.y as usize >= height) {
            return Err(Error::OutOfBounds { line: i + 1, x: e.x.into(), y: e.y.into(), width, height });
        }
        Ok(Self { width, height, t_start, t_end, events })
    }

    pub fn duration(&self) -> u64 {
        self.t_end - self.t_start
    }
}

/// Events with `t_start <= t < t_end`, in stream order.
pub fn slice_window(stream: &EventStream, t_start: u64, t_end: u64) -> Result<EventWindow> {
    if t_start >= t_end {
        return Err(Error::InvalidWindow { t_start, t_end });
    }
    let lo = stream.events.partition_point(|e| e.t < t_start);
    let hi = stream.events.partition_point(|e| e.t < t_end);
    Ok(EventWindow {
        width: stream.width,
        height: stream.height,
        t_start,
        t_end,
        events: stream.events[lo..hi.max(lo)].to_vec(),
    })
}

/// Channels are stored in the fixed order `(count_pos, count_neg, ts_pos,
/// ts_neg)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventImage<T> {
    pub width: usize,
    pub height: usize,
    pub count_pos: Vec<u32>,
    pub count_neg: Vec<u32>,
    pub ts_pos: Vec<T>,
    pub ts_neg: Vec<T>,
}

impl<T: Scalar> EventImage<T> {
    pub fn total_count(&self) -> u64 {
        self.count_pos.iter().chain(&self.count_neg).map(|&c| c as u64).sum()
    }
}

/// Builds the event image of a window.
///
/// Timestamps are normalized as `(t − t_start) / (t_end − t_start)`, so they
/// lie in `[0, 1)`; pixels without an event of a polarity hold 0. Because the
/// per-pixel value is a maximum, the result does not depend on event order,
/// and equal timestamps need no tie-break.
pub fn encode<T: Scalar>(window: &EventWindow) -> EventImage<T> {
    let n = window.width * window.height;
    let mut img = EventImage {
        width: window.width,
        height: window.height,
        count_pos: vec![0; n],
        count_neg: vec![0; n],
        ts_pos: vec![T::zero(); n],
        ts_neg: vec![T::zero(); n],
    };
    let duration = T::lit(window.duration() as f64);
    for e in &window.events {
        let i = e.y as usize * window.width + e.x as usize;
        let ts = T::lit((e.t - window.t_start) as f64) / duration;
        let (count, latest) = match e.p {
            Polarity::Positive => (&mut img.count_pos[i], &mut img.ts_pos[i]),
            Polarity::Negative => (&mut img.count_neg[i], &mut img.ts_neg[i]),
        };
        *count += 1;
        *latest = latest.max(ts);
    }
    img
}

/// True where at least one event of either polarity fired.
pub fn event_mask(window: &EventWindow) -> Mask {
    let mut mask = Mask::new(window.width, window.height, false);
    for e in &window.events {
        mask.set(e.x as usize, e.y as usize, true);
    }
    mask
}
