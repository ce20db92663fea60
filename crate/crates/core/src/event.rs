use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    /// Signed value, `+1` or `-1`.
    #[inline]
    pub fn sign(self) -> i8 {
        match self {
            Polarity::Positive => 1,
            Polarity::Negative => -1,
        }
    }

    /// Text-dump encoding: `1` for positive, `0` for negative.
    #[inline]
    pub fn bit(self) -> u8 {
        match self {
            Polarity::Positive => 1,
            Polarity::Negative => 0,
        }
    }
}

/// A single sensor event. `t` is in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub x: u16,
    pub y: u16,
    pub t: u64,
    pub p: Polarity,
}

impl Event {
    pub fn new(x: u16, y: u16, t: u64, p: Polarity) -> Self {
        Self { x, y, t, p }
    }
}

/// Time-ordered events from one sensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    pub width: usize,
    pub height: usize,
    pub events: Vec<Event>,
}

impl EventStream {
    /// Builds a stream after checking bounds and timestamp order.
    pub fn new(width: usize, height: usize, events: Vec<Event>) -> Result<Self> {
        let mut previous = 0;
        for (i, e) in events.iter().enumerate() {
            if e.x as usize >= width || e.y as usize >= height {
                return Err(Error::OutOfBounds { line: i + 1, x: e.x.into(), y: e.y.into(), width, height });
            }
            if e.t < previous {
                return Err(Error::Unsorted { line: i + 1, t: e.t, previous });
            }
            previous = e.t;
        }
        Ok(Self { width, height, events })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self { width, height, events: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}
