//! Power-of-two 2×2 average pooling for frames and flow fields.

use crate::error::{Error, Result};
use crate::grid::{FlowField, Frame};
use crate::scalar::Scalar;

fn levels_for(width: usize, height: usize, factor: usize) -> Result<u32> {
    if factor == 0 || !factor.is_power_of_two() {
        return Err(Error::InvalidArgument(format!("factor {factor} is not a power of two")));
    }
    if !width.is_multiple_of(factor) || !height.is_multiple_of(factor) || width == 0 || height == 0 {
        return Err(Error::NotDivisible { width, height, factor });
    }
    Ok(factor.trailing_zeros())
}

fn halve_frame<T: Scalar>(f: &Frame<T>) -> Frame<T> {
    let quarter = T::lit(0.25);
    let mut out = Frame::from_fn(f.width / 2, f.height / 2, |x, y| {
        let (sx, sy) = (2 * x, 2 * y);
        (f.at(sx, sy) + f.at(sx + 1, sy) + f.at(sx, sy + 1) + f.at(sx + 1, sy + 1)) * quarter
    });
    out.timestamp = f.timestamp;
    out
}

pub fn downsample_frame<T: Scalar>(frame: &Frame<T>, factor: usize) -> Result<Frame<T>> {
    let levels = levels_for(frame.width, frame.height, factor)?;
    let mut out = frame.clone();
    for _ in 0..levels {
        out = halve_frame(&out);
    }
    Ok(out)
}

/// A coarse pixel averages its valid children (invalid if none are valid);
/// displacements are halved per level.
fn halve_flow<T: Scalar>(f: &FlowField<T>) -> FlowField<T> {
    let (w, h) = (f.width / 2, f.height / 2);
    let mut out = FlowField::zeros(w, h);
    let half = T::lit(0.5);
    for y in 0..h {
        for x in 0..w {
            let (mut su, mut sv, mut n) = (T::zero(), T::zero(), 0usize);
            for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                let i = (2 * y + dy) * f.width + 2 * x + dx;
                if f.valid[i] {
                    su = su + f.u[i];
                    sv = sv + f.v[i];
                    n += 1;
                }
            }
            let o = y * w + x;
            if n == 0 {
                out.valid[o] = false;
            } else {
                let k = half / T::from_count(n);
                out.u[o] = su * k;
                out.v[o] = sv * k;
            }
        }
    }
    out
}

pub fn downsample_flow<T: Scalar>(flow: &FlowField<T>, factor: usize) -> Result<FlowField<T>> {
    let levels = levels_for(flow.width, flow.height, factor)?;
    let mut out = flow.clone();
    for _ in 0..levels {
        out = halve_flow(&out);
    }
    Ok(out)
}
