//! Endpoint error and outlier rate over an evaluation mask.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{ensure_same_dims, FlowField, Mask};
use crate::scalar::Scalar;

/// Endpoint error threshold of the outlier rule, pixels.
pub const OUTLIER_ABS: f64 = 3.0;
/// Relative endpoint error threshold of the outlier rule.
pub const OUTLIER_REL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalReport {
    pub aee: f64,
    pub outlier_pct: f64,
    pub evaluated_pixel_count: usize,
    /// Share of all pixels that were evaluated.
    pub evaluated_fraction: f64,
}

/// Per-pixel `‖pred − gt‖₂`, `None` where either field is invalid.
pub fn endpoint_error_map<T: Scalar>(pred: &FlowField<T>, gt: &FlowField<T>) -> Result<Vec<Option<T>>> {
    ensure_same_dims(gt.dims(), pred.dims())?;
    Ok((0..pred.len())
        .into_par_iter()
        .map(|i| (pred.valid[i] && gt.valid[i]).then(|| (pred.u[i] - gt.u[i]).hypot(pred.v[i] - gt.v[i])))
        .collect())
}

/// True iff `ee > 3` px and `ee > 0.05·‖gt‖`.
#[inline]
pub fn is_outlier<T: Scalar>(ee: T, gt_norm: T) -> bool {
    ee > T::lit(OUTLIER_ABS) && ee > T::lit(OUTLIER_REL) * gt_norm
}

/// Scores `pred` against `gt` over pixels where the mask (all-true if absent)
/// and both fields are valid.
pub fn evaluate<T: Scalar>(pred: &FlowField<T>, gt: &FlowField<T>, mask: Option<&Mask>) -> Result<EvalReport> {
    let ee = endpoint_error_map(pred, gt)?;
    if let Some(m) = mask {
        ensure_same_dims(gt.dims(), m.dims())?;
    }
    let mut sum = 0.0f64;
    let mut count = 0usize;
    let mut outliers = 0usize;
    for (i, e) in ee.iter().enumerate() {
        let Some(e) = *e else { continue };
        if mask.is_some_and(|m| !m.data[i]) {
            continue;
        }
        count += 1;
        sum += e.to_f64_lossy();
        if is_outlier(e, gt.u[i].hypot(gt.v[i])) {
            outliers += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyEvaluation);
    }
    Ok(EvalReport {
        aee: sum / count as f64,
        outlier_pct: 100.0 * outliers as f64 / count as f64,
        evaluated_pixel_count: count,
        evaluated_fraction: count as f64 / gt.len() as f64,
    })
}
