//! Self-supervised objective: Charbonnier photometric loss on the bilinearly
//! warped second frame plus a Charbonnier smoothness loss over 8-connected
//! neighbours, and its analytic gradient.
//!
//! Conventions:
//! * Samples that land outside `[0, w−1] × [0, h−1]` are clamped for the
//!   value but excluded from the photometric sum.
//! * Each unordered neighbour pair is counted once, by visiting the offsets
//!   [`NEIGHBOR_OFFSETS`] from every pixel.
//! * At integer sample coordinates the bilinear derivative is the right-hand
//!   limit (the left-hand one on the last row/column).
//! * Reductions are sequential in row-major order, so results are
//!   bit-reproducible regardless of thread count.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{ensure_same_dims, FlowField, Frame, Mask};
use crate::scalar::Scalar;

/// `(dx, dy)` offsets that enumerate each 8-neighbour pair exactly once.
pub const NEIGHBOR_OFFSETS: [(isize, isize); 4] = [(1, 0), (0, 1), (1, 1), (1, -1)];

/// Parameters of `ρ(x) = (x² + ε²)^α`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharbonnierParams<T> {
    pub alpha: T,
    pub epsilon: T,
}

impl<T: Scalar> Default for CharbonnierParams<T> {
    fn default() -> Self {
        Self { alpha: T::lit(0.45), epsilon: T::lit(1e-3) }
    }
}

impl<T: Scalar> CharbonnierParams<T> {
    pub fn new(alpha: T, epsilon: T) -> Result<Self> {
        let p = Self { alpha, epsilon };
        p.validate()?;
        Ok(p)
    }

    /// `α ∈ (0, 1]`, `ε ≥ 0` (`ε = 0` is the degenerate `|x|^{2α}` case).
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > T::zero() && self.alpha <= T::one()) {
            return Err(Error::InvalidArgument(format!("alpha {} outside (0, 1]", self.alpha)));
        }
        if !(self.epsilon >= T::zero() && self.epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!("epsilon {} must be non-negative", self.epsilon)));
        }
        Ok(())
    }
}

#[inline]
pub fn charbonnier<T: Scalar>(x: T, p: &CharbonnierParams<T>) -> T {
    (x * x + p.epsilon * p.epsilon).powf(p.alpha)
}

/// `ρ'(x) = 2αx (x² + ε²)^{α−1}`, taken as 0 at `x = 0`.
#[inline]
pub fn charbonnier_derivative<T: Scalar>(x: T, p: &CharbonnierParams<T>) -> T {
    if x == T::zero() {
        return T::zero();
    }
    T::lit(2.0) * p.alpha * x * (x * x + p.epsilon * p.epsilon).powf(p.alpha - T::one())
}

/// `ρ'(x) / x = 2α (x² + ε²)^{α−1}`: the weight of the quadratic that
/// majorizes `ρ` at `x` (for `α ≤ 1`).
#[inline]
pub fn charbonnier_weight<T: Scalar>(x: T, p: &CharbonnierParams<T>) -> T {
    T::lit(2.0) * p.alpha * (x * x + p.epsilon * p.epsilon).powf(p.alpha - T::one())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    /// Plain sums over pixels and pairs.
    #[default]
    Sum,
    /// Photometric sum divided by contributing pixels, smoothness sum divided
    /// by contributing pairs.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights<T> {
    /// Smoothness weight λ.
    pub lambda: T,
    pub reduction: Reduction,
}

impl<T: Scalar> Default for LossWeights<T> {
    fn default() -> Self {
        Self { lambda: T::lit(0.5), reduction: Reduction::Sum }
    }
}

impl<T: Scalar> LossWeights<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= T::zero() && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda {} must be finite and >= 0", self.lambda)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossBreakdown<T> {
    pub photometric: T,
    pub smoothness: T,
    pub total: T,
    pub valid_pixel_count: usize,
    pub pair_count: usize,
}

/// Bilinear sample and its spatial derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample<T> {
    pub value: T,
    pub dx: T,
    pub dy: T,
    pub in_bounds: bool,
}

fn cell<T: Scalar>(c: T, size: usize) -> (usize, usize, T) {
    if size < 2 {
        return (0, 0, T::zero());
    }
    let last = T::from_count(size - 1);
    let c = if c.is_nan() { T::zero() } else { c.max(T::zero()).min(last) };
    let i0 = c.floor().to_usize().unwrap_or(0).min(size - 2);
    (i0, i0 + 1, c - T::from_count(i0))
}

/// Bilinear interpolation at `(x, y)` with border clamping, plus the partial
/// derivatives of the interpolant.
pub fn bilinear_sample_with_gradient<T: Scalar>(image: &Frame<T>, x: T, y: T) -> Sample<T> {
    let (w, h) = image.dims();
    let in_bounds = x >= T::zero() && y >= T::zero() && x <= T::from_count(w - 1) && y <= T::from_count(h - 1);
    let (x0, x1, fx) = cell(x, w);
    let (y0, y1, fy) = cell(y, h);
    let i00 = image.at(x0, y0);
    let i10 = image.at(x1, y0);
    let i01 = image.at(x0, y1);
    let i11 = image.at(x1, y1);
    let one = T::one();
    let top = i00 + fx * (i10 - i00);
    let bottom = i01 + fx * (i11 - i01);
    let mut dx = (one - fy) * (i10 - i00) + fy * (i11 - i01);
    let mut dy = bottom - top;
    if w < 2 {
        dx = T::zero();
    }
    if h < 2 {
        dy = T::zero();
    }
    Sample { value: top + fy * (bottom - top), dx, dy, in_bounds }
}

/// Bilinear interpolation at `(x, y)`; `in_bounds` is false when the point
/// had to be clamped onto the image.
pub fn bilinear_sample<T: Scalar>(image: &Frame<T>, x: T, y: T) -> (T, bool) {
    let s = bilinear_sample_with_gradient(image, x, y);
    (s.value, s.in_bounds)
}

#[inline]
fn sample_at<T: Scalar>(image: &Frame<T>, flow: &FlowField<T>, x: usize, y: usize) -> Option<Sample<T>> {
    let i = y * flow.width + x;
    if !flow.valid[i] {
        return None;
    }
    let s = bilinear_sample_with_gradient(image, T::from_count(x) + flow.u[i], T::from_count(y) + flow.v[i]);
    s.in_bounds.then_some(s)
}

/// `warped(x, y) = I(x + u, y + v)`; the mask is false where the flow is
/// invalid or the sample left the image (those pixels keep `I(x, y)`).
pub fn warp<T: Scalar>(image: &Frame<T>, flow: &FlowField<T>) -> Result<(Frame<T>, Mask)> {
    ensure_same_dims(image.dims(), flow.dims())?;
    let (w, h) = image.dims();
    let mut warped = image.clone();
    let mut mask = Mask::new(w, h, false);
    for y in 0..h {
        for x in 0..w {
            if let Some(s) = sample_at(image, flow, x, y) {
                warped.pixels[y * w + x] = s.value;
                mask.set(x, y, true);
            }
        }
    }
    Ok((warped, mask))
}

fn check_inputs<T: Scalar>(i0: &Frame<T>, i1: &Frame<T>, flow: &FlowField<T>) -> Result<()> {
    ensure_same_dims(i0.dims(), i1.dims())?;
    ensure_same_dims(i0.dims(), flow.dims())?;
    if flow.is_empty() {
        return Err(Error::InvalidArgument("empty image".into()));
    }
    Ok(())
}

/// Rows of per-pixel `(residual, sample)`, `None` where the pixel does not count.
type TermRows<T> = Vec<Vec<Option<(T, Sample<T>)>>>;

/// Per-pixel photometric term: residual `I0 − warp(I1)` and the sample.
fn photometric_terms<T: Scalar>(i0: &Frame<T>, i1: &Frame<T>, flow: &FlowField<T>) -> TermRows<T> {
    let w = i0.width;
    (0..i0.height)
        .into_par_iter()
        .map(|y| (0..w).map(|x| sample_at(i1, flow, x, y).map(|s| (i0.at(x, y) - s.value, s))).collect())
        .collect()
}

/// Sum of `ρ(I0 − warp(I1))` over pixels whose flow is valid and whose
/// sample stays inside the image, and the number of such pixels.
pub fn photometric_loss<T: Scalar>(
    i0: &Frame<T>,
    i1: &Frame<T>,
    flow: &FlowField<T>,
    params: &CharbonnierParams<T>,
) -> Result<(T, usize)> {
    check_inputs(i0, i1, flow)?;
    let mut sum = T::zero();
    let mut count = 0;
    for (r, _) in photometric_terms(i0, i1, flow).into_iter().flatten().flatten() {
        sum = sum + charbonnier(r, params);
        count += 1;
    }
    Ok((sum, count))
}

/// Visits each valid neighbour pair once, in row-major order and offset order.
fn for_each_pair<T: Scalar>(flow: &FlowField<T>, mut f: impl FnMut(usize, usize)) {
    let (w, h) = (flow.width as isize, flow.height as isize);
    for y in 0..h {
        for x in 0..w {
            let p = (y * w + x) as usize;
            if !flow.valid[p] {
                continue;
            }
            for (dx, dy) in NEIGHBOR_OFFSETS {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w || ny >= h {
                    continue;
                }
                let q = (ny * w + nx) as usize;
                if flow.valid[q] {
                    f(p, q);
                }
            }
        }
    }
}

/// `Σ ρ(Δu) + ρ(Δv)` over valid neighbour pairs, and the pair count.
pub fn smoothness_terms<T: Scalar>(flow: &FlowField<T>, params: &CharbonnierParams<T>) -> (T, usize) {
    let mut sum = T::zero();
    let mut pairs = 0;
    for_each_pair(flow, |p, q| {
        sum = sum + charbonnier(flow.u[p] - flow.u[q], params) + charbonnier(flow.v[p] - flow.v[q], params);
        pairs += 1;
    });
    (sum, pairs)
}

pub fn smoothness_loss<T: Scalar>(flow: &FlowField<T>, params: &CharbonnierParams<T>) -> T {
    smoothness_terms(flow, params).0
}

fn reduce<T: Scalar>(sum: T, count: usize, reduction: Reduction) -> T {
    match reduction {
        Reduction::Sum => sum,
        Reduction::Mean if count == 0 => T::zero(),
        Reduction::Mean => sum / T::from_count(count),
    }
}

/// `photometric + λ · smoothness`.
pub fn total_loss<T: Scalar>(
    i0: &Frame<T>,
    i1: &Frame<T>,
    flow: &FlowField<T>,
    params: &CharbonnierParams<T>,
    weights: &LossWeights<T>,
) -> Result<LossBreakdown<T>> {
    weights.validate()?;
    let (photo_sum, valid_pixel_count) = photometric_loss(i0, i1, flow, params)?;
    let (smooth_sum, pair_count) = smoothness_terms(flow, params);
    let photometric = reduce(photo_sum, valid_pixel_count, weights.reduction);
    let smoothness = reduce(smooth_sum, pair_count, weights.reduction);
    Ok(LossBreakdown {
        photometric,
        smoothness,
        total: photometric + weights.lambda * smoothness,
        valid_pixel_count,
        pair_count,
    })
}

/// Everything a second-order-style solver needs at the current flow: loss,
/// gradient and the weights of the local quadratic model.
#[derive(Debug, Clone)]
pub(crate) struct Linearization<T> {
    pub breakdown: LossBreakdown<T>,
    /// Gradient, flow-shaped (`u` = ∂L/∂u, `v` = ∂L/∂v).
    pub gradient: FlowField<T>,
    /// Per pixel `(weight · Ix², weight · Ix·Iy, weight · Iy²)` of the data term.
    pub data: Vec<[T; 3]>,
    /// Per visited pair `(p, q, weight_u, weight_v)`, already multiplied by λ
    /// and the reduction scale.
    pub pairs: Vec<(usize, usize, T, T)>,
}

pub(crate) fn linearize<T: Scalar>(
    i0: &Frame<T>,
    i1: &Frame<T>,
    flow: &FlowField<T>,
    params: &CharbonnierParams<T>,
    weights: &LossWeights<T>,
) -> Result<Linearization<T>> {
    check_inputs(i0, i1, flow)?;
    weights.validate()?;
    let n = flow.len();
    let mut gradient = FlowField {
        width: flow.width,
        height: flow.height,
        u: vec![T::zero(); n],
        v: vec![T::zero(); n],
        valid: flow.valid.clone(),
    };
    let mut data = vec![[T::zero(); 3]; n];
    let terms = photometric_terms(i0, i1, flow);
    let mut photo_sum = T::zero();
    let mut count = 0;
    for (r, _) in terms.iter().flatten().flatten() {
        photo_sum = photo_sum + charbonnier(*r, params);
        count += 1;
    }
    let photo_scale = match weights.reduction {
        Reduction::Mean if count > 0 => T::one() / T::from_count(count),
        _ => T::one(),
    };
    for (i, term) in terms.into_iter().flatten().enumerate() {
        if let Some((r, s)) = term {
            // ∂ρ(I0 − I1(x + u))/∂u = −ρ'(r) ∂I1/∂x
            let d = charbonnier_derivative(r, params) * photo_scale;
            gradient.u[i] = -d * s.dx;
            gradient.v[i] = -d * s.dy;
            let wgt = charbonnier_weight(r, params) * photo_scale;
            data[i] = [wgt * s.dx * s.dx, wgt * s.dx * s.dy, wgt * s.dy * s.dy];
        }
    }

    let (smooth_sum, pair_count) = smoothness_terms(flow, params);
    let smooth_scale = weights.lambda
        * match weights.reduction {
            Reduction::Mean if pair_count > 0 => T::one() / T::from_count(pair_count),
            _ => T::one(),
        };
    let mut pairs = Vec::with_capacity(pair_count);
    for_each_pair(flow, |p, q| {
        let du = flow.u[p] - flow.u[q];
        let dv = flow.v[p] - flow.v[q];
        let gu = charbonnier_derivative(du, params) * smooth_scale;
        let gv = charbonnier_derivative(dv, params) * smooth_scale;
        gradient.u[p] = gradient.u[p] + gu;
        gradient.u[q] = gradient.u[q] - gu;
        gradient.v[p] = gradient.v[p] + gv;
        gradient.v[q] = gradient.v[q] - gv;
        pairs.push((
            p,
            q,
            charbonnier_weight(du, params) * smooth_scale,
            charbonnier_weight(dv, params) * smooth_scale,
        ));
    });

    let photometric = reduce(photo_sum, count, weights.reduction);
    let smoothness = reduce(smooth_sum, pair_count, weights.reduction);
    Ok(Linearization {
        breakdown: LossBreakdown {
            photometric,
            smoothness,
            total: photometric + weights.lambda * smoothness,
            valid_pixel_count: count,
            pair_count,
        },
        gradient,
        data,
        pairs,
    })
}

/// Analytic gradient of [`total_loss`] with respect to every valid `u`, `v`;
/// returned as a flow-shaped field (zero at invalid pixels).
pub fn loss_gradient<T: Scalar>(
    i0: &Frame<T>,
    i1: &Frame<T>,
    flow: &FlowField<T>,
    params: &CharbonnierParams<T>,
    weights: &LossWeights<T>,
) -> Result<FlowField<T>> {
    Ok(linearize(i0, i1, flow, params, weights)?.gradient)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn defaults() -> CharbonnierParams<f64> {
        CharbonnierParams::default()
    }

    #[test]
    fn charbonnier_at_zero_with_defaults() {
        let rho0 = charbonnier(0.0, &defaults());
        assert!((rho0 - 10f64.powf(-2.7)).abs() < 1e-18);
        assert!((rho0 - 1.99526e-3).abs() < 1e-8);
    }

    #[test]
    fn charbonnier_degenerate_is_abs() {
        let p = CharbonnierParams { alpha: 0.5, epsilon: 0.0 };
        assert_eq!(charbonnier(5.0, &p), 5.0);
        assert_eq!(charbonnier(-5.0, &p), 5.0);
        assert_eq!(charbonnier_derivative(0.0, &p), 0.0);
    }

    #[test]
    fn params_validation() {
        assert!(CharbonnierParams::new(0.0, 1e-3).is_err());
        assert!(CharbonnierParams::new(1.5, 1e-3).is_err());
        assert!(CharbonnierParams::new(0.45, -1.0).is_err());
        assert!(LossWeights { lambda: -1.0, reduction: Reduction::Sum }.validate().is_err());
    }

    fn ramp(w: usize, h: usize) -> Frame<f64> {
        Frame::from_fn(w, h, |x, _| x as f64 / (w - 1) as f64)
    }

    #[test]
    fn lattice_and_ramp_samples() {
        let img = Frame::from_fn(4, 3, |x, y| (x * 7 + y * 3) as f64 / 30.0);
        for y in 0..3 {
            for x in 0..4 {
                assert_eq!(bilinear_sample(&img, x as f64, y as f64), (img.at(x, y), true));
            }
        }
        let r = ramp(5, 2);
        let (v, ok) = bilinear_sample(&r, 1.5, 0.5);
        assert!(ok);
        assert!((v - 1.5 / 4.0).abs() < 1e-15);
        assert_eq!(bilinear_sample(&img, -5.0, -5.0), (img.at(0, 0), false));
    }

    #[test]
    fn right_limit_derivative_on_lattice() {
        let img = Frame::new(3, 1, 0, vec![0.0, 1.0, 3.0]).unwrap();
        assert_eq!(bilinear_sample_with_gradient(&img, 1.0, 0.0).dx, 2.0);
        assert_eq!(bilinear_sample_with_gradient(&img, 2.0, 0.0).dx, 2.0);
        assert_eq!(bilinear_sample_with_gradient(&img, 0.0, 0.0).dx, 1.0);
    }

    #[test]
    fn single_pixel_image() {
        let img = Frame::new(1, 1, 0, vec![0.3f32]).unwrap();
        let s = bilinear_sample_with_gradient(&img, 0.0, 0.0);
        assert_eq!((s.value, s.dx, s.dy, s.in_bounds), (0.3, 0.0, 0.0, true));
    }

    #[test]
    fn warp_identity_shift_and_exit() {
        let img = ramp(6, 3);
        let (w, m) = warp(&img, &FlowField::zeros(6, 3)).unwrap();
        assert_eq!(w, img);
        assert_eq!(m.count(), 18);

        let (w, m) = warp(&img, &FlowField::constant(6, 3, 1.0, 0.0)).unwrap();
        for y in 0..3 {
            for x in 0..5 {
                assert!((w.at(x, y) - img.at(x + 1, y)).abs() < 1e-15);
                assert!(m.at(x, y));
            }
            assert!(!m.at(5, y));
        }

        let (_, m) = warp(&img, &FlowField::constant(6, 3, 6.0, 0.0)).unwrap();
        assert_eq!(m.count(), 0);
        assert!(warp(&img, &FlowField::zeros(5, 3)).is_err());
    }

    #[test]
    fn photometric_identical_frames() {
        let img = Frame::from_fn(2, 2, |x, y| 0.1 + 0.2 * x as f64 + 0.3 * y as f64);
        let (sum, n) = photometric_loss(&img, &img, &FlowField::zeros(2, 2), &defaults()).unwrap();
        assert_eq!(n, 4);
        assert!((sum - 4.0 * 10f64.powf(-2.7)).abs() < 1e-15);
        assert!((sum - 7.9810e-3).abs() < 1e-7);
    }

    #[test]
    fn photometric_exact_shift() {
        let i0 = Frame::from_fn(8, 4, |x, _| 0.1 * x as f64);
        let i1 = Frame::from_fn(8, 4, |x, _| 0.1 * (x as f64 - 1.0));
        let flow = FlowField::constant(8, 4, 1.0, 0.0);
        let (sum, n) = photometric_loss(&i0, &i1, &flow, &defaults()).unwrap();
        assert_eq!(n, 7 * 4);
        assert!((sum - n as f64 * charbonnier(0.0, &defaults())).abs() < 1e-15);
    }

    #[test]
    fn photometric_all_invalid() {
        let img = ramp(3, 3);
        let mut flow = FlowField::zeros(3, 3);
        flow.valid.fill(false);
        assert_eq!(photometric_loss(&img, &img, &flow, &defaults()).unwrap(), (0.0, 0));
    }

    #[test]
    fn smoothness_cases() {
        let p = defaults();
        // 3x3: 6 horizontal + 6 vertical + 4 + 4 diagonal pairs
        let (s, pairs) = smoothness_terms(&FlowField::constant(3, 3, 1.0, -2.0), &p);
        assert_eq!(pairs, 20);
        assert!((s - 2.0 * 20.0 * charbonnier(0.0, &p)).abs() < 1e-15);

        let f = FlowField::new(2, 1, vec![0.0, 3.0], vec![0.0, 4.0], vec![true; 2]).unwrap();
        let abs = CharbonnierParams { alpha: 0.5, epsilon: 0.0 };
        assert_eq!(smoothness_loss(&f, &abs), 7.0);
        assert_eq!(smoothness_loss(&FlowField::<f64>::zeros(1, 1), &p), 0.0);
    }

    #[test]
    fn total_is_weighted_sum() {
        let img = Frame::filled(4, 4, 0.5);
        let flow = FlowField::constant(4, 4, 0.3, 0.7);
        let p = defaults();
        let b = total_loss(&img, &img, &flow, &p, &LossWeights { lambda: 0.0, reduction: Reduction::Sum }).unwrap();
        assert_eq!(b.total, b.photometric);
        let b = total_loss(&img, &img, &flow, &p, &LossWeights::default()).unwrap();
        let rho0 = charbonnier(0.0, &p);
        let n = b.valid_pixel_count as f64;
        let pairs = b.pair_count as f64;
        assert!((b.total - (n * rho0 + 0.5 * 2.0 * pairs * rho0)).abs() < 1e-14);
    }

    #[test]
    fn mean_reduction() {
        let img = Frame::filled(4, 4, 0.5);
        let flow = FlowField::zeros(4, 4);
        let p = defaults();
        let b = total_loss(&img, &img, &flow, &p, &LossWeights { lambda: 0.5, reduction: Reduction::Mean }).unwrap();
        let rho0 = charbonnier(0.0, &p);
        assert!((b.photometric - rho0).abs() < 1e-15);
        assert!((b.smoothness - 2.0 * rho0).abs() < 1e-15);
    }

    #[test]
    fn stationary_gradients() {
        let img = Frame::filled(5, 5, 0.4);
        let mut flow = FlowField::constant(5, 5, 0.3, -0.6);
        let g = loss_gradient(&img, &img, &flow, &defaults(), &LossWeights::default()).unwrap();
        assert!(g.u.iter().chain(&g.v).all(|&x| x == 0.0));
        flow.u[7] = 1.7;
        let g = loss_gradient(&img, &img, &flow, &defaults(), &LossWeights { lambda: 0.0, reduction: Reduction::Sum })
            .unwrap();
        assert!(g.u.iter().chain(&g.v).all(|&x| x == 0.0));
    }
}
