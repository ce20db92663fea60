//! Sparse flow from local plane fits to the event surface `t(x, y)`.
//!
//! Planes are fitted in seconds against pixels, so the plane gradient is in
//! s/px and its inverse is the flow in px/s.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::event::{Event, EventStream};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneFitOptions<T> {
    /// Half-size of the square window; 2 means 5×5.
    pub spatial_radius: usize,
    /// Microseconds either side of the center event.
    pub temporal_window: u64,
    /// Smallest accepted plane gradient magnitude, s/px.
    pub vanish_threshold: T,
    /// Largest accepted temporal residual, seconds.
    pub outlier_threshold: T,
    pub max_refit_iterations: usize,
    pub min_inliers: usize,
    /// Only use neighbours with the center event's polarity.
    pub same_polarity: bool,
}

impl<T: Scalar> Default for PlaneFitOptions<T> {
    fn default() -> Self {
        Self {
            spatial_radius: 2,
            temporal_window: 50_000,
            vanish_threshold: T::lit(1e-3),
            outlier_threshold: T::lit(1e-2),
            max_refit_iterations: 10,
            min_inliers: 8,
            same_polarity: false,
        }
    }
}

impl<T: Scalar> PlaneFitOptions<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = self.spatial_radius > 0
            && self.temporal_window > 0
            && self.vanish_threshold > T::zero()
            && self.outlier_threshold > T::zero()
            && self.max_refit_iterations > 0
            && self.min_inliers > 0;
        if !positive {
            return Err(Error::InvalidArgument("plane-fit options must be positive".into()));
        }
        Ok(())
    }
}

/// A point of the event surface relative to the center event: pixel offsets
/// and time offset in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint<T> {
    pub x: T,
    pub y: T,
    pub t: T,
}

impl<T> SurfacePoint<T> {
    pub fn new(x: T, y: T, t: T) -> Self {
        Self { x, y, t }
    }
}

/// `t = a·x + b·y + c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane<T> {
    pub a: T,
    pub b: T,
    pub c: T,
}

impl<T: Scalar> Plane<T> {
    #[inline]
    pub fn residual(&self, p: &SurfacePoint<T>) -> T {
        p.t - (self.a * p.x + self.b * p.y + self.c)
    }

    pub fn sum_squared_residuals(&self, points: &[SurfacePoint<T>]) -> T {
        points.iter().map(|p| self.residual(p).powi(2)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustFit<T> {
    pub plane: Plane<T>,
    pub inliers: Vec<SurfacePoint<T>>,
    /// Number of fits performed.
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SparseFlowEstimate<T> {
    pub x: u16,
    pub y: u16,
    pub t: u64,
    /// px/s
    pub u: T,
    pub v: T,
    pub inlier_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseFlow<T> {
    pub estimates: Vec<SparseFlowEstimate<T>>,
    pub attempted: usize,
}

impl<T> SparseFlow<T> {
    /// Fraction of events that produced a flow estimate; 0 for no events.
    pub fn valid_fraction(&self) -> f64 {
        if self.attempted == 0 {
            0.0
        } else {
            self.estimates.len() as f64 / self.attempted as f64
        }
    }
}

/// Per-pixel event lists for fast neighbourhood queries.
pub struct EventIndex<'a> {
    stream: &'a EventStream,
    /// Indices into the stream, per pixel, in time order.
    by_pixel: Vec<Vec<usize>>,
}

impl<'a> EventIndex<'a> {
    pub fn new(stream: &'a EventStream) -> Self {
        let mut by_pixel = vec![Vec::new(); stream.width * stream.height];
        for (i, e) in stream.events.iter().enumerate() {
            by_pixel[e.y as usize * stream.width + e.x as usize].push(i);
        }
        Self { stream, by_pixel }
    }

    /// Events within the spatial window and `|t − t_c| ≤ temporal_window`
    /// around `center`, center included, as points relative to it.
    pub fn neighborhood<T: Scalar>(&self, center: &Event, opts: &PlaneFitOptions<T>) -> Vec<SurfacePoint<T>> {
        let s = self.stream;
        let r = opts.spatial_radius;
        let (cx, cy) = (center.x as usize, center.y as usize);
        let lo_t = center.t.saturating_sub(opts.temporal_window);
        let hi_t = center.t.saturating_add(opts.temporal_window);
        let mut out = Vec::new();
        for y in cy.saturating_sub(r)..=(cy + r).min(s.height - 1) {
            for x in cx.saturating_sub(r)..=(cx + r).min(s.width - 1) {
                let list = &self.by_pixel[y * s.width + x];
                let start = list.partition_point(|&i| s.events[i].t < lo_t);
                for &i in &list[start..] {
                    let e = &s.events[i];
                    if e.t > hi_t {
                        break;
                    }
                    if opts.same_polarity && e.p != center.p {
                        continue;
                    }
                    out.push(SurfacePoint::new(
                        T::from_count(x) - T::from_count(cx),
                        T::from_count(y) - T::from_count(cy),
                        T::lit((e.t as f64 - center.t as f64) * 1e-6),
                    ));
                }
            }
        }
        out
    }
}

/// One-off neighbourhood query; builds an [`EventIndex`] internally.
pub fn collect_neighborhood<T: Scalar>(
    stream: &EventStream,
    center: &Event,
    opts: &PlaneFitOptions<T>,
) -> Vec<SurfacePoint<T>> {
    EventIndex::new(stream).neighborhood(center, opts)
}

/// Centered second moments of a point set.
struct Moments<T> {
    mx: T,
    my: T,
    sxx: T,
    sxy: T,
    syy: T,
    det: T,
}

/// Least-squares plane through `points`, solved on centered coordinates.
pub fn fit_plane<T: Scalar>(points: &[SurfacePoint<T>]) -> Result<Plane<T>> {
    fit_with_moments(points).map(|(plane, _)| plane)
}

fn fit_with_moments<T: Scalar>(points: &[SurfacePoint<T>]) -> Result<(Plane<T>, Moments<T>)> {
    let degenerate = || Error::InvalidArgument("degenerate point configuration for plane fit".into());
    if points.len() < 3 {
        return Err(degenerate());
    }
    let n = T::from_count(points.len());
    let mx = points.iter().map(|p| p.x).sum::<T>() / n;
    let my = points.iter().map(|p| p.y).sum::<T>() / n;
    let mt = points.iter().map(|p| p.t).sum::<T>() / n;
    let (mut sxx, mut sxy, mut syy, mut sxt, mut syt) = (T::zero(), T::zero(), T::zero(), T::zero(), T::zero());
    for p in points {
        let (x, y, t) = (p.x - mx, p.y - my, p.t - mt);
        sxx = sxx + x * x;
        sxy = sxy + x * y;
        syy = syy + y * y;
        sxt = sxt + x * t;
        syt = syt + y * t;
    }
    let det = sxx * syy - sxy * sxy;
    if !(det > T::lit(1e-10) * sxx * syy) || !(det > T::zero()) {
        return Err(degenerate());
    }
    let a = (sxt * syy - syt * sxy) / det;
    let b = (syt * sxx - sxt * sxy) / det;
    let plane = Plane { a, b, c: mt - a * mx - b * my };
    Ok((plane, Moments { mx, my, sxx, sxy, syy, det }))
}

/// Fits and refits until every residual is within the outlier threshold,
/// each time dropping the point with the largest leave-location-out
/// residual: its residual under the plane fitted without any of the points
/// at its `(x, y)`. Plain residuals would let a high-leverage outlier (a
/// corner, or several events stacked on one pixel) tilt the plane onto
/// itself and push clean points out instead. For `k` points sharing a
/// location with leverage `h` each, that residual is
/// `rᵢ + h / (1 − k·h) · Σ r` over the location.
///
/// Returns `None` when fewer than `min_inliers` points remain, the points
/// are degenerate, or `max_refit_iterations` refits do not reach a
/// consistent inlier set.
pub fn robust_fit<T: Scalar>(points: &[SurfacePoint<T>], opts: &PlaneFitOptions<T>) -> Option<RobustFit<T>> {
    let mut inliers = points.to_vec();
    for iterations in 1..=opts.max_refit_iterations + 1 {
        if inliers.len() < opts.min_inliers {
            return None;
        }
        let (plane, m) = fit_with_moments(&inliers).ok()?;
        let residuals: Vec<T> = inliers.iter().map(|p| plane.residual(p)).collect();
        if residuals.iter().all(|r| r.abs() <= opts.outlier_threshold) {
            return Some(readmit(points, RobustFit { plane, inliers, iterations }, opts));
        }
        let location = |p: &SurfacePoint<T>| (p.x.to_f64_lossy().to_bits(), p.y.to_f64_lossy().to_bits());
        let mut groups: HashMap<(u64, u64), (usize, T)> = HashMap::new();
        for (p, &r) in inliers.iter().zip(&residuals) {
            let g = groups.entry(location(p)).or_insert((0, T::zero()));
            g.0 += 1;
            g.1 = g.1 + r;
        }
        let n = T::from_count(inliers.len());
        let mut worst = (0, T::zero());
        for (i, (p, &r)) in inliers.iter().zip(&residuals).enumerate() {
            let (k, sum) = groups[&location(p)];
            let (x, y) = (p.x - m.mx, p.y - m.my);
            let h = T::one() / n + (x * x * m.syy - T::lit(2.0) * x * y * m.sxy + y * y * m.sxx) / m.det;
            let rest = (T::one() - T::from_count(k) * h).max(T::lit(1e-12));
            let deleted = (r + h / rest * sum).abs();
            if deleted > worst.1 {
                worst = (i, deleted);
            }
        }
        inliers.swap_remove(worst.0);
    }
    None
}

/// Points dropped along the way that lie within the threshold of the final
/// plane rejoin it, provided the refit keeps every point within threshold.
fn readmit<T: Scalar>(points: &[SurfacePoint<T>], fit: RobustFit<T>, opts: &PlaneFitOptions<T>) -> RobustFit<T> {
    let close = |plane: &Plane<T>, p: &SurfacePoint<T>| plane.residual(p).abs() <= opts.outlier_threshold;
    let all: Vec<SurfacePoint<T>> = points.iter().copied().filter(|p| close(&fit.plane, p)).collect();
    if all.len() <= fit.inliers.len() {
        return fit;
    }
    match fit_plane(&all) {
        Ok(plane) if all.iter().all(|p| close(&plane, p)) => {
            RobustFit { plane, inliers: all, iterations: fit.iterations + 1 }
        }
        _ => fit,
    }
}

/// Inverse plane gradient `(a, b) / (a² + b²)` in px/s, or `None` when
/// `√(a² + b²)` is below the vanishing threshold.
pub fn plane_to_flow<T: Scalar>(a: T, b: T, opts: &PlaneFitOptions<T>) -> Option<(T, T)> {
    let sq = a * a + b * b;
    if !(sq.sqrt() >= opts.vanish_threshold) {
        return None;
    }
    Some((a / sq, b / sq))
}

/// One attempt per event, in parallel; estimates keep the stream order.
pub fn estimate_sparse_flow<T: Scalar>(stream: &EventStream, opts: &PlaneFitOptions<T>) -> Result<SparseFlow<T>> {
    opts.validate()?;
    let index = EventIndex::new(stream);
    let estimates: Vec<_> = stream
        .events
        .par_iter()
        .filter_map(|e| {
            let points = index.neighborhood(e, opts);
            let fit = robust_fit(&points, opts)?;
            let (u, v) = plane_to_flow(fit.plane.a, fit.plane.b, opts)?;
            (u.is_finite() && v.is_finite()).then_some(SparseFlowEstimate {
                x: e.x,
                y: e.y,
                t: e.t,
                u,
                v,
                inlier_count: fit.inliers.len(),
            })
        })
        .collect();
    Ok(SparseFlow { estimates, attempted: stream.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::Polarity;

    fn plane_points(a: f64, b: f64, c: f64) -> Vec<SurfacePoint<f64>> {
        let mut out = Vec::new();
        for y in -2..=2 {
            for x in -2..=2 {
                let (x, y) = (x as f64, y as f64);
                out.push(SurfacePoint::new(x, y, a * x + b * y + c));
            }
        }
        out
    }

    #[test]
    fn exact_plane() {
        let p = fit_plane(&plane_points(0.1, 0.2, 0.05)).unwrap();
        assert!((p.a - 0.1).abs() < 1e-12 && (p.b - 0.2).abs() < 1e-12 && (p.c - 0.05).abs() < 1e-12);
    }

    #[test]
    fn three_points_interpolate() {
        let pts =
            [SurfacePoint::new(0.0, 0.0, 1.0), SurfacePoint::new(1.0, 0.0, 3.0), SurfacePoint::new(0.0, 1.0, -2.0)];
        let p = fit_plane(&pts).unwrap();
        assert!(p.sum_squared_residuals(&pts) < 1e-24);
    }

    #[test]
    fn degenerate_configurations() {
        let same = vec![SurfacePoint::new(1.0, 1.0, 0.0); 5];
        assert!(fit_plane(&same).is_err());
        let line: Vec<_> = (0..5).map(|k| SurfacePoint::new(k as f64, 2.0 * k as f64, 0.1)).collect();
        assert!(fit_plane(&line).is_err());
        assert!(fit_plane(&same[..2]).is_err());
    }

    #[test]
    fn flow_from_gradient() {
        let o = PlaneFitOptions::<f64>::default();
        let (u, v) = plane_to_flow(0.1, 0.2, &o).unwrap();
        assert!((u - 2.0).abs() < 1e-12 && (v - 4.0).abs() < 1e-12);
        assert_eq!(plane_to_flow(0.0, 0.0, &o), None);
        let (u, v) = plane_to_flow(0.01, 0.0, &o).unwrap();
        assert!((u - 100.0).abs() < 1e-9 && v == 0.0);
        assert!(plane_to_flow(1e-3, 0.0, &o).is_some());
        assert!(plane_to_flow(0.999e-3, 0.0, &o).is_none());
    }

    #[test]
    fn clean_points_keep_everything() {
        let pts = plane_points(0.05, -0.02, 0.0);
        let f = robust_fit(&pts, &PlaneFitOptions::default()).unwrap();
        assert_eq!(f.inliers.len(), pts.len());
        assert_eq!(f.iterations, 1);
        assert_eq!(f.plane, fit_plane(&pts).unwrap());
    }

    #[test]
    fn too_few_inliers() {
        let pts = plane_points(0.05, 0.0, 0.0)[..5].to_vec();
        assert!(robust_fit(&pts, &PlaneFitOptions::default()).is_none());
    }

    #[test]
    fn neighborhood_bounds() {
        let ev = vec![
            Event::new(0, 0, 0, Polarity::Positive),
            Event::new(5, 5, 10, Polarity::Positive),
            Event::new(7, 5, 20, Polarity::Negative),
            Event::new(8, 5, 30, Polarity::Positive),
            Event::new(5, 6, 60_011, Polarity::Positive),
        ];
        let s = EventStream::new(10, 10, ev).unwrap();
        let o = PlaneFitOptions::<f64>::default();
        let n = collect_neighborhood(&s, &s.events[1], &o);
        assert_eq!(n.len(), 2);
        assert_eq!(n[0], SurfacePoint::new(0.0, 0.0, 0.0));
        assert!((n[1].t - 10e-6).abs() < 1e-18 && n[1].x == 2.0);
        let same = PlaneFitOptions { same_polarity: true, ..o };
        assert_eq!(collect_neighborhood(&s, &s.events[1], &same).len(), 1);
        assert_eq!(collect_neighborhood(&s, &s.events[0], &o).len(), 1);
    }

    #[test]
    fn empty_stream() {
        let s = EventStream::empty(4, 4);
        let r = estimate_sparse_flow(&s, &PlaneFitOptions::<f64>::default()).unwrap();
        assert!(r.estimates.is_empty());
        assert_eq!(r.valid_fraction(), 0.0);
    }
}
