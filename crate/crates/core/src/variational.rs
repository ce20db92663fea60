//! Coarse-to-fine dense flow by direct minimization of the self-supervised
//! loss.
//!
//! Each level runs a monotone descent: the search direction is the gradient
//! preconditioned by the local quadratic model of the loss (the Charbonnier
//! majorizer of the smoothness pairs and the linearized data term), solved
//! with Jacobi-preconditioned conjugate gradients. Steps are accepted only if
//! the total loss does not increase, shrinking the step by `step_decay` up to
//! [`MAX_BACKTRACKS`] times; if the preconditioned direction fails, the plain
//! negative gradient is tried the same way. [`Descent::Gradient`] skips the
//! preconditioning and uses plain gradient steps throughout.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{FlowField, Frame};
use crate::loss::{linearize, total_loss, CharbonnierParams, Linearization, LossWeights};
use crate::resample::downsample_frame;
use crate::scalar::Scalar;

pub const MAX_BACKTRACKS: usize = 20;

const CG_MAX_ITERATIONS: usize = 400;
const CG_RELATIVE_TOLERANCE: f64 = 1e-8;
/// Levenberg-style damping, relative to each pixel's diagonal.
const DAMPING: f64 = 1e-4;

/// Search direction of each descent step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Descent {
    /// Gradient preconditioned by the local quadratic model, falling back to
    /// the plain gradient when no step along it is accepted.
    #[default]
    Preconditioned,
    /// Plain negative gradient.
    Gradient,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions<T> {
    pub levels: usize,
    pub iterations_per_level: usize,
    pub step_init: T,
    /// Step shrink factor applied on every rejected trial step.
    pub step_decay: T,
    /// Stop once the relative decrease of the total loss falls below this.
    pub convergence_tol: T,
    pub char_params: CharbonnierParams<T>,
    pub weights: LossWeights<T>,
    pub descent: Descent,
}

impl<T: Scalar> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            levels: 4,
            iterations_per_level: 200,
            step_init: T::one(),
            step_decay: T::lit(0.5),
            convergence_tol: T::lit(1e-6),
            char_params: CharbonnierParams::default(),
            weights: LossWeights::default(),
            descent: Descent::default(),
        }
    }
}

impl<T: Scalar> SolverOptions<T> {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::InvalidArgument("levels must be >= 1".into()));
        }
        if !(self.step_init > T::zero()) || !self.step_init.is_finite() {
            return Err(Error::InvalidArgument("step_init must be positive".into()));
        }
        if !(self.step_decay > T::zero() && self.step_decay < T::one()) {
            return Err(Error::InvalidArgument("step_decay must lie in (0, 1)".into()));
        }
        if !(self.convergence_tol >= T::zero()) {
            return Err(Error::InvalidArgument("convergence_tol must be non-negative".into()));
        }
        self.char_params.validate()?;
        self.weights.validate()
    }
}

/// Diagnostics of one pyramid level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelReport<T> {
    pub level: usize,
    pub width: usize,
    pub height: usize,
    pub iterations: usize,
    pub initial_loss: T,
    pub final_loss: T,
    /// True if the level stopped on the tolerance or at a point where no
    /// descent step was found, rather than on the iteration cap.
    pub converged: bool,
    /// Total loss after every accepted step, starting with the initial loss.
    pub trace: Vec<T>,
}

/// Frame pairs from coarsest to finest; the last entry is the input.
pub fn build_pyramid<T: Scalar>(i0: &Frame<T>, i1: &Frame<T>, levels: usize) -> Result<Vec<(Frame<T>, Frame<T>)>> {
    if levels == 0 {
        return Err(Error::InvalidArgument("levels must be >= 1".into()));
    }
    crate::grid::ensure_same_dims(i0.dims(), i1.dims())?;
    let factor = 1usize
        .checked_shl(levels as u32 - 1)
        .filter(|f| *f <= i0.width.max(i0.height))
        .ok_or(Error::NotDivisible { width: i0.width, height: i0.height, factor: usize::MAX })?;
    if !i0.width.is_multiple_of(factor) || !i0.height.is_multiple_of(factor) {
        return Err(Error::NotDivisible { width: i0.width, height: i0.height, factor });
    }
    (0..levels)
        .map(|k| {
            let f = 1 << (levels - 1 - k);
            Ok((downsample_frame(i0, f)?, downsample_frame(i1, f)?))
        })
        .collect()
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// The quadratic model `H` at the current flow, stored as per-pixel 2×2
/// blocks plus pair couplings. Unknowns are interleaved `(u_i, v_i)`.
struct QuadraticModel<'a, T> {
    blocks: Vec<[T; 3]>,
    pairs: &'a [(usize, usize, T, T)],
    active: &'a [bool],
}

impl<'a, T: Scalar> QuadraticModel<'a, T> {
    fn new(lin: &'a Linearization<T>) -> Self {
        let n = lin.data.len();
        let mut blocks = lin.data.clone();
        let mut pair_diag = vec![(T::zero(), T::zero()); n];
        for &(p, q, wu, wv) in &lin.pairs {
            pair_diag[p].0 = pair_diag[p].0 + wu;
            pair_diag[q].0 = pair_diag[q].0 + wu;
            pair_diag[p].1 = pair_diag[p].1 + wv;
            pair_diag[q].1 = pair_diag[q].1 + wv;
        }
        let damping = T::lit(DAMPING);
        let floor = T::lit(1e-12);
        for (b, (su, sv)) in blocks.iter_mut().zip(pair_diag) {
            let scale = (b[0] + b[2] + su + sv) * damping + floor;
            b[0] = b[0] + scale;
            b[2] = b[2] + scale;
        }
        Self { blocks, pairs: &lin.pairs, active: &lin.gradient.valid }
    }

    fn apply(&self, x: &[T], out: &mut [T]) {
        for (i, b) in self.blocks.iter().enumerate() {
            let (xu, xv) = (x[2 * i], x[2 * i + 1]);
            out[2 * i] = b[0] * xu + b[1] * xv;
            out[2 * i + 1] = b[1] * xu + b[2] * xv;
        }
        for &(p, q, wu, wv) in self.pairs {
            let du = wu * (x[2 * p] - x[2 * q]);
            let dv = wv * (x[2 * p + 1] - x[2 * q + 1]);
            out[2 * p] = out[2 * p] + du;
            out[2 * q] = out[2 * q] - du;
            out[2 * p + 1] = out[2 * p + 1] + dv;
            out[2 * q + 1] = out[2 * q + 1] - dv;
        }
        for (i, &a) in self.active.iter().enumerate() {
            if !a {
                out[2 * i] = T::zero();
                out[2 * i + 1] = T::zero();
            }
        }
    }

    /// Inverse of each pixel's diagonal block, including pair terms.
    fn block_inverses(&self) -> Vec<[T; 3]> {
        let mut diag = self.blocks.clone();
        for &(p, q, wu, wv) in self.pairs {
            diag[p][0] = diag[p][0] + wu;
            diag[q][0] = diag[q][0] + wu;
            diag[p][2] = diag[p][2] + wv;
            diag[q][2] = diag[q][2] + wv;
        }
        diag.into_iter()
            .map(|[a, b, c]| {
                let det = a * c - b * b;
                [c / det, -b / det, a / det]
            })
            .collect()
    }

    /// Approximately solves `H x = rhs` by preconditioned conjugate gradients.
    fn solve(&self, rhs: &[T]) -> Vec<T> {
        let m = rhs.len();
        let inv = self.block_inverses();
        let precondition = |r: &[T], z: &mut [T]| {
            for (i, b) in inv.iter().enumerate() {
                let (ru, rv) = (r[2 * i], r[2 * i + 1]);
                z[2 * i] = b[0] * ru + b[1] * rv;
                z[2 * i + 1] = b[1] * ru + b[2] * rv;
            }
        };
        let mut x = vec![T::zero(); m];
        let mut r = rhs.to_vec();
        let mut z = vec![T::zero(); m];
        precondition(&r, &mut z);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let stop = dot(rhs, rhs).sqrt() * T::lit(CG_RELATIVE_TOLERANCE);
        let mut hp = vec![T::zero(); m];
        for _ in 0..CG_MAX_ITERATIONS {
            if dot(&r, &r).sqrt() <= stop {
                break;
            }
            self.apply(&p, &mut hp);
            let php = dot(&p, &hp);
            if !(php > T::zero()) {
                break;
            }
            let step = rz / php;
            for k in 0..m {
                x[k] = x[k] + step * p[k];
                r[k] = r[k] - step * hp[k];
            }
            precondition(&r, &mut z);
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for k in 0..m {
                p[k] = z[k] + beta * p[k];
            }
        }
        x
    }
}

fn stepped<T: Scalar>(flow: &FlowField<T>, dir: &[T], eta: T) -> FlowField<T> {
    let mut out = flow.clone();
    for i in 0..flow.len() {
        if flow.valid[i] {
            out.u[i] = flow.u[i] + eta * dir[2 * i];
            out.v[i] = flow.v[i] + eta * dir[2 * i + 1];
        }
    }
    out
}

/// Tries `flow + η·dir` for `η = step_init · decay^k`, `k = 0..=MAX_BACKTRACKS`,
/// returning the first candidate whose loss does not exceed `current`.
fn backtrack<T: Scalar>(
    i0: &Frame<T>,
    i1: &Frame<T>,
    flow: &FlowField<T>,
    dir: &[T],
    current: T,
    opts: &SolverOptions<T>,
) -> Result<Option<(FlowField<T>, T)>> {
    let mut eta = opts.step_init;
    for _ in 0..=MAX_BACKTRACKS {
        let candidate = stepped(flow, dir, eta);
        let loss = total_loss(i0, i1, &candidate, &opts.char_params, &opts.weights)?.total;
        if loss <= current {
            return Ok(Some((candidate, loss)));
        }
        eta = eta * opts.step_decay;
    }
    Ok(None)
}

/// Monotone descent on the total loss at one resolution, starting from
/// `init`. The returned loss never exceeds the initial one.
pub fn solve_level<T: Scalar>(
    i0: &Frame<T>,
    i1: &Frame<T>,
    init: &FlowField<T>,
    opts: &SolverOptions<T>,
) -> Result<(FlowField<T>, LevelReport<T>)> {
    opts.validate()?;
    let mut flow = init.clone();
    let mut lin = linearize(i0, i1, &flow, &opts.char_params, &opts.weights)?;
    let initial_loss = lin.breakdown.total;
    let mut loss = initial_loss;
    let mut trace = vec![loss];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.iterations_per_level {
        let neg_grad: Vec<T> = lin.gradient.u.iter().zip(&lin.gradient.v).flat_map(|(&gu, &gv)| [-gu, -gv]).collect();
        if neg_grad.iter().all(|g| g.is_zero()) {
            converged = true;
            break;
        }
        iterations += 1;
        let preconditioned = match opts.descent {
            Descent::Preconditioned => {
                let direction = QuadraticModel::new(&lin).solve(&neg_grad);
                backtrack(i0, i1, &flow, &direction, loss, opts)?
            }
            Descent::Gradient => None,
        };
        let accepted = match preconditioned {
            Some(step) => Some(step),
            None => backtrack(i0, i1, &flow, &neg_grad, loss, opts)?,
        };
        let Some((next, next_loss)) = accepted else {
            converged = true;
            break;
        };
        let decrease = (loss - next_loss) / loss.abs().max(T::min_positive_value());
        flow = next;
        loss = next_loss;
        trace.push(loss);
        if decrease < opts.convergence_tol {
            converged = true;
            break;
        }
        lin = linearize(i0, i1, &flow, &opts.char_params, &opts.weights)?;
    }

    let report = LevelReport {
        level: 0,
        width: i0.width,
        height: i0.height,
        iterations,
        initial_loss,
        final_loss: loss,
        converged,
        trace,
    };
    Ok((flow, report))
}

/// Coarse-to-fine estimate: zero flow at the coarsest level, then per level
/// a [`solve_level`] followed by nearest-neighbour ×2 upsampling.
pub fn estimate_flow<T: Scalar>(
    i0: &Frame<T>,
    i1: &Frame<T>,
    opts: &SolverOptions<T>,
) -> Result<(FlowField<T>, Vec<LevelReport<T>>)> {
    opts.validate()?;
    let pyramid = build_pyramid(i0, i1, opts.levels)?;
    let (w, h) = pyramid[0].0.dims();
    let mut flow = FlowField::zeros(w, h);
    let mut reports = Vec::with_capacity(pyramid.len());
    for (level, (a, b)) in pyramid.iter().enumerate() {
        if level > 0 {
            flow = flow.upsample2();
        }
        let (solved, mut report) = solve_level(a, b, &flow, opts)?;
        report.level = level;
        reports.push(report);
        flow = solved;
    }
    flow.valid.fill(true);
    Ok((flow, reports))
}
