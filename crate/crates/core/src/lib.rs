//! Event-camera optical flow toolkit.
//!
//! The library covers the event image representation, a self-supervised
//! photometric + smoothness loss with its analytic gradient, a coarse-to-fine
//! variational minimizer of that loss, sparse flow from local plane fits on
//! events, ground-truth flow from camera poses and depth, and masked
//! endpoint-error metrics. Numerical code is generic over [`Scalar`]
//! (`f32` or `f64`); the aliases below fix the scalar for common use.

// NaN-rejecting checks are written as `!(x > bound)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod event;
pub mod event_image;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod loss;
pub mod metrics;
pub mod motion;
pub mod planefit;
pub mod resample;
pub mod scalar;
pub mod variational;

pub use error::{Error, Result};
pub use event::{Event, EventStream, Polarity};
pub use event_image::{encode, event_mask, slice_window, EventImage, EventWindow};
pub use grid::{FlowField, Frame, Mask};
pub use linalg::{Mat3, Vec3};
pub use loss::{
    charbonnier, loss_gradient, photometric_loss, smoothness_loss, total_loss, warp, CharbonnierParams, LossBreakdown,
    LossWeights, Reduction,
};
pub use metrics::{endpoint_error_map, evaluate, EvalReport};
pub use motion::{
    generate_gt_flow, CameraModel, Convention, DepthMap, GtFlowOptions, GtFlowRequest, PoseSample, Trajectory,
    VelocitySample,
};
pub use planefit::{estimate_sparse_flow, PlaneFitOptions, SparseFlow, SparseFlowEstimate};
pub use scalar::Scalar;
pub use variational::{estimate_flow, Descent, LevelReport, SolverOptions};

pub type FrameF64 = Frame<f64>;
pub type FrameF32 = Frame<f32>;
pub type FlowFieldF64 = FlowField<f64>;
pub type FlowFieldF32 = FlowField<f32>;
pub type EventImageF64 = EventImage<f64>;
pub type EventImageF32 = EventImage<f32>;
pub type DepthMapF64 = DepthMap<f64>;
pub type CameraModelF64 = CameraModel<f64>;
pub type TrajectoryF64 = Trajectory<f64>;
pub type SolverOptionsF64 = SolverOptions<f64>;
pub type PlaneFitOptionsF64 = PlaneFitOptions<f64>;
