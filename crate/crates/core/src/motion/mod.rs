//! Ground-truth optical flow from camera poses and depth maps.

pub mod camera;
pub mod field;
pub mod pose;
pub mod so3;

pub use camera::CameraModel;
pub use field::{
    flow_from_velocity, generate_gt_flow, interaction, motion_field, select_depth, Convention, DepthMap, GtFlowOptions,
    GtFlowRequest,
};
pub use pose::{differentiate_pose, interval_velocity, smooth_velocities, PoseSample, Trajectory, VelocitySample};
pub use so3::{matrix_to_quaternion, quaternion_to_matrix, rotation_exp, rotation_log, skew, slerp, unskew};
