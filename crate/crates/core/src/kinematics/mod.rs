//! Forward kinematics, Jacobians and ScLERP-following resolved-rate planning.

mod model;
mod planner;

use thiserror::Error;

pub use model::{adjoint, forward_kinematics, jacobian, Joint, JointKind, ManipulatorModel};
pub use planner::{follow_screw_path, plan_task, GripperEvent, JointPath, PlannerOptions, TaskSpace};

#[derive(Debug, Error, PartialEq)]
pub enum KinematicsError {
    #[error("configuration has {actual} values, model has {expected} joints")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("invalid model: {0}")]
    Model(String),
    #[error("start pose is {position:.4} m / {rotation:.4} rad from the first waypoint")]
    StartTolerance { position: f64, rotation: f64 },
    #[error("no convergence at target {target} after {iterations} iterations (error {position:.4} m / {rotation:.4} rad)")]
    IterationCap {
        target: usize,
        iterations: usize,
        position: f64,
        rotation: f64,
    },
    #[error("joint limits block convergence at target {target}")]
    JointLimit { target: usize },
    #[error("joint step {step:.4} at target {target} exceeds the bound")]
    StepBound { target: usize, step: f64 },
    #[error("no waypoints")]
    NoWaypoints,
}
