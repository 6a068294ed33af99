//! Screw-geometric learning from a single demonstration.
//!
//! The crate turns one recorded end-effector demonstration into a sequence of
//! constant screw motions, re-expresses the task-relevant part of that
//! sequence relative to the objects it acts on, and replays it for a new
//! object placement by following screw linear interpolation with a
//! damped-least-squares resolved-rate solver. A geometric grow-panel
//! simulator closes the loop with synthetic depth images, slot pose
//! estimation and success adjudication.
//!
//! Module map:
//!
//! - [`screw`] / [`dual_quat`]: SE(3) poses, Chasles decomposition, ScLERP.
//! - [`segment`]: demonstrations and constant-screw segmentation.
//! - [`transfer`]: regions of interest and transfer to new task instances.
//! - [`perception`]: pinhole projection, mask selection, box fitting.
//! - [`kinematics`]: product-of-exponentials arms and the screw-following planner.
//! - [`sim`]: grow panel, renderer, adjudication and the batch pipeline.
//! - [`formats`]: trajectory, waypoint and model file formats.

pub mod dual_quat;
pub mod formats;
pub mod kinematics;
pub mod perception;
pub mod random;
pub mod screw;
pub mod segment;
pub mod sim;
pub mod synth;
pub mod transfer;

pub use dual_quat::UnitDualQuaternion;
pub use screw::{
    apply_screw, compose, sclerp, screw_from_poses, transform_screw, Pose, ScrewDisplacement, ScrewKind,
};

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../README.md")]
    pub struct Readme;
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/screws.md")]
    pub struct Screws;
    #[doc = include_str!("../../../book/src/segmentation.md")]
    pub struct Segmentation;
    #[doc = include_str!("../../../book/src/transfer.md")]
    pub struct Transfer;
    #[doc = include_str!("../../../book/src/perception.md")]
    pub struct Perception;
    #[doc = include_str!("../../../book/src/kinematics.md")]
    pub struct Kinematics;
    #[doc = include_str!("../../../book/src/simulation.md")]
    pub struct Simulation;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
}
