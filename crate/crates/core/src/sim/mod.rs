//! Geometric simulation of a vertical grow panel.
//!
//! The panel is a set of vertical tubes with angled cylindrical slots. Depth
//! images are ray cast analytically, slot poses are estimated from them, and
//! executed joint paths are judged with simple geometric checks on the pod,
//! the gripper fingers and neighbouring foliage.

mod adjudicate;
mod demos;
mod panel;
mod pipeline;
mod registry;
mod render;
mod scenario;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adjudicate::{
    check_harvest, check_transplant, insertion, pod_clearance, Adjudication, HarvestCheck, Sphere, TransplantCheck, CONTACT_TOLERANCE, SLOT_BODY_RADIUS,
};
pub use demos::{
    harvest_keyframes, pod_in_slot, record, transplant_keyframes, Keyframe, Recording, Tray, APPROACH_DISTANCE, DEMO_INSERTION_DEPTH, TRAY_APPROACH,
};
pub use panel::{slot_frame, GripperGeometry, GrowPanel, LocalBox, PanelSpec, SaplingPod, Slot, TubeSpec};
pub use pipeline::{run_pipeline, trial_rng, DemoSummary, Rate, RunOptions, RunReport, RunSummary, Timings, TrialOutcome, TrialTrace, World};
pub use registry::{RegistryEntry, SlotRegistry};
pub use render::{cast_ray, render, slot_camera_pose, RenderedView, SensorNoise, Surface};
pub use scenario::{CameraSettings, FoliageModel, NoiseModel, Scenario};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("render: {0}")]
    Render(String),
    #[error("camera sees no part of the panel")]
    EmptyView,
    #[error("configuration: {0}")]
    Config(String),
    #[error("slot {0} is not occupied")]
    SlotNotOccupied(String),
    #[error("unknown slot {0}")]
    UnknownSlot(String),
    #[error("unknown manipulator model {0}")]
    UnknownModel(String),
    #[error("setup: {0}")]
    Setup(String),
}

/// Outcome category of a trial.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureMode {
    #[default]
    None,
    PartialInsertion,
    GripperSlotCollision,
    NeighborPlantSnag,
    Unreachable,
    PerceptionFailure,
}

impl fmt::Display for FailureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FailureMode::None => "none",
            FailureMode::PartialInsertion => "partial-insertion",
            FailureMode::GripperSlotCollision => "gripper-slot-collision",
            FailureMode::NeighborPlantSnag => "neighbor-plant-snag",
            FailureMode::Unreachable => "unreachable",
            FailureMode::PerceptionFailure => "perception-failure",
        };
        f.write_str(s)
    }
}
