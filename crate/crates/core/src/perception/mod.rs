//! Slot pose estimation from a depth image and candidate masks.
//!
//! The pipeline is: project a rough slot position into the image, pick the
//! smallest mask under that pixel, back-project the masked depth, drop
//! statistical outliers, and fit an oriented bounding box.

mod camera;
mod image;
mod obb;
mod outliers;

use std::fmt;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use camera::{project_point, CameraModel, Projection};
pub use image::{deproject_mask, read_depth_pgm, read_mask_pgm, select_mask, write_depth_pgm, write_mask_pgm, DepthImage, Mask};
pub use obb::{fit_bounding_box, AxisPrior, BoxFitOptions, SlotPoseEstimate};
pub use outliers::{inlier_indices, remove_outliers, OutlierOptions};

#[derive(Debug, Error, PartialEq)]
pub enum PerceptionError {
    #[error("invalid camera model")]
    InvalidCamera,
    #[error("invalid depth image")]
    InvalidImage,
    #[error("point is behind the camera (depth {depth})")]
    BehindCamera { depth: f64 },
    #[error("projection ({u:.1}, {v:.1}) is outside the image")]
    OutOfBounds { u: f64, v: f64 },
    #[error("image, mask and camera sizes differ")]
    ShapeMismatch,
    #[error("no mask contains pixel ({u}, {v})")]
    NoMaskAtSeed { u: usize, v: usize },
    #[error("no masked pixel has a valid depth")]
    EmptyCloud,
    #[error("{found} points, at least {required} required")]
    TooFewPoints { found: usize, required: usize },
    #[error("non-finite point in cloud")]
    NonFinitePoint,
    #[error("PGM: {0}")]
    Pgm(String),
    #[error("I/O: {0}")]
    Io(String),
}

impl From<std::io::Error> for PerceptionError {
    fn from(e: std::io::Error) -> Self {
        PerceptionError::Io(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Projection,
    MaskSelection,
    Deprojection,
    BoxFit,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Projection => "projection",
            Stage::MaskSelection => "mask selection",
            Stage::Deprojection => "deprojection",
            Stage::BoxFit => "box fit",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("slot pose estimation failed at {stage}: {source}")]
pub struct StagedError {
    pub stage: Stage,
    #[source]
    pub source: PerceptionError,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    pub fit: BoxFitOptions,
    /// `None` disables outlier removal.
    pub outliers: Option<OutlierOptions>,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            fit: BoxFitOptions::default(),
            outliers: Some(OutlierOptions::default()),
        }
    }
}

/// Runs the full goal-estimation chain for one slot.
pub fn estimate_slot_pose(
    depth: &DepthImage,
    masks: &[Mask],
    cam: &CameraModel,
    rough_slot_position: &Vector3<f64>,
    opts: &EstimateOptions,
) -> Result<SlotPoseEstimate, StagedError> {
    let stage = |stage| move |source| StagedError { stage, source };
    let seed = project_point(cam, rough_slot_position).map_err(stage(Stage::Projection))?;
    if masks.iter().any(|m| (m.width, m.height) != (depth.width, depth.height)) {
        return Err(stage(Stage::MaskSelection)(PerceptionError::ShapeMismatch));
    }
    let index = select_mask(masks, seed.pixel()).map_err(stage(Stage::MaskSelection))?;
    let mut cloud = deproject_mask(depth, &masks[index], cam).map_err(stage(Stage::Deprojection))?;
    if let Some(o) = &opts.outliers {
        cloud = remove_outliers(&cloud, o);
    }
    fit_bounding_box(&cloud, &opts.fit).map_err(stage(Stage::BoxFit))
}
