//! Synthetic kinesthetic demonstrations of the two farm tasks.

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::panel::SaplingPod;
use crate::random::perturb_pose;
use crate::screw::{sclerp, Pose};
use crate::segment::{Demonstration, Gripper};

/// Depth of the pod bottom below the slot mouth in a demonstrated insertion (m).
pub const DEMO_INSERTION_DEPTH: f64 = 0.0425;

/// Distance of the pre-insertion and extraction poses back along the slot axis (m).
pub const APPROACH_DISTANCE: f64 = 0.12;

/// Height of the approach above a tray cell (m).
pub const TRAY_APPROACH: f64 = 0.08;

/// A pose to pass through, the gripper command on arrival and how many extra
/// samples to hold it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Keyframe {
    pub pose: Pose,
    pub gripper: Gripper,
    pub dwell: usize,
}

impl Keyframe {
    pub fn new(pose: Pose, gripper: Gripper) -> Self {
        Self { pose, gripper, dwell: 0 }
    }

    pub fn hold(mut self, samples: usize) -> Self {
        self.dwell = samples;
        self
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Recording {
    /// Largest step between samples (m, rad).
    pub step_position: f64,
    pub step_rotation: f64,
    /// Per-sample noise (m, rad).
    pub noise_position: f64,
    pub noise_rotation: f64,
    /// Seconds between samples.
    pub period: f64,
}

impl Default for Recording {
    fn default() -> Self {
        Self {
            step_position: 0.005,
            step_rotation: 2f64.to_radians(),
            noise_position: 0.0005,
            noise_rotation: 0.2f64.to_radians(),
            period: 0.05,
        }
    }
}

/// Samples ScLERP between consecutive keyframes. The arrival sample of each
/// keyframe carries its gripper command, so commands land on breakpoints.
pub fn record<R: Rng + ?Sized>(rng: &mut R, id: &str, keys: &[Keyframe], rec: &Recording) -> Demonstration {
    let mut clean = Vec::new();
    let mut gripper = Vec::new();
    if let Some(first) = keys.first() {
        for _ in 0..=first.dwell {
            clean.push(first.pose);
            gripper.push(first.gripper);
        }
    }
    for w in keys.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let (dp, dr) = a.pose.distance_to(&b.pose);
        let n = ((dp / rec.step_position).max(dr / rec.step_rotation).ceil() as usize).max(1);
        for i in 1..=n {
            clean.push(sclerp(&a.pose, &b.pose, i as f64 / n as f64));
            gripper.push(if i == n { b.gripper } else { a.gripper });
        }
        for _ in 0..b.dwell {
            clean.push(b.pose);
            gripper.push(b.gripper);
        }
    }
    let poses = clean
        .iter()
        .map(|p| perturb_pose(rng, p, rec.noise_position, rec.noise_rotation))
        .collect::<Vec<_>>();
    let n = poses.len();
    Demonstration {
        id: id.into(),
        poses,
        timestamps: (0..n).map(|i| i as f64 * rec.period).collect(),
        gripper,
    }
}

/// Pod pose when seated `depth` below the mouth of a slot with frame `slot`.
pub fn pod_in_slot(slot: &Pose, depth: f64) -> Pose {
    slot.compose(&Pose::from_translation(0.0, 0.0, -depth))
}

fn backed_off(tool: &Pose, d: f64) -> Pose {
    tool.compose(&Pose::from_translation(0.0, 0.0, -d))
}

fn raised(p: &Pose, dz: f64) -> Pose {
    Pose::new(p.rotation, p.translation + Vector3::z() * dz)
}

/// Halfway between two poses, lifted clear of the panel.
fn transit(a: &Pose, b: &Pose) -> Pose {
    raised(&sclerp(a, b, 0.5), 0.1)
}

/// Pick a pod from the tray, carry it to the slot and insert it along the slot axis.
pub fn transplant_keyframes(start: &Pose, pod: &Pose, slot: &Pose, geom: &SaplingPod) -> Vec<Keyframe> {
    use Gripper::{Closed, Open};
    let grasp = pod.compose(&geom.grasp);
    let lift = raised(&grasp, 0.09);
    let seated = pod_in_slot(slot, DEMO_INSERTION_DEPTH).compose(&geom.grasp);
    let pre_insert = backed_off(&seated, APPROACH_DISTANCE);
    vec![
        Keyframe::new(*start, Open),
        Keyframe::new(backed_off(&grasp, TRAY_APPROACH), Open),
        Keyframe::new(grasp, Closed).hold(4),
        Keyframe::new(lift, Closed),
        Keyframe::new(transit(&lift, &pre_insert), Closed),
        Keyframe::new(pre_insert, Closed),
        Keyframe::new(seated, Open).hold(4),
        Keyframe::new(pre_insert, Open),
    ]
}

/// Grasp a planted pod, pull it out along the slot axis and drop it in the tray.
pub fn harvest_keyframes(start: &Pose, planted: &Pose, tray: &Pose, geom: &SaplingPod) -> Vec<Keyframe> {
    use Gripper::{Closed, Open};
    let grasp = planted.compose(&geom.grasp);
    let extracted = backed_off(&grasp, APPROACH_DISTANCE);
    let place = tray.compose(&geom.grasp);
    let pre_place = raised(&place, TRAY_APPROACH);
    vec![
        Keyframe::new(*start, Open),
        Keyframe::new(extracted, Open),
        Keyframe::new(grasp, Closed).hold(4),
        Keyframe::new(extracted, Closed),
        Keyframe::new(transit(&extracted, &pre_place), Closed),
        Keyframe::new(pre_place, Closed),
        Keyframe::new(place, Open).hold(4),
        Keyframe::new(pre_place, Open),
    ]
}

/// A grid of pod cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tray {
    pub origin: Pose,
    pub rows: usize,
    pub cols: usize,
    pub pitch: f64,
}

impl Tray {
    /// Tray the saplings are picked from.
    pub fn source() -> Self {
        Self {
            origin: Pose::from_translation(0.25, -0.45, 0.05),
            rows: 3,
            cols: 4,
            pitch: 0.05,
        }
    }

    /// Tray harvested plants are dropped into.
    pub fn harvest() -> Self {
        Self {
            origin: Pose::from_translation(0.25, 0.35, 0.05),
            rows: 3,
            cols: 4,
            pitch: 0.05,
        }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Pose of cell `i` (wrapping), pod frame z up.
    pub fn cell(&self, i: usize) -> Pose {
        let i = i % self.len();
        let (r, c) = (i / self.cols, i % self.cols);
        self.origin
            .compose(&Pose::from_translation(r as f64 * self.pitch, c as f64 * self.pitch, 0.0))
    }
}
