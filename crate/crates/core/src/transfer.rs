//! Extracting object-relative screw constraints and replaying them on a new
//! task instance.
//!
//! Breakpoints whose translation falls inside a sphere around a task object
//! are stored relative to that object, `g_o⁻¹ g_k`. Transferring to a new
//! instance left-multiplies them by the new object pose, so every stored
//! constant-screw segment keeps its pitch and magnitude.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::screw::{screw_from_poses, transform_screw, Pose, ScrewDisplacement, ScrewKind};
use crate::segment::{Gripper, ScrewSegmentSequence};

pub const DEFAULT_ROI_RADIUS: f64 = 0.15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Transplant,
    Harvest,
}

impl TaskKind {
    /// Object names in the order their subsequences appear.
    pub fn object_names(self) -> [&'static str; 2] {
        match self {
            TaskKind::Transplant => ["pod", "slot"],
            TaskKind::Harvest => ["slot", "tray"],
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskKind::Transplant => f.write_str("transplant"),
            TaskKind::Harvest => f.write_str("harvest"),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TransferError {
    #[error("ROI radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
    #[error("{kind} instance is missing object {name:?}")]
    MissingObject { kind: TaskKind, name: String },
    #[error("{kind} instance has unexpected object {name:?}")]
    UnexpectedObject { kind: TaskKind, name: String },
    #[error("pose of object {0:?} is not finite")]
    InvalidPose(String),
    #[error("empty subsequence for {0:?} (ROI too small)")]
    EmptySubsequence(String),
    #[error("subsequences of {first:?} and {second:?} overlap (ROI too large or objects too close)")]
    Overlap { first: String, second: String },
    #[error("subsequence of {0:?} is not contiguous")]
    NotContiguous(String),
    #[error("task kind mismatch: constraint is {expected}, instance is {actual}")]
    KindMismatch { expected: TaskKind, actual: TaskKind },
}

/// Object poses for one task instance, e.g. `O_t = {g_p, g_s}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub kind: TaskKind,
    pub objects: BTreeMap<String, Pose>,
}

impl TaskInstance {
    pub fn new(kind: TaskKind, objects: BTreeMap<String, Pose>) -> Result<Self, TransferError> {
        let inst = Self { kind, objects };
        inst.validate()?;
        Ok(inst)
    }

    pub fn transplant(pod: Pose, slot: Pose) -> Self {
        Self {
            kind: TaskKind::Transplant,
            objects: BTreeMap::from([("pod".to_string(), pod), ("slot".to_string(), slot)]),
        }
    }

    pub fn harvest(slot: Pose, tray: Pose) -> Self {
        Self {
            kind: TaskKind::Harvest,
            objects: BTreeMap::from([("slot".to_string(), slot), ("tray".to_string(), tray)]),
        }
    }

    pub fn validate(&self) -> Result<(), TransferError> {
        for name in self.kind.object_names() {
            match self.objects.get(name) {
                None => {
                    return Err(TransferError::MissingObject {
                        kind: self.kind,
                        name: name.into(),
                    })
                }
                Some(p) if !p.is_finite() => return Err(TransferError::InvalidPose(name.into())),
                Some(_) => {}
            }
        }
        if let Some(extra) = self.objects.keys().find(|k| !self.kind.object_names().contains(&k.as_str())) {
            return Err(TransferError::UnexpectedObject {
                kind: self.kind,
                name: extra.clone(),
            });
        }
        Ok(())
    }

    /// Pose of a named object. Panics if the instance was not validated.
    pub fn pose(&self, name: &str) -> &Pose {
        &self.objects[name]
    }

    /// Every object pose left-multiplied by `t`.
    pub fn transformed(&self, t: &Pose) -> Self {
        Self {
            kind: self.kind,
            objects: self.objects.iter().map(|(k, p)| (k.clone(), t.compose(p))).collect(),
        }
    }
}

/// Breakpoints of one object's ROI, relative to the object frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectConstraint {
    pub object: String,
    /// Demonstration sample indices of the member breakpoints.
    pub demo_indices: Vec<usize>,
    /// `g_o⁻¹ g_k` for each member breakpoint.
    pub relative_poses: Vec<Pose>,
    pub gripper: Vec<Gripper>,
    /// Body-frame screws between consecutive members.
    pub screws: Vec<ScrewDisplacement>,
}

/// The connection between the two subsequences, a single ScLERP segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bridge {
    pub from_object: String,
    pub to_object: String,
    pub from_demo_index: usize,
    pub to_demo_index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferableConstraint {
    pub kind: TaskKind,
    pub source_demo_id: String,
    pub radius: f64,
    pub objects: Vec<ObjectConstraint>,
    pub bridge: Bridge,
}

/// A transferred breakpoint `g_o' g_o⁻¹ g_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub pose: Pose,
    /// Gripper state once this waypoint is reached.
    pub gripper: Gripper,
    pub object: String,
}

/// Splits the breakpoints of `seq` into per-object subsequences.
pub fn extract_roi(seq: &ScrewSegmentSequence, inst: &TaskInstance, radius: f64) -> Result<TransferableConstraint, TransferError> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(TransferError::InvalidRadius(radius));
    }
    inst.validate()?;
    let names = inst.kind.object_names();

    let mut members: Vec<Vec<usize>> = Vec::with_capacity(2);
    for name in names {
        let centre = inst.pose(name).translation;
        let idx: Vec<usize> = seq
            .poses
            .iter()
            .enumerate()
            .filter(|(_, p)| (p.translation - centre).norm() <= radius)
            .map(|(i, _)| i)
            .collect();
        if idx.is_empty() {
            return Err(TransferError::EmptySubsequence(name.into()));
        }
        if idx.windows(2).any(|w| w[1] != w[0] + 1) {
            return Err(TransferError::NotContiguous(name.into()));
        }
        members.push(idx);
    }
    if members[0].last() >= members[1].first() {
        return Err(TransferError::Overlap {
            first: names[0].into(),
            second: names[1].into(),
        });
    }

    let objects: Vec<ObjectConstraint> = names
        .iter()
        .zip(&members)
        .map(|(name, idx)| {
            let inv = inst.pose(name).inverse();
            ObjectConstraint {
                object: (*name).into(),
                demo_indices: idx.iter().map(|&i| seq.breakpoints[i]).collect(),
                relative_poses: idx.iter().map(|&i| inv.compose(&seq.poses[i])).collect(),
                gripper: idx.iter().map(|&i| seq.gripper[i]).collect(),
                screws: idx.windows(2).map(|w| seq.segments[w[0]].screw).collect(),
            }
        })
        .collect();
    let bridge = Bridge {
        from_object: names[0].into(),
        to_object: names[1].into(),
        from_demo_index: *objects[0].demo_indices.last().unwrap(),
        to_demo_index: objects[1].demo_indices[0],
    };
    Ok(TransferableConstraint {
        kind: inst.kind,
        source_demo_id: seq.source_demo_id.clone(),
        radius,
        objects,
        bridge,
    })
}

/// Replays the stored constraints on `new_inst`.
///
/// Waypoints of the first object come first, then those of the second; the
/// pair straddling the two is the bridge.
pub fn transfer(tc: &TransferableConstraint, new_inst: &TaskInstance) -> Result<Vec<Waypoint>, TransferError> {
    if tc.kind != new_inst.kind {
        return Err(TransferError::KindMismatch {
            expected: tc.kind,
            actual: new_inst.kind,
        });
    }
    new_inst.validate()?;
    let mut out = Vec::new();
    for oc in &tc.objects {
        let g = new_inst.pose(&oc.object);
        out.extend(oc.relative_poses.iter().zip(&oc.gripper).map(|(rel, &gripper)| Waypoint {
            pose: g.compose(rel),
            gripper,
            object: oc.object.clone(),
        }));
    }
    Ok(out)
}

/// One stored segment as seen from its object's frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentSummary {
    pub from_demo_index: usize,
    pub to_demo_index: usize,
    pub kind: ScrewKind,
    /// Unit axis direction in the object frame.
    pub axis: [f64; 3],
    /// Closest point of the axis to the object origin; zero for translations.
    pub axis_point: [f64; 3],
    pub pitch: Option<f64>,
    /// Rotation angle (rad) for general screws, distance (m) for translations.
    pub magnitude: f64,
    pub rotation: f64,
    pub translation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectSummary {
    pub object: String,
    pub breakpoints: usize,
    pub segments: Vec<SegmentSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub kind: TaskKind,
    pub source_demo_id: String,
    pub radius: f64,
    pub objects: Vec<ObjectSummary>,
}

pub fn constraint_report(tc: &TransferableConstraint) -> ConstraintReport {
    let objects = tc
        .objects
        .iter()
        .map(|oc| ObjectSummary {
            object: oc.object.clone(),
            breakpoints: oc.relative_poses.len(),
            segments: oc
                .screws
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let s_obj = transform_screw(s, &oc.relative_poses[i]);
                    SegmentSummary {
                        from_demo_index: oc.demo_indices[i],
                        to_demo_index: oc.demo_indices[i + 1],
                        kind: s_obj.kind,
                        axis: s_obj.axis.into(),
                        axis_point: s_obj.axis_point().into(),
                        pitch: s_obj.pitch,
                        magnitude: s_obj.magnitude,
                        rotation: s_obj.rotation_angle(),
                        translation: s_obj.axial_translation(),
                    }
                })
                .collect(),
        })
        .collect();
    ConstraintReport {
        kind: tc.kind,
        source_demo_id: tc.source_demo_id.clone(),
        radius: tc.radius,
        objects,
    }
}

/// Screws between consecutive waypoints, each in the frame of its start.
pub fn waypoint_screws(waypoints: &[Waypoint]) -> Vec<ScrewDisplacement> {
    waypoints.windows(2).map(|w| screw_from_poses(&w[0].pose, &w[1].pose)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::random_pose;
    use crate::segment::{segment_demo, Demonstration, FitTolerance};
    use crate::synth::{chain_from_screws, unit, ChainSpec};
    use nalgebra::Vector3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Three segments ending near the pod, a long transit, four near the slot.
    fn pick_place() -> (ScrewSegmentSequence, TaskInstance) {
        let pod = Pose::from_translation(0.4, -0.3, 0.1);
        let slot = Pose::new(
            nalgebra::UnitQuaternion::from_axis_angle(&nalgebra::Vector3::y_axis(), 0.7),
            Vector3::new(0.5, 0.3, 0.5),
        );
        let mut poses = Vec::new();
        let pts = [
            pod.compose(&Pose::from_translation(0.0, 0.0, 0.04)),
            pod.compose(&Pose::from_translation(0.0, 0.02, 0.01)),
            pod.compose(&Pose::from_translation(0.01, 0.0, 0.03)),
            slot.compose(&Pose::from_translation(0.0, 0.0, 0.04)),
            slot.compose(&Pose::from_translation(0.0, 0.0, 0.02)),
            slot.compose(&Pose::from_translation(0.0, 0.01, 0.0)),
            slot.compose(&Pose::from_translation(0.0, 0.0, -0.03)),
        ];
        let start = pts[0];
        let mut prev = start;
        poses.push(start);
        for p in &pts[1..] {
            // dense sampling keeps the continuity gate happy on the transit
            for k in 1..=20 {
                poses.push(crate::screw::sclerp(&prev, p, k as f64 / 20.0));
            }
            prev = *p;
        }
        let d = Demonstration::from_poses("pp", poses).unwrap();
        // tight tolerance so every corner is resolved at its exact sample
        let seq = segment_demo(&d, FitTolerance::new(1e-4, 0.05f64.to_radians()).unwrap()).unwrap();
        (seq, TaskInstance::transplant(pod, slot))
    }

    #[test]
    fn splits_into_pod_and_slot_subsequences() {
        let (seq, inst) = pick_place();
        assert_eq!(seq.breakpoints.len(), 7);
        let tc = extract_roi(&seq, &inst, 0.15).unwrap();
        assert_eq!(tc.objects[0].relative_poses.len(), 3);
        assert_eq!(tc.objects[1].relative_poses.len(), 4);
        assert_eq!(tc.bridge.from_demo_index, 40);
        assert_eq!(tc.bridge.to_demo_index, 60);
        for oc in &tc.objects {
            let g = inst.pose(&oc.object);
            for (rel, k) in oc.relative_poses.iter().zip(&oc.demo_indices) {
                let bp = seq.breakpoints.iter().position(|b| b == k).unwrap();
                let (dp, dr) = g.compose(rel).distance_to(&seq.poses[bp]);
                assert!(dp < 1e-12 && dr < 1e-12);
            }
        }
    }

    #[test]
    fn small_radius_gives_empty_subsequence() {
        let (seq, inst) = pick_place();
        assert_eq!(extract_roi(&seq, &inst, 0.005), Err(TransferError::EmptySubsequence("pod".into())));
        assert!(matches!(extract_roi(&seq, &inst, 5.0), Err(TransferError::Overlap { .. })));
        assert_eq!(extract_roi(&seq, &inst, -1.0), Err(TransferError::InvalidRadius(-1.0)));
    }

    #[test]
    fn identity_transfer_reproduces_breakpoints() {
        let (seq, inst) = pick_place();
        let tc = extract_roi(&seq, &inst, 0.15).unwrap();
        let w = transfer(&tc, &inst).unwrap();
        assert_eq!(w.len(), 7);
        for (wp, p) in w.iter().zip(&seq.poses) {
            let (dp, dr) = wp.pose.distance_to(p);
            assert!(dp < 1e-12 && dr < 1e-12);
        }
    }

    #[test]
    fn moving_the_slot_moves_only_slot_waypoints() {
        let (seq, inst) = pick_place();
        let tc = extract_roi(&seq, &inst, 0.15).unwrap();
        let before = transfer(&tc, &inst).unwrap();
        let mut moved = inst.clone();
        let s = moved.objects.get_mut("slot").unwrap();
        *s = Pose::from_translation(0.0, 0.1, 0.0).compose(s);
        let after = transfer(&tc, &moved).unwrap();
        for (a, b) in before.iter().zip(&after) {
            let shift = b.pose.translation - a.pose.translation;
            let want = if a.object == "slot" { Vector3::new(0.0, 0.1, 0.0) } else { Vector3::zeros() };
            assert!((shift - want).norm() < 1e-12);
            assert!(a.pose.rotation_angle_to(&b.pose) < 1e-12);
        }
    }

    #[test]
    fn scene_transform_is_equivariant() {
        let (seq, inst) = pick_place();
        let tc = extract_roi(&seq, &inst, 0.15).unwrap();
        let base = transfer(&tc, &inst).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let t = random_pose(&mut rng, 1.0);
            let moved = transfer(&tc, &inst.transformed(&t)).unwrap();
            for (a, b) in base.iter().zip(&moved) {
                let (dp, dr) = t.compose(&a.pose).distance_to(&b.pose);
                assert!(dp < 1e-9 && dr < 1e-9);
            }
            for (s, w) in tc.objects[1].screws.iter().zip(waypoint_screws(&moved[3..])) {
                assert!((s.magnitude - w.magnitude).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn kind_and_names_are_checked() {
        let (seq, inst) = pick_place();
        let tc = extract_roi(&seq, &inst, 0.15).unwrap();
        let h = TaskInstance::harvest(Pose::identity(), Pose::identity());
        assert!(matches!(transfer(&tc, &h), Err(TransferError::KindMismatch { .. })));
        let mut bad = inst.objects.clone();
        bad.remove("pod");
        assert!(matches!(TaskInstance::new(TaskKind::Transplant, bad), Err(TransferError::MissingObject { .. })));
        let mut extra = inst.objects.clone();
        extra.insert("tray".into(), Pose::identity());
        assert!(matches!(TaskInstance::new(TaskKind::Transplant, extra), Err(TransferError::UnexpectedObject { .. })));
    }

    #[test]
    fn report_roundtrips_and_expresses_screws_in_object_frame() {
        let (seq, inst) = pick_place();
        let tc = extract_roi(&seq, &inst, 0.15).unwrap();
        let r = constraint_report(&tc);
        let json = serde_json::to_string(&r).unwrap();
        let back: ConstraintReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        // last slot segment: straight down the slot's z axis
        let last = r.objects[1].segments.last().unwrap();
        assert_eq!(last.kind, ScrewKind::PureTranslation);
        assert!((Vector3::from(last.axis) - Vector3::new(0.0, -0.01, -0.03).normalize()).norm() < 1e-9);
    }

    #[test]
    fn non_contiguous_membership_is_rejected() {
        let spec = ChainSpec {
            noise_position: 0.0,
            noise_rotation: 0.0,
            ..ChainSpec::default()
        };
        let out = ScrewDisplacement::translation_along(&unit(1.0, 0.0, 0.0), 0.2);
        let back = ScrewDisplacement::translation_along(&unit(-1.0, 0.0, 0.0), 0.2);
        let up = ScrewDisplacement::translation_along(&unit(0.0, 0.0, 1.0), 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = chain_from_screws(&mut rng, &Pose::identity(), &[out, back, up], &spec);
        let seq = segment_demo(&s.demo, FitTolerance::default()).unwrap();
        let inst = TaskInstance::transplant(Pose::identity(), Pose::from_translation(0.2, 0.0, 0.0));
        assert_eq!(extract_roi(&seq, &inst, 0.05), Err(TransferError::NotContiguous("pod".into())));
    }
}
