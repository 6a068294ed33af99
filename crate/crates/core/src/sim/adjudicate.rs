//! Geometric success checks for executed transplant and harvest paths.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::panel::{GripperGeometry, GrowPanel, LocalBox, SaplingPod, Slot};
use super::FailureMode;
use crate::kinematics::JointPath;
use crate::screw::Pose;
use crate::segment::Gripper;

/// Radial extent of the collar material around a slot axis. Fixed rather
/// than tied to the slot radius so that widening a slot only removes material.
pub const SLOT_BODY_RADIUS: f64 = 0.025;

/// Path samples whose tool point is farther than this from the slot mouth
/// are not collision checked against the slot.
const CHECK_RADIUS: f64 = 0.3;

/// Pod overlap with the slot wall that the compliant pod absorbs (m).
pub const CONTACT_TOLERANCE: f64 = 1e-4;

/// Spacing of the sample points used for gripper collision checks (m).
const FINGER_SAMPLE_SPACING: f64 = 0.0015;
const HAND_SAMPLE_SPACING: f64 = 0.005;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub center: Vector3<f64>,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adjudication {
    pub failure: FailureMode,
    /// Path sample at which the first check failed.
    pub failed_at: Option<usize>,
    /// Final depth of the pod bottom below the mouth plane (m).
    pub insertion_depth: Option<f64>,
    /// Smallest lateral clearance between pod and slot wall along the path (m).
    pub min_clearance: Option<f64>,
    /// Pod pose left in the slot after a transplant.
    pub planted: Option<Pose>,
    pub detail: Option<String>,
}

impl Adjudication {
    pub fn success(&self) -> bool {
        self.failure == FailureMode::None
    }

    fn fail(failure: FailureMode, at: Option<usize>, detail: String) -> Self {
        Self {
            failure,
            failed_at: at,
            insertion_depth: None,
            min_clearance: None,
            planted: None,
            detail: Some(detail),
        }
    }
}

/// Radial distance from the slot axis and height above the mouth plane.
fn slot_coords(slot: &Slot, p: &Vector3<f64>) -> (f64, f64) {
    let q = slot.frame.inverse().transform_point(p);
    ((q.x * q.x + q.y * q.y).sqrt(), q.z)
}

/// Lateral clearance of a pod in a slot: slot radius minus the largest radial
/// distance of the part of the pod between the mouth plane and the collar
/// end. `None` when no part of the pod is in that region.
pub fn pod_clearance(slot: &Slot, pod: &SaplingPod, pod_pose: &Pose) -> Option<f64> {
    let to_slot = slot.frame.inverse().compose(pod_pose);
    let corners = pod.local_box().corners().map(|c| to_slot.transform_point(&c));
    let (z_lo, z_hi) = (-slot.depth, 0.0);
    let inside = |p: &Vector3<f64>| p.z >= z_lo && p.z <= z_hi;
    // vertices of the pod clipped to the slab
    let mut verts: Vec<Vector3<f64>> = corners.iter().copied().filter(inside).collect();
    for (i, j) in LocalBox::EDGES {
        let (a, b) = (corners[i], corners[j]);
        for zc in [z_lo, z_hi] {
            let den = b.z - a.z;
            if den.abs() < 1e-15 {
                continue;
            }
            let t = (zc - a.z) / den;
            if (0.0..=1.0).contains(&t) {
                verts.push(a + (b - a) * t);
            }
        }
    }
    let radial = |p: &Vector3<f64>| (p.x * p.x + p.y * p.y).sqrt();
    if !verts.iter().any(|p| radial(p) <= SLOT_BODY_RADIUS) {
        return None;
    }
    let worst = verts.iter().map(radial).fold(0.0, f64::max);
    Some(slot.radius - worst)
}

/// Depth of the pod frame below the mouth and its radial offset from the axis.
pub fn insertion(slot: &Slot, pod_pose: &Pose) -> (f64, f64) {
    let (rho, z) = slot_coords(slot, &pod_pose.translation);
    (-z, rho)
}

/// Point samples of the gripper volumes, with the point-in-material test
/// evaluated in slot and tube coordinates.
struct GripperSamples {
    points: Vec<Vector3<f64>>,
}

impl GripperSamples {
    fn new(g: &GripperGeometry) -> Self {
        let mut points: Vec<Vector3<f64>> = g.fingers.iter().flat_map(|b| b.sample_points(FINGER_SAMPLE_SPACING)).collect();
        points.extend(g.hand.sample_points(HAND_SAMPLE_SPACING));
        Self { points }
    }

    fn hits(&self, panel: &GrowPanel, slot: &Slot, tcp: &Pose) -> bool {
        let to_slot = slot.frame.inverse().compose(tcp);
        let (rs, ts) = (to_slot.rotation.to_rotation_matrix().into_inner(), to_slot.translation);
        let tube = &panel.tubes[slot.tube];
        let to_tube = tube.base.inverse().compose(tcp);
        let (rt, tt) = (to_tube.rotation.to_rotation_matrix().into_inner(), to_tube.translation);
        let r2 = tube.radius() * tube.radius();
        self.points.iter().any(|p| {
            let q = rs * p + ts;
            let rho = (q.x * q.x + q.y * q.y).sqrt();
            if q.z >= -slot.depth && q.z <= 0.0 && rho >= slot.radius && rho <= SLOT_BODY_RADIUS {
                return true;
            }
            let q = rt * p + tt;
            q.z >= 0.0 && q.z <= tube.length && q.x * q.x + q.y * q.y < r2
        })
    }
}

fn sphere_hits_box(s: &Sphere, b: &LocalBox, frame: &Pose) -> bool {
    let c = frame.inverse().transform_point(&s.center);
    (b.closest_point(&c) - c).norm() < s.radius
}

fn event_index(path: &JointPath, state: Gripper, after: usize) -> Option<usize> {
    path.gripper_events
        .iter()
        .find(|e| e.state == state && e.index >= after)
        .map(|e| e.index)
}

/// Pod pose relative to the tool once the jaws close: the pod is centred
/// along the closing direction (tool x) and otherwise keeps its offset.
fn grasp_offset(tcp: &Pose, pod: &Pose) -> Pose {
    let mut rel = tcp.inverse().compose(pod);
    rel.translation.x = 0.0;
    rel
}

#[derive(Clone, Debug)]
pub struct TransplantCheck<'a> {
    pub panel: &'a GrowPanel,
    pub slot: usize,
    pub pod: &'a SaplingPod,
    pub gripper: &'a GripperGeometry,
    /// Where the pod actually is before it is picked.
    pub pod_pose: Pose,
    pub insertion_threshold: f64,
}

/// Success means the pod ends inside the slot at least `insertion_threshold`
/// deep, its clearance to the slot wall never goes negative, and the gripper
/// never enters slot or tube material. The first violation along the path
/// decides the failure mode.
pub fn check_transplant(path: &JointPath, c: &TransplantCheck) -> Adjudication {
    let slot = &c.panel.slots[c.slot];
    let Some(close) = event_index(path, Gripper::Closed, 0) else {
        return Adjudication::fail(FailureMode::PartialInsertion, None, "pod was never grasped".into());
    };
    let open = event_index(path, Gripper::Open, close).unwrap_or(path.len() - 1);
    let rel = grasp_offset(&path.poses[close], &c.pod_pose);
    let samples = GripperSamples::new(c.gripper);
    let mut min_clearance: Option<f64> = None;
    for (k, tcp) in path.poses.iter().enumerate() {
        if k >= close && k <= open {
            let pod = tcp.compose(&rel);
            if let Some(cl) = pod_clearance(slot, c.pod, &pod) {
                min_clearance = Some(min_clearance.map_or(cl, |m| m.min(cl)));
                if cl < -CONTACT_TOLERANCE {
                    let mut a = Adjudication::fail(
                        FailureMode::PartialInsertion,
                        Some(k),
                        format!("pod jammed against the slot wall ({:.1} mm overlap)", -cl * 1e3),
                    );
                    a.min_clearance = min_clearance;
                    a.insertion_depth = Some(insertion(slot, &pod).0);
                    return a;
                }
            }
        }
        if (tcp.translation - slot.mouth()).norm() < CHECK_RADIUS && samples.hits(c.panel, slot, tcp) {
            let mut a = Adjudication::fail(FailureMode::GripperSlotCollision, Some(k), "gripper entered slot material".into());
            a.min_clearance = min_clearance;
            return a;
        }
    }
    let planted = path.poses[open].compose(&rel);
    let (depth, rho) = insertion(slot, &planted);
    let mut a = Adjudication {
        failure: FailureMode::None,
        failed_at: None,
        insertion_depth: Some(depth),
        min_clearance,
        planted: Some(planted),
        detail: None,
    };
    if depth < c.insertion_threshold || rho >= slot.radius {
        a.failure = FailureMode::PartialInsertion;
        a.failed_at = Some(open);
        a.detail = Some(format!("pod released at depth {:.1} mm, {:.1} mm off axis", depth * 1e3, rho * 1e3));
    }
    a
}

#[derive(Clone, Debug)]
pub struct HarvestCheck<'a> {
    pub panel: &'a GrowPanel,
    pub slot: usize,
    pub pod: &'a SaplingPod,
    pub gripper: &'a GripperGeometry,
    /// True pose of the planted pod.
    pub pod_pose: Pose,
    /// Foliage of neighbouring plants.
    pub foliage: &'a [Sphere],
    /// `[position, rotation]` tolerance on the grasp pose.
    pub grasp_tolerance: [f64; 2],
}

/// Success means the grasp lands within tolerance of the planted pod, the
/// pod and gripper clear the slot on the way out, and no neighbouring foliage
/// reaches between the gripper tips while the pod is still in the slot.
pub fn check_harvest(path: &JointPath, c: &HarvestCheck) -> Adjudication {
    let slot = &c.panel.slots[c.slot];
    let Some(close) = event_index(path, Gripper::Closed, 0) else {
        return Adjudication::fail(FailureMode::PerceptionFailure, None, "pod was never grasped".into());
    };
    let want = c.pod_pose.compose(&c.pod.grasp);
    let (dp, dr) = path.poses[close].distance_to(&want);
    if dp > c.grasp_tolerance[0] || dr > c.grasp_tolerance[1] {
        return Adjudication::fail(
            FailureMode::PerceptionFailure,
            Some(close),
            format!("grasp missed the pod by {:.1} mm / {:.1} deg", dp * 1e3, dr.to_degrees()),
        );
    }
    // the slot holds a planted pod in place while the jaws comply around it
    let rel = path.poses[close].inverse().compose(&c.pod_pose);
    let tips = c.gripper.tips();
    let samples = GripperSamples::new(c.gripper);
    let mut min_clearance: Option<f64> = None;
    let mut extracting = true;
    for (k, tcp) in path.poses.iter().enumerate() {
        if (tcp.translation - slot.mouth()).norm() < CHECK_RADIUS && samples.hits(c.panel, slot, tcp) {
            let mut a = Adjudication::fail(FailureMode::GripperSlotCollision, Some(k), "gripper entered slot material".into());
            a.min_clearance = min_clearance;
            return a;
        }
        if k < close {
            continue;
        }
        let pod = tcp.compose(&rel);
        if let Some(cl) = pod_clearance(slot, c.pod, &pod) {
            min_clearance = Some(min_clearance.map_or(cl, |m| m.min(cl)));
            if cl < -CONTACT_TOLERANCE {
                let mut a = Adjudication::fail(
                    FailureMode::GripperSlotCollision,
                    Some(k),
                    format!("pod dragged against the slot wall ({:.1} mm overlap)", -cl * 1e3),
                );
                a.min_clearance = min_clearance;
                return a;
            }
        }
        // snags count while the pod is still being pulled out of the slot
        extracting &= insertion(slot, &pod).0 > 0.0;
        if extracting && c.foliage.iter().any(|s| sphere_hits_box(s, &tips, tcp)) {
            let mut a = Adjudication::fail(FailureMode::NeighborPlantSnag, Some(k), "closed gripper caught neighbouring foliage".into());
            a.min_clearance = min_clearance;
            return a;
        }
    }
    Adjudication {
        failure: FailureMode::None,
        failed_at: None,
        insertion_depth: None,
        min_clearance,
        planted: None,
        detail: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::GripperEvent;

    /// Pod seated `depth` deep, offset `lateral` towards a corner of its square.
    fn slot_pose(slot: &Slot, depth: f64, lateral: f64) -> Pose {
        let d = lateral * std::f64::consts::FRAC_1_SQRT_2;
        slot.frame.compose(&Pose::from_translation(d, d, -depth))
    }

    /// Straight insertion along the slot axis from 80 mm out, then release.
    fn insertion_path(slot: &Slot, pod: &SaplingPod, depth: f64, lateral: f64) -> (JointPath, Pose) {
        let start = slot_pose(slot, depth - 0.08, lateral);
        let n = 81;
        let mut poses = Vec::new();
        for i in 0..n {
            let f = i as f64 / (n - 1) as f64;
            let p = start.compose(&Pose::from_translation(0.0, 0.0, -0.08 * f));
            poses.push(p.compose(&pod.grasp));
        }
        // pod starts in the gripper
        let path = JointPath {
            configurations: vec![vec![]; n],
            poses: poses.clone(),
            targets: poses,
            deviations: vec![[0.0; 2]; n],
            waypoint_indices: vec![0, n - 1],
            gripper_events: vec![
                GripperEvent {
                    index: 0,
                    state: Gripper::Closed,
                },
                GripperEvent {
                    index: n - 1,
                    state: Gripper::Open,
                },
            ],
        };
        (path, start)
    }

    fn run(slot: &str, depth: f64, lateral: f64) -> Adjudication {
        let panel = GrowPanel::bundled();
        let k = panel.slot_index(slot).unwrap();
        let pod = SaplingPod::default();
        let (path, start) = insertion_path(&panel.slots[k], &pod, depth, lateral);
        check_transplant(
            &path,
            &TransplantCheck {
                panel: &panel,
                slot: k,
                pod: &pod,
                gripper: &GripperGeometry::default(),
                pod_pose: start,
                insertion_threshold: 0.03,
            },
        )
    }

    #[test]
    fn centred_insertion_succeeds_with_expected_clearance() {
        let a = run("A2", 0.04, 0.0);
        assert!(a.success(), "{a:?}");
        assert!((a.insertion_depth.unwrap() - 0.04).abs() < 1e-9);
        // 15 mm slot radius minus the pod half-diagonal
        assert!((a.min_clearance.unwrap() - 0.0044).abs() < 1e-4);
        let b = run("B1", 0.04, 0.0);
        assert!(b.success());
        assert!(b.min_clearance.unwrap() > a.min_clearance.unwrap());
    }

    #[test]
    fn lateral_offset_beyond_clearance_fails() {
        let a = run("A2", 0.04, 0.005);
        assert!(!a.success());
        assert!(matches!(a.failure, FailureMode::PartialInsertion | FailureMode::GripperSlotCollision));
        // the wider slot absorbs the same offset
        assert!(run("B1", 0.04, 0.005).success());
    }

    #[test]
    fn shallow_insertion_is_partial() {
        let a = run("C1", 0.02, 0.0);
        assert_eq!(a.failure, FailureMode::PartialInsertion);
        assert!((a.insertion_depth.unwrap() - 0.02).abs() < 1e-9);
    }

    #[test]
    fn fingers_below_the_mouth_collide() {
        // grasp point is 45 mm up the pod, so 50 mm depth puts the tips 5 mm in
        let a = run("A1", 0.05, 0.0);
        assert_eq!(a.failure, FailureMode::GripperSlotCollision);
    }

    #[test]
    fn clearance_geometry() {
        let panel = GrowPanel::bundled();
        let slot = panel.slot("A3").unwrap();
        let pod = SaplingPod::default();
        assert!(pod_clearance(slot, &pod, &slot_pose(slot, -0.1, 0.0)).is_none());
        let c = pod_clearance(slot, &pod, &slot_pose(slot, 0.01, 0.002)).unwrap();
        assert!((c - (0.015 - pod.half_diagonal() - 0.002)).abs() < 1e-12);
        let side = slot.frame.compose(&Pose::from_translation(0.002, 0.0, -0.01));
        let c = pod_clearance(slot, &pod, &side).unwrap();
        assert!((c - (0.015 - (0.0095f64.powi(2) + 0.0075f64.powi(2)).sqrt())).abs() < 1e-12);
        let s = Sphere {
            center: Vector3::new(0.0, 0.0, 0.5),
            radius: 0.1,
        };
        let b = LocalBox::new([-0.1, -0.1, 0.0], [0.1, 0.1, 0.39]);
        assert!(!sphere_hits_box(&s, &b, &Pose::identity()));
        assert!(sphere_hits_box(&s, &b, &Pose::from_translation(0.0, 0.0, 0.02)));
    }

    /// Grasp at `planted`, pull 80 mm out along the slot axis.
    fn extraction_path(slot: &Slot, pod: &SaplingPod, grasp_error: f64) -> JointPath {
        let planted = slot_pose(slot, 0.04, 0.0);
        let grasp = planted.compose(&Pose::from_translation(grasp_error, 0.0, 0.0)).compose(&pod.grasp);
        let n = 81;
        let poses: Vec<Pose> = (0..n)
            .map(|i| slot.frame.compose(&Pose::from_translation(0.0, 0.0, 0.08 * i as f64 / (n - 1) as f64)).compose(&slot.frame.inverse().compose(&grasp)))
            .collect();
        JointPath {
            configurations: vec![vec![]; n],
            poses: poses.clone(),
            targets: poses,
            deviations: vec![[0.0; 2]; n],
            waypoint_indices: vec![0, n - 1],
            gripper_events: vec![GripperEvent {
                index: 0,
                state: Gripper::Closed,
            }],
        }
    }

    fn harvest(slot: &str, grasp_error: f64, foliage: &[Sphere]) -> Adjudication {
        let panel = GrowPanel::bundled();
        let k = panel.slot_index(slot).unwrap();
        let pod = SaplingPod::default();
        let path = extraction_path(&panel.slots[k], &pod, grasp_error);
        check_harvest(
            &path,
            &HarvestCheck {
                panel: &panel,
                slot: k,
                pod: &pod,
                gripper: &GripperGeometry::default(),
                pod_pose: slot_pose(&panel.slots[k], 0.04, 0.0),
                foliage,
                grasp_tolerance: [0.008, 10f64.to_radians()],
            },
        )
    }

    #[test]
    fn clean_extraction_succeeds() {
        let a = harvest("B2", 0.0, &[]);
        assert!(a.success(), "{a:?}");
        assert!(a.min_clearance.unwrap() > 0.0);
    }

    #[test]
    fn missed_grasp_is_a_perception_failure() {
        assert_eq!(harvest("B2", 0.01, &[]).failure, FailureMode::PerceptionFailure);
    }

    #[test]
    fn foliage_between_the_tips_snags() {
        let panel = GrowPanel::bundled();
        let slot = panel.slot("A2").unwrap();
        // just beside the fingers at the mouth
        let leaf = Sphere {
            center: slot.frame.transform_point(&Vector3::new(0.035, 0.0, 0.02)),
            radius: 0.03,
        };
        assert_eq!(harvest("A2", 0.0, &[leaf]).failure, FailureMode::NeighborPlantSnag);
        // far out along the axis, reached only after the pod has left the slot
        let late = Sphere {
            center: slot.frame.transform_point(&Vector3::new(0.0, 0.0, 0.2)),
            radius: 0.04,
        };
        assert!(harvest("A2", 0.0, &[late]).success());
    }
}
