//! Grow panel, pod and gripper geometry.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::random::perturb_pose;
use crate::screw::Pose;

/// One vertical growing tube and the layout of its slots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TubeSpec {
    pub id: String,
    /// Bottom centre of the tube, z along the tube axis. Slots face local −x.
    pub base: Pose,
    pub length: f64,
    pub outer_diameter: f64,
    pub slot_diameter: f64,
    pub slot_spacing: f64,
    /// Angle between the slot axis and the horizontal (rad).
    pub slot_angle: f64,
    pub slot_count: usize,
    /// Height of the first slot axis above the tube base (m).
    pub first_slot_height: f64,
    /// Length of the slot collar, i.e. the slot depth (m).
    pub collar_length: f64,
    /// Collar wall thickness (m).
    pub rim: f64,
}

impl TubeSpec {
    pub fn radius(&self) -> f64 {
        0.5 * self.outer_diameter
    }

    /// Distance along the slot axis from the tube axis to the mouth, chosen so
    /// the whole mouth clears the tube surface by 10 mm.
    fn mouth_distance(&self) -> f64 {
        let (s, c) = self.slot_angle.sin_cos();
        let r_o = 0.5 * self.slot_diameter + self.rim;
        (self.radius() + 0.01 + r_o * s) / c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PanelSpec {
    pub tubes: Vec<TubeSpec>,
    /// x coordinate of the wall behind the panel (m).
    pub wall_x: f64,
}

impl PanelSpec {
    /// Three tubes of different specification and two slot diameters.
    pub fn bundled() -> Self {
        let tube = |id: &str, y: f64, od: f64, sd: f64, spacing: f64, deg: f64| TubeSpec {
            id: id.into(),
            base: Pose::from_translation(0.58, y, 0.0),
            length: 0.9,
            outer_diameter: od,
            slot_diameter: sd,
            slot_spacing: spacing,
            slot_angle: f64::to_radians(deg),
            slot_count: 4,
            first_slot_height: 0.25,
            collar_length: 0.035,
            rim: 0.005,
        };
        Self {
            tubes: vec![
                tube("A", -0.22, 0.100, 0.030, 0.15, 45.0),
                tube("B", 0.0, 0.110, 0.035, 0.16, 40.0),
                tube("C", 0.22, 0.090, 0.030, 0.14, 50.0),
            ],
            wall_x: 0.9,
        }
    }
}

/// A slot, with its frame at the mouth centre and z pointing out of the tube.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub id: String,
    pub tube: usize,
    pub frame: Pose,
    pub radius: f64,
    pub depth: f64,
    pub rim: f64,
    pub angle: f64,
}

impl Slot {
    pub fn axis(&self) -> Vector3<f64> {
        self.frame.axis(2)
    }

    pub fn mouth(&self) -> Vector3<f64> {
        self.frame.translation
    }

    pub fn outer_radius(&self) -> f64 {
        self.radius + self.rim
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.radius
    }
}

/// Slot frame for an outward axis `a`: x is world-up projected off the axis.
pub fn slot_frame(mouth: Vector3<f64>, a: Vector3<f64>) -> Pose {
    let z = a.normalize();
    let up = Vector3::z();
    let x = (up - z * z.dot(&up)).normalize();
    let y = z.cross(&x);
    let r = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z]));
    Pose::new(UnitQuaternion::from_rotation_matrix(&r), mouth)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowPanel {
    pub tubes: Vec<TubeSpec>,
    pub slots: Vec<Slot>,
    pub wall_x: f64,
}

impl GrowPanel {
    pub fn from_spec(spec: &PanelSpec) -> Self {
        let mut slots = Vec::new();
        for (ti, t) in spec.tubes.iter().enumerate() {
            let (s, c) = t.slot_angle.sin_cos();
            let a_local = Vector3::new(-c, 0.0, s);
            let dist = t.mouth_distance();
            for k in 0..t.slot_count {
                let h = t.first_slot_height + k as f64 * t.slot_spacing;
                let mouth = t.base.transform_point(&(Vector3::new(0.0, 0.0, h) + a_local * dist));
                let a = t.base.transform_vector(&a_local);
                slots.push(Slot {
                    id: format!("{}{}", t.id, k + 1),
                    tube: ti,
                    frame: slot_frame(mouth, a),
                    radius: 0.5 * t.slot_diameter,
                    depth: t.collar_length,
                    rim: t.rim,
                    angle: t.slot_angle,
                });
            }
        }
        Self {
            tubes: spec.tubes.clone(),
            slots,
            wall_x: spec.wall_x,
        }
    }

    pub fn bundled() -> Self {
        Self::from_spec(&PanelSpec::bundled())
    }

    pub fn slot(&self, id: &str) -> Option<&Slot> {
        self.slots.iter().find(|s| s.id == id)
    }

    pub fn slot_index(&self, id: &str) -> Option<usize> {
        self.slots.iter().position(|s| s.id == id)
    }

    /// Copy with every slot frame perturbed, modelling an as-built panel.
    pub fn jittered<R: Rng + ?Sized>(&self, rng: &mut R, sigma_p: f64, sigma_r: f64) -> Self {
        let mut out = self.clone();
        for s in &mut out.slots {
            let f = perturb_pose(rng, &s.frame, sigma_p, sigma_r);
            // keep the world-up spin convention of the slot frame
            s.frame = slot_frame(f.translation, f.axis(2));
        }
        out
    }

    /// Other slots whose mouths lie within `radius` of slot `index`.
    pub fn neighbours(&self, index: usize, radius: f64) -> Vec<usize> {
        let m = self.slots[index].mouth();
        (0..self.slots.len())
            .filter(|&j| j != index && (self.slots[j].mouth() - m).norm() <= radius)
            .collect()
    }
}

/// Axis-aligned box in some local frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl LocalBox {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Self { min, max }
    }

    pub fn corners(&self) -> [Vector3<f64>; 8] {
        std::array::from_fn(|i| {
            Vector3::new(
                if i & 1 == 0 { self.min[0] } else { self.max[0] },
                if i & 2 == 0 { self.min[1] } else { self.max[1] },
                if i & 4 == 0 { self.min[2] } else { self.max[2] },
            )
        })
    }

    /// Pairs of corner indices forming the 12 edges.
    pub const EDGES: [(usize, usize); 12] = [
        (0, 1),
        (2, 3),
        (4, 5),
        (6, 7),
        (0, 2),
        (1, 3),
        (4, 6),
        (5, 7),
        (0, 4),
        (1, 5),
        (2, 6),
        (3, 7),
    ];

    /// Points on a regular grid through the box with at most `spacing` between them.
    pub fn sample_points(&self, spacing: f64) -> Vec<Vector3<f64>> {
        let n: [usize; 3] = std::array::from_fn(|k| ((self.max[k] - self.min[k]) / spacing).ceil().max(1.0) as usize);
        let mut pts = Vec::with_capacity((n[0] + 1) * (n[1] + 1) * (n[2] + 1));
        for i in 0..=n[0] {
            for j in 0..=n[1] {
                for k in 0..=n[2] {
                    let f = |d: usize, c: usize| self.min[d] + (self.max[d] - self.min[d]) * c as f64 / n[d] as f64;
                    pts.push(Vector3::new(f(0, i), f(1, j), f(2, k)));
                }
            }
        }
        pts
    }

    pub fn closest_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        Vector3::from_fn(|k, _| p[k].clamp(self.min[k], self.max[k]))
    }
}

/// Sapling pod: square prism with its frame at the bottom centre, z up.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaplingPod {
    pub side: f64,
    pub height: f64,
    /// Tool frame relative to the pod when grasped.
    pub grasp: Pose,
}

impl Default for SaplingPod {
    fn default() -> Self {
        Self {
            side: 0.015,
            height: 0.05,
            // tool z down the pod, jaws closing along the pod y axis
            grasp: Pose::new(
                UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI)
                    * UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2),
                Vector3::new(0.0, 0.0, 0.045),
            ),
        }
    }
}

impl SaplingPod {
    pub fn half_diagonal(&self) -> f64 {
        self.side * std::f64::consts::FRAC_1_SQRT_2
    }

    pub fn local_box(&self) -> LocalBox {
        let h = 0.5 * self.side;
        LocalBox::new([-h, -h, 0.0], [h, h, self.height])
    }
}

/// Parallel-jaw gripper volumes in the tool frame (z = approach, tips at z = 0).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GripperGeometry {
    pub fingers: Vec<LocalBox>,
    pub hand: LocalBox,
}

impl Default for GripperGeometry {
    fn default() -> Self {
        Self {
            fingers: vec![
                LocalBox::new([0.0075, -0.009, -0.045], [0.0155, 0.009, 0.0]),
                LocalBox::new([-0.0155, -0.009, -0.045], [-0.0075, 0.009, 0.0]),
            ],
            hand: LocalBox::new([-0.04, -0.02, -0.105], [0.04, 0.02, -0.045]),
        }
    }
}

impl GripperGeometry {
    pub fn boxes(&self) -> impl Iterator<Item = &LocalBox> {
        self.fingers.iter().chain(std::iter::once(&self.hand))
    }

    /// Bounding box of both fingers and the gap between them.
    pub fn tips(&self) -> LocalBox {
        let mut tips = self.fingers[0];
        for f in &self.fingers[1..] {
            for i in 0..3 {
                tips.min[i] = tips.min[i].min(f.min[i]);
                tips.max[i] = tips.max[i].max(f.max[i]);
            }
        }
        tips
    }
}
