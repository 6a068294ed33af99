//! Rigid-body poses, Chasles screw decomposition and screw linear interpolation.
//!
//! A [`Pose`] is an element of SE(3) stored as a unit quaternion and a
//! translation. Any relative displacement between two poses decomposes into a
//! rotation `θ` about a fixed axis plus a translation `d = hθ` along it; the
//! axis is kept in Plücker form `(ω, m)` with `m = r × ω` for the axis point
//! `r` nearest the origin. [`ScrewDisplacement`] holds that decomposition and
//! [`sclerp`] walks the geodesic between two poses by raising the relative
//! unit dual quaternion to a fractional power.
//!
//! Screws returned by [`screw_from_poses`] are expressed in the frame of the
//! starting pose, so `apply_screw(s, 1.0, g1) == g2` and left-multiplying both
//! poses by the same transform leaves the screw unchanged.

use std::f64::consts::PI;
use std::ops::Mul;

use nalgebra::{Matrix4, Quaternion, Unit, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::dual_quat::UnitDualQuaternion;

/// Numeric gates used when classifying a relative displacement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScrewTolerances {
    /// Rotation angles below this (radians) are treated as pure translation.
    pub pure_translation_angle: f64,
    /// Translations below this (meters) with no rotation give a degenerate screw.
    pub degenerate_translation: f64,
}

impl Default for ScrewTolerances {
    fn default() -> Self {
        Self {
            pure_translation_angle: 1e-8,
            degenerate_translation: 1e-9,
        }
    }
}

/// An element of SE(3).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: renormalize(rotation),
            translation,
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::new(UnitQuaternion::identity(), Vector3::new(x, y, z))
    }

    /// Rotation by `angle` about `axis` through the origin.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        Self::new(
            UnitQuaternion::from_axis_angle(&Unit::new_normalize(*axis), angle),
            Vector3::zeros(),
        )
    }

    pub fn rot_z(angle: f64) -> Self {
        Self::from_axis_angle(&Vector3::z(), angle)
    }

    /// Builds a pose from `[w, x, y, z]` quaternion components, normalizing them.
    pub fn from_wxyz(wxyz: [f64; 4], translation: [f64; 3]) -> Self {
        let q = Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        Self::new(
            UnitQuaternion::from_quaternion(q),
            Vector3::from(translation),
        )
    }

    /// Like [`Pose::from_wxyz`], but components within `tol` of unit norm are
    /// kept bit for bit so that stored poses reload exactly. Returns whether
    /// the quaternion had to be normalized.
    pub fn from_wxyz_within(wxyz: [f64; 4], translation: [f64; 3], tol: f64) -> (Self, bool) {
        let n = wxyz.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (n - 1.0).abs() > tol {
            return (Self::from_wxyz(wxyz, translation), true);
        }
        let q = Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        let pose = Self {
            rotation: UnitQuaternion::new_unchecked(q),
            translation: Vector3::from(translation),
        };
        (pose, false)
    }

    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    /// `self ∘ other`: apply `other`, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose::new(inv, -(inv * self.translation))
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// Geodesic rotation angle between the two orientations, in `[0, π]`.
    pub fn rotation_angle_to(&self, other: &Pose) -> f64 {
        quaternion_angle(&(self.rotation.inverse() * other.rotation))
    }

    pub fn translation_distance_to(&self, other: &Pose) -> f64 {
        (self.translation - other.translation).norm()
    }

    /// Translation and rotation distance to `other`.
    pub fn distance_to(&self, other: &Pose) -> (f64, f64) {
        (
            self.translation_distance_to(other),
            self.rotation_angle_to(other),
        )
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(self.rotation.to_rotation_matrix().matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().all(|v| v.is_finite())
            && self.rotation.coords.iter().all(|v| v.is_finite())
    }

    /// Column `i` of the rotation matrix (the pose's `i`-th axis in the parent frame).
    pub fn axis(&self, i: usize) -> Vector3<f64> {
        self.rotation * Vector3::ith(i, 1.0)
    }
}

impl Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

impl Mul<&Pose> for &Pose {
    type Output = Pose;

    fn mul(self, rhs: &Pose) -> Pose {
        self.compose(rhs)
    }
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    position: [f64; 3],
    orientation: [f64; 4],
}

impl Serialize for Pose {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PoseRepr {
            position: self.translation.into(),
            orientation: self.wxyz(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = PoseRepr::deserialize(d)?;
        let n = repr.orientation.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !n.is_finite() || n < 1e-6 {
            return Err(serde::de::Error::custom("orientation quaternion has zero norm"));
        }
        Ok(Pose::from_wxyz_within(repr.orientation, repr.position, 1e-6).0)
    }
}

/// Free-function spelling of [`Pose::compose`].
pub fn compose(a: &Pose, b: &Pose) -> Pose {
    a.compose(b)
}

pub fn inverse(p: &Pose) -> Pose {
    p.inverse()
}

fn renormalize(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::new_normalize(q.into_inner())
}

/// Rotation angle of a unit quaternion in `[0, π]`, accurate near zero.
pub(crate) fn quaternion_angle(q: &UnitQuaternion<f64>) -> f64 {
    2.0 * q.imag().norm().atan2(q.w.abs())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScrewKind {
    General,
    PureTranslation,
}

/// A finite screw displacement `(ω, m, h, θ)`.
///
/// For [`ScrewKind::PureTranslation`] the pitch is infinite (stored as `None`),
/// the moment is zero and `magnitude` is the travelled distance `d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScrewDisplacement {
    pub kind: ScrewKind,
    pub axis: Vector3<f64>,
    pub moment: Vector3<f64>,
    pub pitch: Option<f64>,
    pub magnitude: f64,
    /// Set for the identity displacement, where the axis is arbitrary.
    #[serde(default)]
    pub degenerate: bool,
}

impl ScrewDisplacement {
    pub fn identity() -> Self {
        Self {
            kind: ScrewKind::PureTranslation,
            axis: Vector3::z(),
            moment: Vector3::zeros(),
            pitch: None,
            magnitude: 0.0,
            degenerate: true,
        }
    }

    /// Screw about the line through `point` with direction `axis`.
    pub fn rotation_about(axis: &Vector3<f64>, point: &Vector3<f64>, angle: f64, pitch: f64) -> Self {
        let w = axis.normalize();
        let (w, angle, pitch) = if angle < 0.0 { (-w, -angle, -pitch) } else { (w, angle, pitch) };
        let r = point - w * w.dot(point);
        Self {
            kind: ScrewKind::General,
            axis: w,
            moment: r.cross(&w),
            pitch: Some(pitch),
            magnitude: angle,
            degenerate: false,
        }
    }

    pub fn translation_along(direction: &Vector3<f64>, distance: f64) -> Self {
        let w = direction.normalize();
        let (w, d) = if distance < 0.0 { (-w, -distance) } else { (w, distance) };
        Self {
            kind: ScrewKind::PureTranslation,
            axis: w,
            moment: Vector3::zeros(),
            pitch: None,
            magnitude: d,
            degenerate: false,
        }
    }

    /// Chasles decomposition of a relative displacement.
    pub fn from_relative(rel: &Pose, tol: &ScrewTolerances) -> Self {
        let q = rel.rotation.quaternion();
        let (mut w, mut v) = (q.w, q.imag());
        if w < 0.0 {
            w = -w;
            v = -v;
        }
        let s = v.norm();
        let theta = 2.0 * s.atan2(w);
        let p = rel.translation;

        if theta < tol.pure_translation_angle {
            let d = p.norm();
            if d < tol.degenerate_translation {
                return Self::identity();
            }
            return Self::translation_along(&p, d);
        }

        let mut omega = v / s;
        if w < 1e-12 {
            // Half-turn: ±ω describe the same rotation.
            let k = omega.iamax();
            if omega[k] < 0.0 {
                omega = -omega;
            }
        }
        let d = omega.dot(&p);
        let p_perp = p - omega * d;
        // cot(θ/2) = w / s
        let r = 0.5 * (p_perp + (w / s) * omega.cross(&p_perp));
        Self {
            kind: ScrewKind::General,
            axis: omega,
            moment: r.cross(&omega),
            pitch: Some(d / theta),
            magnitude: theta,
            degenerate: false,
        }
    }

    /// Point on the axis nearest the origin.
    pub fn axis_point(&self) -> Vector3<f64> {
        self.axis.cross(&self.moment)
    }

    /// Translation along the axis for the full displacement.
    pub fn axial_translation(&self) -> f64 {
        match self.kind {
            ScrewKind::General => self.pitch.unwrap_or(0.0) * self.magnitude,
            ScrewKind::PureTranslation => self.magnitude,
        }
    }

    /// Rotation angle of the full displacement (zero for pure translations).
    pub fn rotation_angle(&self) -> f64 {
        match self.kind {
            ScrewKind::General => self.magnitude,
            ScrewKind::PureTranslation => 0.0,
        }
    }

    /// The displacement reached after `fraction` of the magnitude, relative to
    /// the frame the screw is expressed in.
    pub fn displacement(&self, fraction: f64) -> Pose {
        if self.degenerate {
            return Pose::identity();
        }
        match self.kind {
            ScrewKind::PureTranslation => Pose {
                rotation: UnitQuaternion::identity(),
                translation: self.axis * (fraction * self.magnitude),
            },
            ScrewKind::General => {
                let angle = fraction * self.magnitude;
                let rot = UnitQuaternion::from_axis_angle(&Unit::new_unchecked(self.axis), angle);
                let r = self.axis_point();
                let h = self.pitch.unwrap_or(0.0);
                Pose::new(rot, r - rot * r + self.axis * (h * angle))
            }
        }
    }

    /// Exponential coordinates `(ωθ, vθ)` of the displacement, angular part first.
    pub fn twist(&self) -> Vector6<f64> {
        if self.degenerate {
            return Vector6::zeros();
        }
        match self.kind {
            ScrewKind::PureTranslation => {
                let v = self.axis * self.magnitude;
                Vector6::new(0.0, 0.0, 0.0, v.x, v.y, v.z)
            }
            ScrewKind::General => {
                let h = self.pitch.unwrap_or(0.0);
                let w = self.axis * self.magnitude;
                let v = (self.moment + self.axis * h) * self.magnitude;
                Vector6::new(w.x, w.y, w.z, v.x, v.y, v.z)
            }
        }
    }

    /// The same screw negated: `(ω, m, h, θ) → (−ω, −m, −h, θ)` for general screws.
    pub fn flipped(&self) -> Self {
        Self {
            axis: -self.axis,
            moment: -self.moment,
            pitch: self.pitch.map(|h| -h),
            ..*self
        }
    }
}

/// The constant screw carrying `g1` to `g2`, expressed in the frame of `g1`.
pub fn screw_from_poses(g1: &Pose, g2: &Pose) -> ScrewDisplacement {
    screw_from_poses_with(g1, g2, &ScrewTolerances::default())
}

pub fn screw_from_poses_with(g1: &Pose, g2: &Pose, tol: &ScrewTolerances) -> ScrewDisplacement {
    ScrewDisplacement::from_relative(&g1.inverse().compose(g2), tol)
}

/// Pose reached after traversing `fraction` of `s` starting from `start`.
pub fn apply_screw(s: &ScrewDisplacement, fraction: f64, start: &Pose) -> Pose {
    start.compose(&s.displacement(fraction))
}

/// Re-expresses `s` in the frame displaced by `g`: `ω' = Rω`, `r' = Rr + p`.
pub fn transform_screw(s: &ScrewDisplacement, g: &Pose) -> ScrewDisplacement {
    let axis = g.transform_vector(&s.axis);
    match s.kind {
        ScrewKind::PureTranslation => ScrewDisplacement { axis, ..*s },
        ScrewKind::General => {
            let r = g.transform_point(&s.axis_point());
            let r = r - axis * axis.dot(&r);
            ScrewDisplacement {
                axis,
                moment: r.cross(&axis),
                ..*s
            }
        }
    }
}

/// Screw linear interpolation between `g1` and `g2` at parameter `tau`.
///
/// Uses the dual-quaternion power of the relative displacement, taking the
/// shortest of the two antipodal representatives.
pub fn sclerp(g1: &Pose, g2: &Pose, tau: f64) -> Pose {
    let q1 = UnitDualQuaternion::from_pose(g1);
    let q2 = UnitDualQuaternion::from_pose(g2);
    UnitDualQuaternion::sclerp(&q1, &q2, tau).to_pose()
}

/// Whether two screws share `(ω, m, h)` up to the `(ω, θ) ↔ (−ω, −θ)` symmetry.
///
/// Only meaningful at half turns, where the flipped parameters describe the same
/// displacement; elsewhere the direct comparison decides.
pub fn same_screw_axis(a: &ScrewDisplacement, b: &ScrewDisplacement, tol: f64) -> bool {
    let direct = |b: &ScrewDisplacement| {
        a.kind == b.kind
            && (a.axis - b.axis).amax() <= tol
            && (a.moment - b.moment).amax() <= tol
            && match (a.pitch, b.pitch) {
                (Some(x), Some(y)) => (x - y).abs() <= tol,
                (None, None) => true,
                _ => false,
            }
    };
    direct(b) || ((PI - b.magnitude).abs() < 1e-6 && direct(&b.flipped()))
}
