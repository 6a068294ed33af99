use nalgebra::{DVector, Matrix6xX, Unit, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use super::KinematicsError;
use crate::screw::Pose;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Revolute,
    Prismatic,
}

/// A joint screw at the zero configuration, in the base frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    pub kind: JointKind,
    pub axis: [f64; 3],
    /// Any point on the axis; ignored for prismatic joints.
    pub point: [f64; 3],
    /// `[min, max]` in rad or m.
    pub limits: [f64; 2],
}

impl Joint {
    /// Spatial twist `(ω, v)` of the joint at the zero configuration.
    pub fn twist(&self) -> Vector6<f64> {
        let w = Vector3::from(self.axis);
        match self.kind {
            JointKind::Revolute => {
                let v = -w.cross(&Vector3::from(self.point));
                Vector6::new(w.x, w.y, w.z, v.x, v.y, v.z)
            }
            JointKind::Prismatic => Vector6::new(0.0, 0.0, 0.0, w.x, w.y, w.z),
        }
    }

    /// `exp(ξ q)` as a rigid motion.
    pub fn exp(&self, q: f64) -> Pose {
        let w = Vector3::from(self.axis);
        match self.kind {
            JointKind::Revolute => {
                let r = UnitQuaternion::from_axis_angle(&Unit::new_unchecked(w), q);
                let p = Vector3::from(self.point);
                Pose::new(r, p - r * p)
            }
            JointKind::Prismatic => Pose::new(UnitQuaternion::identity(), w * q),
        }
    }
}

/// Serial chain in product-of-exponentials form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManipulatorModel {
    pub name: String,
    /// End-effector pose at the zero configuration.
    pub home: Pose,
    /// Suggested start configuration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ready: Option<Vec<f64>>,
    pub joints: Vec<Joint>,
}

const PLANAR_2R: &str = include_str!("../../models/planar_2r.toml");
const ARM7: &str = include_str!("../../models/arm7.toml");

impl ManipulatorModel {
    pub fn from_toml(s: &str) -> Result<Self, KinematicsError> {
        let m: Self = toml::from_str(s).map_err(|e| KinematicsError::Model(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("model serializes")
    }

    /// Two revolute joints about z with 1 m links; tip at (2, 0, 0) when straight.
    pub fn planar_2r() -> Self {
        Self::from_toml(PLANAR_2R).expect("bundled model is valid")
    }

    /// Seven revolute joints with the reach of a tabletop cobot.
    pub fn arm7() -> Self {
        Self::from_toml(ARM7).expect("bundled model is valid")
    }

    pub fn bundled(name: &str) -> Option<Self> {
        match name {
            "planar_2r" => Some(Self::planar_2r()),
            "arm7" => Some(Self::arm7()),
            _ => None,
        }
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    // negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), KinematicsError> {
        let bad = |m: String| Err(KinematicsError::Model(m));
        if self.joints.is_empty() {
            return bad("model has no joints".into());
        }
        if !self.home.is_finite() {
            return bad("home pose is not finite".into());
        }
        for j in &self.joints {
            let n = Vector3::from(j.axis).norm();
            if (n - 1.0).abs() > 1e-9 {
                return bad(format!("joint {:?}: axis norm {n}, expected 1", j.name));
            }
            if !(j.limits[0] < j.limits[1]) {
                return bad(format!("joint {:?}: limits {:?} are not increasing", j.name, j.limits));
            }
            if j.point.iter().any(|x| !x.is_finite()) {
                return bad(format!("joint {:?}: axis point is not finite", j.name));
            }
        }
        if let Some(r) = &self.ready {
            self.check_len(r.len())?;
            if !self.within_limits(r) {
                return bad("ready configuration violates joint limits".into());
            }
        }
        Ok(())
    }

    pub(crate) fn check_len(&self, n: usize) -> Result<(), KinematicsError> {
        if n == self.dof() {
            Ok(())
        } else {
            Err(KinematicsError::LengthMismatch {
                expected: self.dof(),
                actual: n,
            })
        }
    }

    pub fn within_limits(&self, q: &[f64]) -> bool {
        self.joints.iter().zip(q).all(|(j, &x)| x >= j.limits[0] && x <= j.limits[1])
    }

    pub fn clamp(&self, q: &mut DVector<f64>) -> bool {
        let mut hit = false;
        for (j, x) in self.joints.iter().zip(q.iter_mut()) {
            let c = x.clamp(j.limits[0], j.limits[1]);
            hit |= c != *x;
            *x = c;
        }
        hit
    }

    /// Suggested start configuration, or zeros clamped into the limits.
    pub fn start_configuration(&self) -> Vec<f64> {
        self.ready.clone().unwrap_or_else(|| {
            let mut q = DVector::zeros(self.dof());
            self.clamp(&mut q);
            q.iter().copied().collect()
        })
    }
}

/// `e^{ξ1 q1} ⋯ e^{ξn qn} M`.
pub fn forward_kinematics(model: &ManipulatorModel, q: &[f64]) -> Result<Pose, KinematicsError> {
    model.check_len(q.len())?;
    let g = model
        .joints
        .iter()
        .zip(q)
        .fold(Pose::identity(), |acc, (j, &x)| acc.compose(&j.exp(x)));
    Ok(g.compose(&model.home))
}

/// Adjoint of `g` applied to a twist `(ω, v)`.
pub fn adjoint(g: &Pose, xi: &Vector6<f64>) -> Vector6<f64> {
    let w = g.rotation * xi.fixed_rows::<3>(0).into_owned();
    let v = g.rotation * xi.fixed_rows::<3>(3).into_owned() + g.translation.cross(&w);
    Vector6::new(w.x, w.y, w.z, v.x, v.y, v.z)
}

/// Spatial Jacobian: column `j` is joint `j`'s current twist.
pub fn jacobian(model: &ManipulatorModel, q: &[f64]) -> Result<Matrix6xX<f64>, KinematicsError> {
    model.check_len(q.len())?;
    let mut jac = Matrix6xX::zeros(model.dof());
    let mut acc = Pose::identity();
    for (i, (j, &x)) in model.joints.iter().zip(q).enumerate() {
        jac.set_column(i, &adjoint(&acc, &j.twist()));
        acc = acc.compose(&j.exp(x));
    }
    Ok(jac)
}
