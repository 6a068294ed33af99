//! Unit dual quaternions, the carrier for screw linear interpolation.

use std::ops::{Mul, Neg};

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use thiserror::Error;

use crate::screw::Pose;

#[derive(Debug, Error, PartialEq)]
pub enum DualQuatError {
    #[error("real part has norm {0}, expected 1")]
    NonUnitReal(f64),
    #[error("real and dual parts are not orthogonal (inner product {0})")]
    NotOrthogonal(f64),
}

/// `real + ε dual` with `|real| = 1` and `real · dual = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitDualQuaternion {
    real: Quaternion<f64>,
    dual: Quaternion<f64>,
}

const UNIT_TOL: f64 = 1e-9;

impl UnitDualQuaternion {
    pub fn identity() -> Self {
        Self {
            real: Quaternion::identity(),
            dual: Quaternion::new(0.0, 0.0, 0.0, 0.0),
        }
    }

    /// Validating constructor; rejects inputs off the unit manifold.
    pub fn new(real: Quaternion<f64>, dual: Quaternion<f64>) -> Result<Self, DualQuatError> {
        let n = real.norm();
        if (n - 1.0).abs() > UNIT_TOL {
            return Err(DualQuatError::NonUnitReal(n));
        }
        let ip = real.coords.dot(&dual.coords);
        if ip.abs() > UNIT_TOL {
            return Err(DualQuatError::NotOrthogonal(ip));
        }
        Ok(Self { real, dual })
    }

    pub fn real(&self) -> &Quaternion<f64> {
        &self.real
    }

    pub fn dual(&self) -> &Quaternion<f64> {
        &self.dual
    }

    pub fn from_pose(p: &Pose) -> Self {
        let real = *p.rotation.quaternion();
        let t = Quaternion::from_imag(p.translation);
        Self {
            real,
            dual: (t * real) * 0.5,
        }
    }

    pub fn to_pose(&self) -> Pose {
        let t = (self.dual * self.real.conjugate()) * 2.0;
        Pose::new(UnitQuaternion::from_quaternion(self.real), t.imag())
    }

    pub fn conjugate(&self) -> Self {
        Self {
            real: self.real.conjugate(),
            dual: self.dual.conjugate(),
        }
    }

    /// Projects back onto the unit manifold after accumulated rounding.
    pub fn normalized(&self) -> Self {
        let n = self.real.norm();
        let real = self.real / n;
        let dual = self.dual / n;
        let dual = dual - real * real.coords.dot(&dual.coords);
        Self { real, dual }
    }

    pub fn real_norm(&self) -> f64 {
        self.real.norm()
    }

    pub fn inner_product(&self) -> f64 {
        self.real.coords.dot(&self.dual.coords)
    }

    /// `self^tau` along the screw encoded by `self`.
    ///
    /// Writing `self = cos(θ̂/2) + sin(θ̂/2) ŝ` with dual angle `θ̂ = θ + εd` and
    /// dual axis `ŝ = ω + εm`, the power scales the dual angle.
    pub fn powf(&self, tau: f64) -> Self {
        let w = self.real.w;
        let v = self.real.imag();
        let s = v.norm();
        let half = s.atan2(w);
        if 2.0 * half.abs() < 1e-8 || s < 1e-15 {
            // No rotation: a pure translation. (-1, d) is the same motion as (1, -d).
            let sign = if w < 0.0 { -1.0 } else { 1.0 };
            return Self {
                real: Quaternion::identity(),
                dual: self.dual * (tau * sign),
            };
        }
        let omega = v / s;
        let (sin_h, cos_h) = (s, w);
        let dw = self.dual.w;
        let dv = self.dual.imag();
        let dist = -2.0 * dw / sin_h;
        let moment = (dv - omega * (0.5 * dist * cos_h)) / sin_h;

        let th = tau * half;
        let (st, ct) = th.sin_cos();
        let td = tau * dist;
        let real = Quaternion::from_parts(ct, omega * st);
        let dual_v: Vector3<f64> = omega * (0.5 * td * ct) + moment * st;
        let dual = Quaternion::from_parts(-0.5 * td * st, dual_v);
        Self { real, dual }
    }

    /// Screw linear interpolation `q1 (q1* q2)^τ` along the shorter path.
    pub fn sclerp(q1: &Self, q2: &Self, tau: f64) -> Self {
        let mut rel = q1.conjugate() * *q2;
        if rel.real.w < 0.0 {
            rel = -rel;
        }
        (*q1 * rel.powf(tau)).normalized()
    }
}

impl Mul for UnitDualQuaternion {
    type Output = Self;

    fn mul(self, rhs: Self) -> Self {
        Self {
            real: self.real * rhs.real,
            dual: self.real * rhs.dual + self.dual * rhs.real,
        }
    }
}

impl Neg for UnitDualQuaternion {
    type Output = Self;

    fn neg(self) -> Self {
        Self {
            real: -self.real,
            dual: -self.dual,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::screw::screw_from_poses;
    use crate::random::random_pose;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_pose_maps_to_identity() {
        let q = UnitDualQuaternion::from_pose(&Pose::identity());
        assert_eq!(*q.real(), Quaternion::new(1.0, 0.0, 0.0, 0.0));
        assert_eq!(*q.dual(), Quaternion::new(0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn roundtrip_and_double_cover() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let p = random_pose(&mut rng, 1.0);
            let q = UnitDualQuaternion::from_pose(&p);
            let (dp, dr) = q.to_pose().distance_to(&p);
            assert!(dp < 1e-12 && dr < 1e-12);
            let (dp, dr) = (-q).to_pose().distance_to(&p);
            assert!(dp < 1e-12 && dr < 1e-12);
        }
    }

    #[test]
    fn rejects_non_unit_input() {
        let bad = UnitDualQuaternion::new(Quaternion::new(2.0, 0.0, 0.0, 0.0), Quaternion::identity() * 0.0);
        assert!(matches!(bad, Err(DualQuatError::NonUnitReal(_))));
        let bad = UnitDualQuaternion::new(Quaternion::identity(), Quaternion::new(1.0, 0.0, 0.0, 0.0));
        assert!(matches!(bad, Err(DualQuatError::NotOrthogonal(_))));
    }

    #[test]
    fn products_stay_on_the_manifold() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut acc = UnitDualQuaternion::identity();
        for _ in 0..1000 {
            acc = acc * UnitDualQuaternion::from_pose(&random_pose(&mut rng, 1.0));
            assert!((acc.real_norm() - 1.0).abs() < 1e-9);
            assert!(acc.inner_product().abs() < 1e-9);
        }
    }

    #[test]
    fn antipodal_target_gives_same_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let q1 = UnitDualQuaternion::from_pose(&random_pose(&mut rng, 1.0));
            let q2 = UnitDualQuaternion::from_pose(&random_pose(&mut rng, 1.0));
            for k in 0..=10 {
                let tau = k as f64 / 10.0;
                let a = UnitDualQuaternion::sclerp(&q1, &q2, tau).to_pose();
                let b = UnitDualQuaternion::sclerp(&q1, &-q2, tau).to_pose();
                let (dp, dr) = a.distance_to(&b);
                assert!(dp < 1e-12 && dr < 1e-12);
            }
        }
    }

    #[test]
    fn power_of_pure_translation_scales_linearly() {
        let q = UnitDualQuaternion::from_pose(&Pose::from_translation(0.3, -0.2, 0.1));
        let half = q.powf(0.5).to_pose();
        assert!((half.translation - Vector3::new(0.15, -0.1, 0.05)).norm() < 1e-15);
    }

    #[test]
    fn power_one_recovers_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..100 {
            let g = random_pose(&mut rng, 1.0);
            let mut q = UnitDualQuaternion::from_pose(&g);
            if q.real().w < 0.0 {
                q = -q;
            }
            let (dp, dr) = q.powf(1.0).to_pose().distance_to(&g);
            assert!(dp < 1e-12 && dr < 1e-12);
            // magnitude agrees with the Chasles decomposition
            let s = screw_from_poses(&Pose::identity(), &g);
            let half = q.powf(0.5).to_pose();
            let sh = screw_from_poses(&Pose::identity(), &half);
            assert!((sh.magnitude - 0.5 * s.magnitude).abs() < 1e-9);
        }
    }
}
