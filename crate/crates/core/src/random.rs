//! Seeded sampling helpers for poses and rotations.

use nalgebra::{Quaternion, Unit, UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::screw::Pose;

/// Uniformly distributed rotation (normalized 4D Gaussian).
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> UnitQuaternion<f64> {
    loop {
        let q = Quaternion::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        if q.norm() > 1e-6 {
            return UnitQuaternion::from_quaternion(q);
        }
    }
}

pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        if v.norm() > 1e-6 {
            return v.normalize();
        }
    }
}

/// Uniform rotation with a translation drawn from `[-scale, scale]³`.
pub fn random_pose<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> Pose {
    let t = Vector3::new(
        rng.random_range(-scale..=scale),
        rng.random_range(-scale..=scale),
        rng.random_range(-scale..=scale),
    );
    Pose::new(random_rotation(rng), t)
}

/// Small Gaussian perturbation: isotropic translation noise `sigma_p` per axis
/// and a rotation about a random axis with angle drawn from `N(0, sigma_r)`.
pub fn perturb_pose<R: Rng + ?Sized>(rng: &mut R, pose: &Pose, sigma_p: f64, sigma_r: f64) -> Pose {
    if sigma_p == 0.0 && sigma_r == 0.0 {
        return *pose;
    }
    let n: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(rng));
    let dt = Vector3::from(n) * sigma_p;
    let axis = Unit::new_normalize(random_unit_vector(rng));
    let z: f64 = StandardNormal.sample(rng);
    let angle = sigma_r * z;
    Pose::new(
        UnitQuaternion::from_axis_angle(&axis, angle) * pose.rotation,
        pose.translation + dt,
    )
}
