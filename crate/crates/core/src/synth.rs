//! Synthetic demonstrations built from known constant screws.
//!
//! Used as ground truth for segmentation: the generator knows where each
//! screw starts and ends, so recovered breakpoints can be compared against
//! construction inputs.

use nalgebra::Vector3;
use rand::Rng;

use crate::random::{perturb_pose, random_unit_vector};
use crate::screw::{apply_screw, Pose, ScrewDisplacement};
use crate::segment::{Demonstration, Gripper};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScrewShape {
    /// Rotation with translation along the axis.
    General,
    PureTranslation,
    /// Zero-pitch rotation about an axis offset from the end effector.
    PureRotation,
}

#[derive(Clone, Copy, Debug)]
pub struct ChainSpec {
    pub samples_per_segment: usize,
    /// Per-axis standard deviation of recorded position noise (m).
    pub noise_position: f64,
    /// Standard deviation of recorded rotation noise (rad).
    pub noise_rotation: f64,
    /// Minimum per-sample change of linear velocity at a corner (m).
    pub min_corner_linear: f64,
    /// Minimum per-sample change of angular velocity at a corner (rad).
    pub min_corner_angular: f64,
}

impl Default for ChainSpec {
    fn default() -> Self {
        Self {
            samples_per_segment: 30,
            noise_position: 0.0005,
            noise_rotation: 0.2f64.to_radians(),
            min_corner_linear: 0.003,
            min_corner_angular: 2f64.to_radians(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticDemo {
    pub demo: Demonstration,
    /// Ground-truth breakpoints, including 0 and `n - 1`.
    pub breakpoints: Vec<usize>,
    /// Screws in the frame of each segment's (noise-free) start pose.
    pub screws: Vec<ScrewDisplacement>,
}

pub fn random_screw<R: Rng + ?Sized>(rng: &mut R, shape: ScrewShape) -> ScrewDisplacement {
    match shape {
        ScrewShape::PureTranslation => {
            ScrewDisplacement::translation_along(&random_unit_vector(rng), rng.random_range(0.10..0.18))
        }
        ScrewShape::General | ScrewShape::PureRotation => {
            let axis = random_unit_vector(rng);
            let offset = {
                let v = random_unit_vector(rng);
                let perp = (v - axis * axis.dot(&v)).normalize();
                perp * rng.random_range(0.06..0.14)
            };
            let angle = rng.random_range(35f64.to_radians()..70f64.to_radians());
            let pitch = match shape {
                ScrewShape::General => rng.random_range(0.03..0.08) / angle,
                _ => 0.0,
            };
            ScrewDisplacement::rotation_about(&axis, &offset, angle, pitch)
        }
    }
}

fn random_shape<R: Rng + ?Sized>(rng: &mut R) -> ScrewShape {
    match rng.random_range(0..3) {
        0 => ScrewShape::General,
        1 => ScrewShape::PureTranslation,
        _ => ScrewShape::PureRotation,
    }
}

/// Whether the corner between two consecutive screws is sharp enough to be
/// resolved at the given sampling density.
fn distinct(a: &ScrewDisplacement, b: &ScrewDisplacement, spec: &ChainSpec) -> bool {
    let n = spec.samples_per_segment as f64;
    // Body twists of a constant screw are constant along it, so both are
    // expressed in the corner frame.
    let ta = a.twist() / n;
    let tb = b.twist() / n;
    let dw = (ta.fixed_rows::<3>(0) - tb.fixed_rows::<3>(0)).norm();
    let dv = (ta.fixed_rows::<3>(3) - tb.fixed_rows::<3>(3)).norm();
    dv >= spec.min_corner_linear || dw >= spec.min_corner_angular
}

/// A chain of `segments` random screws starting at `start`, sampled and
/// perturbed per `spec`.
pub fn random_screw_chain<R: Rng + ?Sized>(rng: &mut R, start: &Pose, segments: usize, spec: &ChainSpec) -> SyntheticDemo {
    let mut screws: Vec<ScrewDisplacement> = Vec::with_capacity(segments);
    while screws.len() < segments {
        let shape = random_shape(rng);
        let s = random_screw(rng, shape);
        if screws.last().is_none_or(|prev| distinct(prev, &s, spec)) {
            screws.push(s);
        }
    }
    let shapes: Vec<ScrewDisplacement> = screws.clone();
    chain_from_screws(rng, start, &shapes, spec)
}

/// Samples a demonstration along the given screws (each in its own start frame).
pub fn chain_from_screws<R: Rng + ?Sized>(rng: &mut R, start: &Pose, screws: &[ScrewDisplacement], spec: &ChainSpec) -> SyntheticDemo {
    let per = spec.samples_per_segment;
    let mut clean = vec![*start];
    let mut breakpoints = vec![0];
    let mut current = *start;
    for s in screws {
        for k in 1..=per {
            clean.push(apply_screw(s, k as f64 / per as f64, &current));
        }
        current = *clean.last().unwrap();
        breakpoints.push(clean.len() - 1);
    }
    let poses: Vec<Pose> = clean
        .iter()
        .map(|p| perturb_pose(rng, p, spec.noise_position, spec.noise_rotation))
        .collect();
    let n = poses.len();
    let demo = Demonstration {
        id: "synthetic".into(),
        poses,
        timestamps: (0..n).map(|i| i as f64 * 0.05).collect(),
        gripper: vec![Gripper::Open; n],
    };
    SyntheticDemo {
        demo,
        breakpoints,
        screws: screws.to_vec(),
    }
}

/// Poses sampled at `count` evenly spaced parameters along one screw.
pub fn sample_screw(start: &Pose, screw: &ScrewDisplacement, count: usize) -> Vec<Pose> {
    (0..count)
        .map(|k| apply_screw(screw, k as f64 / (count - 1) as f64, start))
        .collect()
}

/// Unit vector helper for generator callers.
pub fn unit(x: f64, y: f64, z: f64) -> Vector3<f64> {
    Vector3::new(x, y, z).normalize()
}
