//! Demonstrations and their decomposition into constant screw segments.
//!
//! [`segment_demo`] runs a greedy longest-feasible sweep: from the current
//! breakpoint it extends the candidate end index while every recorded pose in
//! between stays within the fit tolerance of the constant screw joining the two
//! ends. Gripper open/close transitions always become breakpoints.
//!
//! Fit errors are evaluated on poses expressed relative to the segment start,
//! which makes the whole procedure invariant to a change of base frame.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::screw::{apply_screw, sclerp, screw_from_poses, Pose, ScrewDisplacement};

/// Continuity gate: consecutive samples must differ by less than these.
pub const MAX_STEP_POSITION: f64 = 0.1;
pub const MAX_STEP_ROTATION: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gripper {
    Open,
    Closed,
}

#[derive(Debug, Error, PartialEq)]
pub enum SegmentError {
    #[error("demonstration needs at least 2 poses, got {0}")]
    TooShort(usize),
    #[error("pose or timestamp {0} is not finite")]
    NonFinite(usize),
    #[error("timestamps not strictly increasing at sample {0}")]
    NonIncreasingTime(usize),
    #[error("step into sample {index} too large ({position:.4} m, {rotation:.4} rad)")]
    Discontinuous { index: usize, position: f64, rotation: f64 },
    #[error("poses, timestamps and gripper states have different lengths")]
    LengthMismatch,
    #[error("tolerances must be positive and finite")]
    InvalidTolerance,
    #[error("segment sequence was built from demonstration {expected:?}, got {actual:?}")]
    DemoMismatch { expected: String, actual: String },
}

/// A recorded end-effector trajectory `D = {g_1, …, g_n}` with gripper states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub id: String,
    pub poses: Vec<Pose>,
    pub timestamps: Vec<f64>,
    pub gripper: Vec<Gripper>,
}

impl Demonstration {
    pub fn new(
        id: impl Into<String>,
        poses: Vec<Pose>,
        timestamps: Vec<f64>,
        gripper: Vec<Gripper>,
    ) -> Result<Self, SegmentError> {
        let d = Self {
            id: id.into(),
            poses,
            timestamps,
            gripper,
        };
        d.validate()?;
        Ok(d)
    }

    /// Demonstration with unit time steps and the gripper open throughout.
    pub fn from_poses(id: impl Into<String>, poses: Vec<Pose>) -> Result<Self, SegmentError> {
        let n = poses.len();
        Self::new(id, poses, (0..n).map(|i| i as f64).collect(), vec![Gripper::Open; n])
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Structural checks plus the sampling-continuity gate.
    pub fn validate(&self) -> Result<(), SegmentError> {
        self.validate_structure()?;
        for i in 1..self.len() {
            let (dp, dr) = self.poses[i - 1].distance_to(&self.poses[i]);
            if dp >= MAX_STEP_POSITION || dr >= MAX_STEP_ROTATION {
                return Err(SegmentError::Discontinuous {
                    index: i,
                    position: dp,
                    rotation: dr,
                });
            }
        }
        Ok(())
    }

    /// Length, finiteness and timestamp ordering only.
    pub fn validate_structure(&self) -> Result<(), SegmentError> {
        let n = self.poses.len();
        if self.timestamps.len() != n || self.gripper.len() != n {
            return Err(SegmentError::LengthMismatch);
        }
        if n < 2 {
            return Err(SegmentError::TooShort(n));
        }
        for (i, (p, t)) in self.poses.iter().zip(&self.timestamps).enumerate() {
            if !p.is_finite() || !t.is_finite() {
                return Err(SegmentError::NonFinite(i));
            }
        }
        for i in 1..n {
            if self.timestamps[i] <= self.timestamps[i - 1] {
                return Err(SegmentError::NonIncreasingTime(i));
            }
        }
        Ok(())
    }

    /// Indices where the gripper state differs from the previous sample.
    pub fn gripper_transitions(&self) -> Vec<usize> {
        (1..self.len())
            .filter(|&i| self.gripper[i] != self.gripper[i - 1])
            .collect()
    }

    /// The same demonstration seen from another base frame: every pose is
    /// left-multiplied by `t`.
    pub fn left_multiplied(&self, t: &Pose) -> Self {
        Self {
            poses: self.poses.iter().map(|p| t.compose(p)).collect(),
            ..self.clone()
        }
    }
}

/// Position and rotation bounds for the segment fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitTolerance {
    /// meters
    pub position: f64,
    /// radians
    pub rotation: f64,
}

impl Default for FitTolerance {
    fn default() -> Self {
        Self {
            position: 0.005,
            rotation: 3f64.to_radians(),
        }
    }
}

impl FitTolerance {
    pub fn new(position: f64, rotation: f64) -> Result<Self, SegmentError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(position) || !ok(rotation) {
            return Err(SegmentError::InvalidTolerance);
        }
        Ok(Self { position, rotation })
    }
}

/// One constant screw between consecutive breakpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScrewSegment {
    pub start_index: usize,
    pub end_index: usize,
    pub start: Pose,
    /// Screw expressed in the frame of `start`.
    pub screw: ScrewDisplacement,
}

impl ScrewSegment {
    /// The screw expressed in the base frame.
    pub fn spatial_screw(&self) -> ScrewDisplacement {
        crate::screw::transform_screw(&self.screw, &self.start)
    }

    pub fn end(&self) -> Pose {
        apply_screw(&self.screw, 1.0, &self.start)
    }
}

/// The breakpoint subsequence `G` of a demonstration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScrewSegmentSequence {
    pub source_demo_id: String,
    pub tolerance: FitTolerance,
    /// Zero-based indices into the demonstration; first is 0, last is `n - 1`.
    pub breakpoints: Vec<usize>,
    pub poses: Vec<Pose>,
    pub gripper: Vec<Gripper>,
    pub segments: Vec<ScrewSegment>,
}

impl ScrewSegmentSequence {
    fn from_breakpoints(d: &Demonstration, breakpoints: Vec<usize>, tolerance: FitTolerance) -> Self {
        let segments = breakpoints
            .windows(2)
            .map(|w| ScrewSegment {
                start_index: w[0],
                end_index: w[1],
                start: d.poses[w[0]],
                screw: screw_from_poses(&d.poses[w[0]], &d.poses[w[1]]),
            })
            .collect();
        Self {
            source_demo_id: d.id.clone(),
            tolerance,
            poses: breakpoints.iter().map(|&i| d.poses[i]).collect(),
            gripper: breakpoints.iter().map(|&i| d.gripper[i]).collect(),
            breakpoints,
            segments,
        }
    }

    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    /// Interior breakpoints (excluding the first and last sample).
    pub fn interior(&self) -> &[usize] {
        let n = self.breakpoints.len();
        &self.breakpoints[1..n - 1]
    }
}

/// Error of `rel` (a pose relative to the segment start) against the screw
/// path, at the path parameter that best fits it.
///
/// The parameter minimizes `max(Δp / ε_p, ΔR / ε_R)`: a coarse grid brackets
/// the minimum, then golden-section search refines it. Returns
/// `(position error, rotation error, τ*)`.
pub fn nearest_on_screw(screw: &ScrewDisplacement, rel: &Pose, tol: &FitTolerance) -> (f64, f64, f64) {
    let start = Pose::identity();
    let eval = |tau: f64| {
        let g = apply_screw(screw, tau, &start);
        let (dp, dr) = g.distance_to(rel);
        (dp, dr, (dp / tol.position).max(dr / tol.rotation))
    };

    const GRID: usize = 16;
    let mut best = (0usize, f64::INFINITY);
    for k in 0..=GRID {
        let f = eval(k as f64 / GRID as f64).2;
        if f < best.1 {
            best = (k, f);
        }
    }
    let mut lo = best.0.saturating_sub(1) as f64 / GRID as f64;
    let mut hi = (best.0 + 1).min(GRID) as f64 / GRID as f64;

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = eval(x1).2;
    let mut f2 = eval(x2).2;
    while hi - lo > 1e-12 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = eval(x1).2;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = eval(x2).2;
        }
    }
    let mut tau = 0.5 * (lo + hi);
    let (mut dp, mut dr, f) = eval(tau);
    // the grid point itself may beat the refined bracket on non-smooth maxima
    let grid_tau = best.0 as f64 / GRID as f64;
    if best.1 < f {
        tau = grid_tau;
        let e = eval(tau);
        dp = e.0;
        dr = e.1;
    }
    (dp, dr, tau)
}

fn segment_fits(d: &Demonstration, i: usize, j: usize, tol: &FitTolerance) -> bool {
    let screw = screw_from_poses(&d.poses[i], &d.poses[j]);
    let inv = d.poses[i].inverse();
    ((i + 1)..j).all(|t| {
        let rel = inv.compose(&d.poses[t]);
        let (dp, dr, _) = nearest_on_screw(&screw, &rel, tol);
        dp <= tol.position && dr <= tol.rotation
    })
}

/// Greedy maximal constant-screw segmentation.
pub fn segment_demo(d: &Demonstration, tol: FitTolerance) -> Result<ScrewSegmentSequence, SegmentError> {
    d.validate()?;
    FitTolerance::new(tol.position, tol.rotation)?;
    let n = d.len();

    let mut anchors = vec![0];
    anchors.extend(d.gripper_transitions());
    if *anchors.last().unwrap() != n - 1 {
        anchors.push(n - 1);
    }

    let mut breakpoints = vec![0];
    for chunk in anchors.windows(2) {
        let (mut i, end) = (chunk[0], chunk[1]);
        while i < end {
            let mut j = i + 1;
            while j < end && segment_fits(d, i, j + 1, &tol) {
                j += 1;
            }
            breakpoints.push(j);
            i = j;
        }
    }
    Ok(ScrewSegmentSequence::from_breakpoints(d, breakpoints, tol))
}

/// Inserts ScLERP samples so that no step exceeds the given bounds.
///
/// Timestamps of inserted samples are interpolated linearly; their gripper
/// state copies the earlier neighbour.
pub fn resample_demo(d: &Demonstration, max_step_p: f64, max_step_r: f64) -> Result<Demonstration, SegmentError> {
    d.validate_structure()?;
    FitTolerance::new(max_step_p, max_step_r)?;
    let mut poses = vec![d.poses[0]];
    let mut timestamps = vec![d.timestamps[0]];
    let mut gripper = vec![d.gripper[0]];
    for i in 1..d.len() {
        let (a, b) = (&d.poses[i - 1], &d.poses[i]);
        let (dp, dr) = a.distance_to(b);
        let steps = ((dp / max_step_p - 1e-9).ceil())
            .max((dr / max_step_r - 1e-9).ceil())
            .max(1.0) as usize;
        let (t0, t1) = (d.timestamps[i - 1], d.timestamps[i]);
        for k in 1..steps {
            let tau = k as f64 / steps as f64;
            poses.push(sclerp(a, b, tau));
            timestamps.push(t0 + tau * (t1 - t0));
            gripper.push(d.gripper[i - 1]);
        }
        poses.push(*b);
        timestamps.push(t1);
        gripper.push(d.gripper[i]);
    }
    let out = Demonstration {
        id: d.id.clone(),
        poses,
        timestamps,
        gripper,
    };
    out.validate_structure()?;
    Ok(out)
}

/// Maximum position and rotation error of the demonstration samples against
/// their segment's screw path.
pub fn segment_fit_error(seq: &ScrewSegmentSequence, d: &Demonstration) -> Result<(f64, f64), SegmentError> {
    if seq.source_demo_id != d.id || seq.breakpoints.last().copied() != Some(d.len() - 1) {
        return Err(SegmentError::DemoMismatch {
            expected: seq.source_demo_id.clone(),
            actual: d.id.clone(),
        });
    }
    let mut worst = (0.0f64, 0.0f64);
    for seg in &seq.segments {
        let inv = seg.start.inverse();
        for t in (seg.start_index + 1)..seg.end_index {
            let (dp, dr, _) = nearest_on_screw(&seg.screw, &inv.compose(&d.poses[t]), &seq.tolerance);
            worst.0 = worst.0.max(dp);
            worst.1 = worst.1.max(dr);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::random_pose;
    use nalgebra::Vector3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single_screw_demo(n: usize) -> Demonstration {
        let start = Pose::from_translation(0.4, 0.1, 0.3);
        let screw = ScrewDisplacement::rotation_about(&Vector3::new(0.2, 0.3, 1.0), &Vector3::new(0.05, 0.0, 0.0), 0.8, 0.05);
        let poses = (0..n)
            .map(|k| apply_screw(&screw, k as f64 / (n - 1) as f64, &start))
            .collect();
        Demonstration::from_poses("single", poses).unwrap()
    }

    #[test]
    fn single_screw_gives_one_segment() {
        let d = single_screw_demo(50);
        let seq = segment_demo(&d, FitTolerance::default()).unwrap();
        assert_eq!(seq.breakpoints, vec![0, 49]);
        let (ep, er) = segment_fit_error(&seq, &d).unwrap();
        assert!(ep < 1e-9 && er < 1e-9, "{ep} {er}");
    }

    #[test]
    fn two_pose_demo() {
        let d = Demonstration::from_poses("two", vec![Pose::identity(), Pose::from_translation(0.01, 0.0, 0.0)]).unwrap();
        let seq = segment_demo(&d, FitTolerance::default()).unwrap();
        assert_eq!(seq.breakpoints, vec![0, 1]);
        assert_eq!(seq.segment_count(), 1);
    }

    #[test]
    fn rejects_short_and_non_finite() {
        assert_eq!(
            Demonstration::from_poses("x", vec![Pose::identity()]).unwrap_err(),
            SegmentError::TooShort(1)
        );
        let bad = Pose::from_translation(f64::NAN, 0.0, 0.0);
        assert_eq!(
            Demonstration::from_poses("x", vec![Pose::identity(), bad]).unwrap_err(),
            SegmentError::NonFinite(1)
        );
    }

    #[test]
    fn continuity_gate() {
        let err = Demonstration::from_poses("x", vec![Pose::identity(), Pose::from_translation(0.2, 0.0, 0.0)]).unwrap_err();
        assert!(matches!(err, SegmentError::Discontinuous { index: 1, .. }));
    }

    #[test]
    fn gripper_transition_forces_breakpoint() {
        let poses: Vec<Pose> = (0..20).map(|k| Pose::from_translation(0.002 * k as f64, 0.0, 0.0)).collect();
        let mut gripper = vec![Gripper::Open; 20];
        for g in gripper.iter_mut().skip(7) {
            *g = Gripper::Closed;
        }
        let d = Demonstration::new("g", poses, (0..20).map(f64::from).collect(), gripper).unwrap();
        let seq = segment_demo(&d, FitTolerance::default()).unwrap();
        assert_eq!(seq.breakpoints, vec![0, 7, 19]);
        assert_eq!(seq.gripper, vec![Gripper::Open, Gripper::Closed, Gripper::Closed]);
    }

    #[test]
    fn right_angle_corner_is_found() {
        let mut poses = Vec::new();
        for k in 0..=20 {
            poses.push(Pose::from_translation(0.005 * k as f64, 0.0, 0.0));
        }
        for k in 1..=20 {
            poses.push(Pose::from_translation(0.1, 0.005 * k as f64, 0.0));
        }
        let d = Demonstration::from_poses("corner", poses).unwrap();
        let seq = segment_demo(&d, FitTolerance::default()).unwrap();
        assert_eq!(seq.segment_count(), 2);
        assert!((seq.breakpoints[1] as i64 - 20).abs() <= 3);
        let (ep, er) = segment_fit_error(&seq, &d).unwrap();
        assert!(ep <= 0.005 && er <= 3f64.to_radians());
    }

    #[test]
    fn resample_subdivides_uniformly() {
        // 0.1 m apart violates the continuity gate; resampling is what fixes that
        let d = Demonstration {
            id: "r".into(),
            poses: vec![Pose::identity(), Pose::from_translation(0.0, 0.0, 0.1)],
            timestamps: vec![0.0, 1.0],
            gripper: vec![Gripper::Open; 2],
        };
        assert!(d.validate().is_err());
        let r = resample_demo(&d, 0.01, 1.0).unwrap();
        assert_eq!(r.len(), 11);
        for (k, p) in r.poses.iter().enumerate() {
            assert!((p.translation.z - 0.01 * k as f64).abs() < 1e-12);
        }
        r.validate().unwrap();
        // idempotent
        assert_eq!(resample_demo(&r, 0.01, 1.0).unwrap(), r);
        // a dense demo is unchanged
        assert_eq!(resample_demo(&d, 0.5, 1.0).unwrap(), d);
    }

    #[test]
    fn resample_respects_both_bounds() {
        let a = Pose::identity();
        let b = Pose::new(nalgebra::UnitQuaternion::from_euler_angles(0.2, 0.1, 0.3), Vector3::new(0.05, 0.02, -0.03));
        let d = Demonstration::from_poses("m", vec![a, b]).unwrap();
        let r = resample_demo(&d, 0.004, 0.01).unwrap();
        for w in r.poses.windows(2) {
            let (dp, dr) = w[0].distance_to(&w[1]);
            assert!(dp <= 0.004 + 1e-12 && dr <= 0.01 + 1e-12);
        }
        assert_eq!(r.poses[0], a);
        assert_eq!(*r.poses.last().unwrap(), b);
    }

    #[test]
    fn frame_shift_keeps_breakpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = single_screw_demo(40);
        let mut poses = d.poses.clone();
        let tail = *poses.last().unwrap();
        for k in 1..=25 {
            poses.push(tail.compose(&Pose::from_translation(0.0, 0.004 * k as f64, 0.0)));
        }
        let d = Demonstration::from_poses("shift", poses).unwrap();
        let base = segment_demo(&d, FitTolerance::default()).unwrap();
        for _ in 0..10 {
            let t = random_pose(&mut rng, 2.0);
            let moved = segment_demo(&d.left_multiplied(&t), FitTolerance::default()).unwrap();
            assert_eq!(moved.breakpoints, base.breakpoints);
        }
    }

    #[test]
    fn mismatched_demo_is_rejected() {
        let d = single_screw_demo(10);
        let seq = segment_demo(&d, FitTolerance::default()).unwrap();
        let other = Demonstration { id: "other".into(), ..d };
        assert!(matches!(segment_fit_error(&seq, &other), Err(SegmentError::DemoMismatch { .. })));
    }
}
