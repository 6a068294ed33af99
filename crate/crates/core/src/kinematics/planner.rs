use nalgebra::{DMatrix, DVector, Matrix3};
use serde::{Deserialize, Serialize};

use super::model::{adjoint, forward_kinematics, jacobian, ManipulatorModel};
use super::KinematicsError;
use crate::screw::{sclerp, screw_from_poses, Pose};
use crate::segment::Gripper;
use crate::transfer::Waypoint;

/// Which part of the pose the planner tracks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskSpace {
    #[default]
    Full,
    /// Tool position only, for arms that cannot control orientation freely.
    Position,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerOptions {
    /// Largest translation between consecutive interpolated targets (m).
    pub max_step_position: f64,
    /// Largest rotation between consecutive interpolated targets (rad).
    pub max_step_rotation: f64,
    pub converge_position: f64,
    pub converge_rotation: f64,
    /// Tighter convergence applied when arriving at an input waypoint.
    pub waypoint_converge_position: f64,
    pub waypoint_converge_rotation: f64,
    pub path_tol_position: f64,
    pub path_tol_rotation: f64,
    pub start_tol_position: f64,
    pub start_tol_rotation: f64,
    pub damping: f64,
    pub max_damping: f64,
    /// Smallest singular value of the Jacobian below which damping escalates.
    pub singular_threshold: f64,
    /// Iteration cap per interpolated target.
    pub max_iterations: usize,
    /// Largest change of any joint between consecutive configurations.
    pub max_joint_step: f64,
    pub task_space: TaskSpace,
}

impl Default for PlannerOptions {
    fn default() -> Self {
        Self {
            max_step_position: 0.001,
            max_step_rotation: 0.5f64.to_radians(),
            converge_position: 0.0005,
            converge_rotation: 0.5f64.to_radians(),
            waypoint_converge_position: 1e-5,
            waypoint_converge_rotation: 1e-4,
            path_tol_position: 0.002,
            path_tol_rotation: 1f64.to_radians(),
            start_tol_position: 0.002,
            start_tol_rotation: 1f64.to_radians(),
            damping: 0.01,
            max_damping: 1.0,
            singular_threshold: 1e-4,
            max_iterations: 100,
            max_joint_step: 0.25,
            task_space: TaskSpace::Full,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GripperEvent {
    /// Index into [`JointPath::configurations`] after which the command is sent.
    pub index: usize,
    pub state: Gripper,
}

/// The joint-space plan `M = {Θ_1, …, Θ_m}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointPath {
    pub configurations: Vec<Vec<f64>>,
    /// Forward kinematics of each configuration.
    pub poses: Vec<Pose>,
    /// Interpolated target of each configuration.
    pub targets: Vec<Pose>,
    /// `[position, rotation]` distance between achieved pose and target.
    pub deviations: Vec<[f64; 2]>,
    /// Configuration index at which each input waypoint is reached.
    pub waypoint_indices: Vec<usize>,
    #[serde(default)]
    pub gripper_events: Vec<GripperEvent>,
}

impl JointPath {
    pub fn len(&self) -> usize {
        self.configurations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configurations.is_empty()
    }

    pub fn max_deviation(&self) -> [f64; 2] {
        self.deviations
            .iter()
            .fold([0.0, 0.0], |acc, d| [acc[0].max(d[0]), acc[1].max(d[1])])
    }

    pub fn final_configuration(&self) -> &[f64] {
        self.configurations.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

fn skew(v: &nalgebra::Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

struct Solver<'a> {
    model: &'a ManipulatorModel,
    opts: &'a PlannerOptions,
}

impl Solver<'_> {
    fn error(&self, g: &Pose, target: &Pose) -> (f64, f64) {
        let (dp, dr) = g.distance_to(target);
        match self.opts.task_space {
            TaskSpace::Full => (dp, dr),
            TaskSpace::Position => (dp, 0.0),
        }
    }

    fn converged(&self, e: (f64, f64), at_waypoint: bool) -> bool {
        if at_waypoint {
            e.0 < self.opts.waypoint_converge_position && e.1 < self.opts.waypoint_converge_rotation
        } else {
            e.0 < self.opts.converge_position && e.1 < self.opts.converge_rotation
        }
    }

    /// Task Jacobian and error vector at configuration `q`.
    fn linearize(&self, q: &[f64], g: &Pose, target: &Pose) -> (DMatrix<f64>, DVector<f64>) {
        let js = jacobian(self.model, q).expect("length checked");
        match self.opts.task_space {
            TaskSpace::Full => {
                // log of current⁻¹·target is a body twist; move it to the spatial frame
                let body = screw_from_poses(g, target).twist();
                let e = adjoint(g, &body);
                (DMatrix::from_iterator(6, js.ncols(), js.iter().copied()), DVector::from_column_slice(e.as_slice()))
            }
            TaskSpace::Position => {
                // tip velocity = v + ω × p
                let jw = js.rows(0, 3);
                let jv = js.rows(3, 3);
                let jp = jv - skew(&g.translation) * jw;
                let e = target.translation - g.translation;
                (DMatrix::from_iterator(3, jp.ncols(), jp.iter().copied()), DVector::from_column_slice(e.as_slice()))
            }
        }
    }

    /// Iterates damped least-squares updates from `q` toward `target`.
    fn solve(&self, q: &mut DVector<f64>, target: &Pose, index: usize, at_waypoint: bool) -> Result<Pose, KinematicsError> {
        let mut lambda = self.opts.damping;
        let mut clamped = false;
        let mut g = forward_kinematics(self.model, q.as_slice())?;
        for _ in 0..self.opts.max_iterations {
            let e = self.error(&g, target);
            if self.converged(e, at_waypoint) {
                return Ok(g);
            }
            let (j, err) = self.linearize(q.as_slice(), &g, target);
            let sigma_min = j.clone().singular_values().min();
            lambda = if sigma_min < self.opts.singular_threshold {
                (lambda * 10.0).min(self.opts.max_damping)
            } else {
                self.opts.damping
            };
            let m = j.nrows();
            let a = &j * j.transpose() + DMatrix::identity(m, m) * (lambda * lambda);
            let y = a.cholesky().expect("damped normal matrix is positive definite").solve(&err);
            *q += j.transpose() * y;
            clamped = self.model.clamp(q);
            g = forward_kinematics(self.model, q.as_slice())?;
        }
        let e = self.error(&g, target);
        if self.converged(e, at_waypoint) {
            return Ok(g);
        }
        if clamped {
            Err(KinematicsError::JointLimit { target: index })
        } else {
            Err(KinematicsError::IterationCap {
                target: index,
                iterations: self.opts.max_iterations,
                position: e.0,
                rotation: e.1,
            })
        }
    }
}

/// Tracks the constant-screw path through `waypoints` starting from `q0`.
pub fn follow_screw_path(
    model: &ManipulatorModel,
    q0: &[f64],
    waypoints: &[Pose],
    opts: &PlannerOptions,
) -> Result<JointPath, KinematicsError> {
    model.check_len(q0.len())?;
    let first = waypoints.first().ok_or(KinematicsError::NoWaypoints)?;
    let solver = Solver { model, opts };
    let g0 = forward_kinematics(model, q0)?;
    let (sp, sr) = solver.error(&g0, first);
    if sp > opts.start_tol_position || sr > opts.start_tol_rotation {
        return Err(KinematicsError::StartTolerance {
            position: sp,
            rotation: sr,
        });
    }

    let mut path = JointPath {
        configurations: vec![q0.to_vec()],
        poses: vec![g0],
        targets: vec![*first],
        deviations: vec![[sp, sr]],
        waypoint_indices: vec![0],
        gripper_events: Vec::new(),
    };
    let mut q = DVector::from_column_slice(q0);
    for pair in waypoints.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let (dp, dr) = a.distance_to(b);
        if dp < 1e-12 && dr < 1e-12 {
            // repeated waypoint: already there
            path.waypoint_indices.push(path.len() - 1);
            continue;
        }
        let steps = ((dp / opts.max_step_position).ceil().max((dr / opts.max_step_rotation).ceil()) as usize).max(1);
        for k in 1..=steps {
            let target = sclerp(a, b, k as f64 / steps as f64);
            let index = path.len();
            let prev = q.clone();
            let g = solver.solve(&mut q, &target, index, k == steps)?;
            let step = (&q - &prev).amax();
            if step > opts.max_joint_step {
                return Err(KinematicsError::StepBound { target: index, step });
            }
            let dev = solver.error(&g, &target);
            path.configurations.push(q.iter().copied().collect());
            path.poses.push(g);
            path.targets.push(target);
            path.deviations.push([dev.0, dev.1]);
        }
        path.waypoint_indices.push(path.len() - 1);
    }
    Ok(path)
}

/// Approach from the current configuration to the first transferred
/// waypoint, then the transferred path, with gripper commands attached.
///
/// The gripper is taken to be open at `q0`. `waypoint_indices[0]` is the start
/// and `waypoint_indices[i + 1]` the arrival at `waypoints[i]`.
pub fn plan_task(
    model: &ManipulatorModel,
    q0: &[f64],
    waypoints: &[Waypoint],
    opts: &PlannerOptions,
) -> Result<JointPath, KinematicsError> {
    if waypoints.is_empty() {
        return Err(KinematicsError::NoWaypoints);
    }
    let start = forward_kinematics(model, q0)?;
    let poses: Vec<Pose> = std::iter::once(start).chain(waypoints.iter().map(|w| w.pose)).collect();
    let mut path = follow_screw_path(model, q0, &poses, opts)?;
    let mut state = Gripper::Open;
    for (i, w) in waypoints.iter().enumerate() {
        if w.gripper != state {
            state = w.gripper;
            path.gripper_events.push(GripperEvent {
                index: path.waypoint_indices[i + 1],
                state,
            });
        }
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn position_only() -> PlannerOptions {
        PlannerOptions {
            task_space: TaskSpace::Position,
            ..PlannerOptions::default()
        }
    }

    /// Closed-form 2R inverse kinematics, both elbow branches.
    fn ik_2r(x: f64, y: f64) -> [[f64; 2]; 2] {
        let c2 = (x * x + y * y - 2.0) / 2.0;
        let s2 = (1.0 - c2 * c2).max(0.0).sqrt();
        [s2, -s2].map(|s| {
            let t2 = s.atan2(c2);
            let t1 = y.atan2(x) - s.atan2(1.0 + c2);
            [t1, t2]
        })
    }

    #[test]
    fn single_waypoint_is_a_no_op() {
        let m = ManipulatorModel::arm7();
        let q0 = m.ready.clone().unwrap();
        let g = forward_kinematics(&m, &q0).unwrap();
        let p = follow_screw_path(&m, &q0, &[g], &PlannerOptions::default()).unwrap();
        assert_eq!(p.configurations, vec![q0.clone()]);
        assert!(p.deviations[0][0] < 1e-12 && p.deviations[0][1] < 1e-12);
        let w = Waypoint {
            pose: g,
            gripper: Gripper::Closed,
            object: "pod".into(),
        };
        let p = plan_task(&m, &q0, &[w.clone(), w], &PlannerOptions::default()).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.waypoint_indices, vec![0, 0, 0]);
        assert_eq!(p.gripper_events, vec![GripperEvent { index: 0, state: Gripper::Closed }]);
    }

    #[test]
    fn planar_arm_matches_closed_form_ik() {
        let m = ManipulatorModel::planar_2r();
        let q0 = [0.3, 1.1];
        let g0 = forward_kinematics(&m, &q0).unwrap();
        let goal = Pose::from_translation(0.03, -0.04, 0.0).compose(&g0);
        let p = follow_screw_path(&m, &q0, &[g0, goal], &position_only()).unwrap();
        let tip = p.poses.last().unwrap().translation;
        assert!((tip - goal.translation).norm() < 1e-4);
        let q = p.final_configuration();
        let best = ik_2r(goal.translation.x, goal.translation.y)
            .into_iter()
            .min_by(|a, b| {
                let da = (a[0] - q0[0]).abs() + (a[1] - q0[1]).abs();
                let db = (b[0] - q0[0]).abs() + (b[1] - q0[1]).abs();
                da.total_cmp(&db)
            })
            .unwrap();
        assert!((q[0] - best[0]).abs() < 1e-4 && (q[1] - best[1]).abs() < 1e-4);
    }

    #[test]
    fn unreachable_target_hits_the_cap() {
        let m = ManipulatorModel::planar_2r();
        let q0 = [0.0, 0.5];
        let g0 = forward_kinematics(&m, &q0).unwrap();
        let far = Pose::from_translation(3.0, 0.0, 0.0);
        let e = follow_screw_path(&m, &q0, &[g0, far], &position_only()).unwrap_err();
        assert!(matches!(e, KinematicsError::IterationCap { .. } | KinematicsError::JointLimit { .. }), "{e}");
    }

    #[test]
    fn start_tolerance_is_enforced() {
        let m = ManipulatorModel::planar_2r();
        let e = follow_screw_path(&m, &[0.0, 0.0], &[Pose::from_translation(1.9, 0.0, 0.0)], &position_only()).unwrap_err();
        assert!(matches!(e, KinematicsError::StartTolerance { .. }));
    }

    #[test]
    fn seven_dof_tracks_a_screw_and_replays_exactly() {
        let m = ManipulatorModel::arm7();
        let q0 = m.ready.clone().unwrap();
        let g0 = forward_kinematics(&m, &q0).unwrap();
        let g1 = g0.compose(&Pose::from_axis_angle(&Vector3::new(0.0, 1.0, 0.2), 0.4)).compose(&Pose::from_translation(0.05, 0.0, 0.08));
        let g2 = Pose::from_translation(0.0, 0.1, -0.05).compose(&g1);
        let opts = PlannerOptions::default();
        let p = follow_screw_path(&m, &q0, &[g0, g1, g2], &opts).unwrap();
        let [dp, dr] = p.max_deviation();
        assert!(dp <= opts.path_tol_position && dr <= opts.path_tol_rotation);
        for (q, g) in p.configurations.iter().zip(&p.poses) {
            assert_eq!(forward_kinematics(&m, q).unwrap(), *g);
            assert!(m.within_limits(q));
        }
        assert_eq!(p.waypoint_indices.len(), 3);
        let again = follow_screw_path(&m, &q0, &[g0, g1, g2], &opts).unwrap();
        assert_eq!(again, p);
    }

    #[test]
    fn gripper_events_follow_waypoint_states() {
        let m = ManipulatorModel::arm7();
        let q0 = m.ready.clone().unwrap();
        let g0 = forward_kinematics(&m, &q0).unwrap();
        let w = |dz: f64, gripper| Waypoint {
            pose: Pose::from_translation(0.0, 0.0, dz).compose(&g0),
            gripper,
            object: "pod".into(),
        };
        let wps = [w(-0.02, Gripper::Open), w(-0.04, Gripper::Closed), w(0.0, Gripper::Closed)];
        let p = plan_task(&m, &q0, &wps, &PlannerOptions::default()).unwrap();
        assert_eq!(p.waypoint_indices.len(), 4);
        assert_eq!(
            p.gripper_events,
            vec![GripperEvent {
                index: p.waypoint_indices[2],
                state: Gripper::Closed
            }]
        );
    }
}
