//! Batch transplant and harvest trials over a simulated panel.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adjudicate::{check_harvest, check_transplant, Adjudication, HarvestCheck, Sphere, TransplantCheck};
use super::demos::{harvest_keyframes, pod_in_slot, record, transplant_keyframes, Recording, Tray, DEMO_INSERTION_DEPTH};
use super::panel::{GripperGeometry, GrowPanel, SaplingPod};
use super::registry::SlotRegistry;
use super::render::{render, slot_camera_pose, RenderedView, SensorNoise};
use super::scenario::Scenario;
use super::{FailureMode, SimError};
use crate::kinematics::{forward_kinematics, plan_task, JointPath, ManipulatorModel};
use crate::perception::{estimate_slot_pose, AxisPrior, BoxFitOptions, CameraModel, EstimateOptions, SlotPoseEstimate};
use crate::random::perturb_pose;
use crate::screw::Pose;
use crate::segment::{segment_demo, Demonstration};
use crate::transfer::{extract_roi, transfer, TaskInstance, TaskKind, TransferableConstraint, Waypoint};

/// Slots the demonstrations were recorded on.
const TRANSPLANT_DEMO_SLOTS: [&str; 2] = ["A2", "B3"];
const HARVEST_DEMO_SLOTS: [&str; 2] = ["C2", "B2"];

const PHASE_SETUP: u64 = 0;
const PHASE_TRANSPLANT: u64 = 1;
const PHASE_HARVEST: u64 = 2;
const PHASE_PLANTING: u64 = 3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
    /// Record wall-clock phase timings in the report.
    pub timings: bool,
    /// Keep the waypoints and joint path of every planned trial.
    pub traces: bool,
}

/// Planned motion of one trial, for external plotting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialTrace {
    pub trial: usize,
    pub task: TaskKind,
    pub slot: String,
    pub waypoints: Vec<Waypoint>,
    pub path: JointPath,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoSummary {
    pub id: String,
    pub task: TaskKind,
    pub slot: String,
    pub samples: usize,
    pub breakpoints: usize,
    /// Breakpoints kept inside the regions of interest.
    pub roi_breakpoints: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub task: TaskKind,
    pub slot: String,
    pub slot_diameter: f64,
    pub demo: String,
    pub success: bool,
    pub failure: FailureMode,
    pub insertion_depth: Option<f64>,
    pub min_clearance: Option<f64>,
    /// `[position, rotation]` error of the slot pose used for the trial.
    pub estimate_error: Option<[f64; 2]>,
    pub path_samples: usize,
    /// Transferred waypoint being approached when the first check failed.
    pub failed_waypoint: Option<usize>,
    pub detail: Option<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub trials: usize,
    pub successes: usize,
    pub rate: f64,
}

impl Rate {
    fn of<'a>(it: impl Iterator<Item = &'a TrialOutcome>) -> Self {
        let (mut n, mut s) = (0, 0);
        for t in it {
            n += 1;
            s += t.success as usize;
        }
        Self {
            trials: n,
            successes: s,
            rate: if n == 0 { 0.0 } else { s as f64 / n as f64 },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub transplant: Rate,
    pub harvest: Rate,
    pub overall: Rate,
    pub failures: BTreeMap<FailureMode, usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub setup_s: f64,
    pub transplant_s: f64,
    pub harvest_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub demos: Vec<DemoSummary>,
    pub trials: Vec<TrialOutcome>,
    pub summary: RunSummary,
    pub registry: SlotRegistry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
    /// Only filled when [`RunOptions::traces`] is set; never serialized.
    #[serde(skip)]
    pub traces: Vec<TrialTrace>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, SimError> {
        serde_json::from_str(s).map_err(|e| SimError::Config(e.to_string()))
    }
}

/// Independent stream per phase and trial.
pub fn trial_rng(seed: u64, phase: u64, index: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream((phase << 32) | index);
    r
}

/// Everything shared by the trials of one run.
pub struct World {
    pub scenario: Scenario,
    pub model: ManipulatorModel,
    pub q0: Vec<f64>,
    /// The panel as designed, which is what the robot knows.
    pub nominal: GrowPanel,
    /// The panel as built.
    pub truth: GrowPanel,
    pub pod: SaplingPod,
    pub gripper: GripperGeometry,
    pub source_tray: Tray,
    pub harvest_tray: Tray,
    /// Return the planned motion of each trial alongside its outcome.
    pub keep_traces: bool,
}

impl World {
    pub fn new(scenario: &Scenario) -> Result<Self, SimError> {
        scenario.validate()?;
        let model = ManipulatorModel::bundled(&scenario.model).ok_or_else(|| SimError::UnknownModel(scenario.model.clone()))?;
        let nominal = GrowPanel::from_spec(&scenario.panel);
        let mut rng = trial_rng(scenario.seed, PHASE_SETUP, 0);
        let truth = nominal.jittered(&mut rng, scenario.noise.geometry_position, scenario.noise.geometry_rotation);
        Ok(Self {
            q0: model.start_configuration(),
            model,
            nominal,
            truth,
            pod: SaplingPod::default(),
            gripper: GripperGeometry::default(),
            source_tray: Tray::source(),
            harvest_tray: Tray::harvest(),
            keep_traces: false,
            scenario: scenario.clone(),
        })
    }

    fn sensor(&self) -> SensorNoise {
        SensorNoise {
            depth_sigma: self.scenario.noise.depth_sigma,
            dropout: self.scenario.noise.dropout,
        }
    }

    /// Nominal camera for looking at slot `k`.
    pub fn camera(&self, k: usize) -> CameraModel {
        let c = &self.scenario.camera;
        let pose = slot_camera_pose(&self.nominal.slots[k].frame, c.standoff);
        CameraModel {
            fx: c.focal,
            fy: c.focal,
            cx: (c.width / 2) as f64,
            cy: (c.height / 2) as f64,
            width: c.width,
            height: c.height,
            extrinsics: pose,
        }
    }

    /// Renders slot `k` of the as-built panel from a miscalibrated camera.
    /// The returned camera is the nominal one the estimator believes in.
    pub fn view<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<(RenderedView, CameraModel), SimError> {
        let n = &self.scenario.noise;
        let cam = self.camera(k);
        let mut actual = cam.clone();
        actual.extrinsics = perturb_pose(rng, &cam.extrinsics, n.calibration_position, n.calibration_rotation);
        Ok((render(&self.truth, &actual, &self.sensor(), rng)?, cam))
    }

    /// Estimator settings for slot `k`, with the nominal axis as prior.
    pub fn estimate_options(&self, k: usize) -> EstimateOptions {
        let slot = &self.nominal.slots[k];
        EstimateOptions {
            fit: BoxFitOptions {
                prior: Some(AxisPrior {
                    axis: slot.axis(),
                    reference: Vector3::z(),
                }),
                ..BoxFitOptions::default()
            },
            ..EstimateOptions::default()
        }
    }

    /// Views slot `k` and estimates its pose.
    pub fn perceive<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<SlotPoseEstimate, String> {
        let (view, cam) = self.view(k, rng).map_err(|e| e.to_string())?;
        let mouth = self.nominal.slots[k].mouth();
        estimate_slot_pose(&view.depth, &view.masks, &cam, &mouth, &self.estimate_options(k)).map_err(|e| e.to_string())
    }

    fn start_pose(&self) -> Result<Pose, SimError> {
        forward_kinematics(&self.model, &self.q0).map_err(|e| SimError::Setup(e.to_string()))
    }

    pub fn slot_index(&self, id: &str) -> Result<usize, SimError> {
        self.nominal.slot_index(id).ok_or_else(|| SimError::UnknownSlot(id.to_string()))
    }

    fn recording(&self) -> Recording {
        Recording {
            noise_position: self.scenario.noise.demo_position,
            noise_rotation: self.scenario.noise.demo_rotation,
            ..Recording::default()
        }
    }

    /// Records a demonstration of `kind` on slot `slot_id` and the task
    /// instance it was recorded against, with the slot pose as perceived.
    /// `index` picks the random stream.
    pub fn demonstration(&self, kind: TaskKind, slot_id: &str, index: u64) -> Result<(Demonstration, TaskInstance), SimError> {
        let k = self.slot_index(slot_id)?;
        let mut rng = trial_rng(self.scenario.seed, PHASE_SETUP, 1 + index);
        let estimate = self
            .perceive(k, &mut rng)
            .map_err(|e| SimError::Setup(format!("demo slot {slot_id}: {e}")))?;
        let start = self.start_pose()?;
        let true_slot = &self.truth.slots[k].frame;
        let (keys, inst) = match kind {
            TaskKind::Transplant => {
                let pod = self.source_tray.cell(0);
                (
                    transplant_keyframes(&start, &pod, true_slot, &self.pod),
                    TaskInstance::transplant(pod, estimate.pose),
                )
            }
            TaskKind::Harvest => {
                let tray = self.harvest_tray.cell(0);
                let planted = pod_in_slot(true_slot, DEMO_INSERTION_DEPTH);
                (
                    harvest_keyframes(&start, &planted, &tray, &self.pod),
                    TaskInstance::harvest(estimate.pose, tray),
                )
            }
        };
        let id = format!("{kind}-{slot_id}");
        Ok((record(&mut rng, &id, &keys, &self.recording()), inst))
    }

    fn learn(&self, kind: TaskKind, slot_id: &str, index: u64) -> Result<(TransferableConstraint, DemoSummary), SimError> {
        let (demo, inst) = self.demonstration(kind, slot_id, index)?;
        let id = demo.id.clone();
        let tol = self.scenario.fit_tolerance()?;
        let seq = segment_demo(&demo, tol).map_err(|e| SimError::Setup(format!("{id}: {e}")))?;
        let tc = extract_roi(&seq, &inst, self.scenario.roi_radius).map_err(|e| SimError::Setup(format!("{id}: {e}")))?;
        let summary = DemoSummary {
            id,
            task: kind,
            slot: slot_id.to_string(),
            samples: demo.len(),
            breakpoints: seq.breakpoints.len(),
            roi_breakpoints: tc.objects.iter().map(|o| o.demo_indices.len()).sum(),
        };
        Ok((tc, summary))
    }

    fn outcome(&self, trial: usize, task: TaskKind, k: usize, demo: &str) -> TrialOutcome {
        TrialOutcome {
            trial,
            task,
            slot: self.nominal.slots[k].id.clone(),
            slot_diameter: self.truth.slots[k].diameter(),
            demo: demo.to_string(),
            success: false,
            failure: FailureMode::None,
            insertion_depth: None,
            min_clearance: None,
            estimate_error: None,
            path_samples: 0,
            failed_waypoint: None,
            detail: None,
        }
    }

    fn finish(out: &mut TrialOutcome, a: Adjudication, path: &JointPath) {
        out.failed_waypoint = a
            .failed_at
            .and_then(|k| path.waypoint_indices.iter().skip(1).position(|&w| w >= k));
        out.success = a.success();
        out.failure = a.failure;
        out.insertion_depth = a.insertion_depth;
        out.min_clearance = a.min_clearance;
        out.detail = a.detail;
    }

    /// Transfers the constraint to `inst` and plans it, recording the motion
    /// in `trace` when traces are kept.
    fn plan(&self, tc: &TransferableConstraint, inst: &TaskInstance, out: &TrialOutcome, trace: &mut Option<TrialTrace>) -> Result<JointPath, String> {
        let waypoints = transfer(tc, inst).map_err(|e| e.to_string())?;
        let path = plan_task(&self.model, &self.q0, &waypoints, &self.scenario.planner).map_err(|e| e.to_string())?;
        if self.keep_traces {
            *trace = Some(TrialTrace {
                trial: out.trial,
                task: out.task,
                slot: out.slot.clone(),
                waypoints,
                path: path.clone(),
            });
        }
        Ok(path)
    }

    fn run_transplant(&self, i: usize, tc: &TransferableConstraint, demo: &str, trace: &mut Option<TrialTrace>) -> (TrialOutcome, Option<(SlotPoseEstimate, Pose)>) {
        let mut rng = trial_rng(self.scenario.seed, PHASE_TRANSPLANT, i as u64);
        let k = i % self.nominal.slots.len();
        let mut out = self.outcome(i, TaskKind::Transplant, k, demo);
        let cell = self.source_tray.cell(i);
        let pod_pose = perturb_pose(&mut rng, &cell, self.scenario.noise.pod_position, 0.0);
        let est = match self.perceive(k, &mut rng) {
            Ok(e) => e,
            Err(e) => {
                out.failure = FailureMode::PerceptionFailure;
                out.detail = Some(e);
                return (out, None);
            }
        };
        let (dp, dr) = est.pose.distance_to(&self.truth.slots[k].frame);
        out.estimate_error = Some([dp, dr]);
        let inst = TaskInstance::transplant(cell, est.pose);
        let path = match self.plan(tc, &inst, &out, trace) {
            Ok(p) => p,
            Err(e) => {
                out.failure = FailureMode::Unreachable;
                out.detail = Some(e);
                return (out, None);
            }
        };
        out.path_samples = path.len();
        let a = check_transplant(
            &path,
            &TransplantCheck {
                panel: &self.truth,
                slot: k,
                pod: &self.pod,
                gripper: &self.gripper,
                pod_pose,
                insertion_threshold: self.scenario.insertion_threshold,
            },
        );
        let planted = a.planted;
        Self::finish(&mut out, a, &path);
        let keep = if out.success { planted.map(|p| (est, p)) } else { None };
        (out, keep)
    }

    fn foliage<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<Sphere> {
        if !self.scenario.noise.foliage {
            return Vec::new();
        }
        let f = &self.scenario.foliage;
        self.truth
            .neighbours(k, f.neighbour_radius)
            .into_iter()
            .map(|j| {
                let s = &self.truth.slots[j];
                let off = rng.random_range(f.offset[0]..=f.offset[1]);
                let radius = rng.random_range(f.radius[0]..=f.radius[1]);
                Sphere {
                    center: s.mouth() + s.axis() * off,
                    radius,
                }
            })
            .collect()
    }

    fn run_harvest(
        &self,
        j: usize,
        tc: &TransferableConstraint,
        demo: &str,
        registry: &SlotRegistry,
        planted: &BTreeMap<String, Pose>,
        trace: &mut Option<TrialTrace>,
    ) -> TrialOutcome {
        let mut rng = trial_rng(self.scenario.seed, PHASE_HARVEST, j as u64);
        let k = j % self.nominal.slots.len();
        let mut out = self.outcome(j, TaskKind::Harvest, k, demo);
        let slot_id = &self.nominal.slots[k].id;
        let entry = match registry.lookup(slot_id) {
            Ok(e) => e,
            Err(e) => {
                out.failure = FailureMode::PerceptionFailure;
                out.detail = Some(e.to_string());
                return out;
            }
        };
        let (dp, dr) = entry.estimate.pose.distance_to(&self.truth.slots[k].frame);
        out.estimate_error = Some([dp, dr]);
        let foliage = self.foliage(k, &mut rng);
        let inst = TaskInstance::harvest(entry.estimate.pose, self.harvest_tray.cell(j));
        let path = match self.plan(tc, &inst, &out, trace) {
            Ok(p) => p,
            Err(e) => {
                out.failure = FailureMode::Unreachable;
                out.detail = Some(e);
                return out;
            }
        };
        out.path_samples = path.len();
        let a = check_harvest(
            &path,
            &HarvestCheck {
                panel: &self.truth,
                slot: k,
                pod: &self.pod,
                gripper: &self.gripper,
                pod_pose: planted[slot_id],
                foliage: &foliage,
                grasp_tolerance: self.scenario.grasp_tolerance,
            },
        );
        Self::finish(&mut out, a, &path);
        out
    }
}

/// Runs all transplant trials, then harvests from a fully planted panel.
///
/// Transplant trial `i` targets slot `i mod n` and uses demonstration
/// `i mod 2`; successful transplants register their slot estimate in trial
/// order. Slots no transplant reached are planted at setup with a fresh
/// estimate. Harvest trial `j` targets slot `j mod n` with the registered
/// estimate. Every trial draws from its own random stream, so the report
/// depends only on the scenario and seed.
pub fn run_pipeline(scenario: &Scenario, opts: &RunOptions) -> Result<RunReport, SimError> {
    match opts.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| SimError::Setup(e.to_string()))?
            .install(|| run_inner(scenario, opts)),
        None => run_inner(scenario, opts),
    }
}

fn run_inner(scenario: &Scenario, opts: &RunOptions) -> Result<RunReport, SimError> {
    let t0 = Instant::now();
    let mut world = World::new(scenario)?;
    world.keep_traces = opts.traces;
    let world = world;
    let learned: Vec<(TransferableConstraint, DemoSummary)> = TRANSPLANT_DEMO_SLOTS
        .iter()
        .map(|s| (TaskKind::Transplant, *s))
        .chain(HARVEST_DEMO_SLOTS.iter().map(|s| (TaskKind::Harvest, *s)))
        .enumerate()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(i, (kind, slot))| world.learn(kind, slot, i as u64))
        .collect::<Result<_, _>>()?;
    let (transplant, harvest) = learned.split_at(TRANSPLANT_DEMO_SLOTS.len());
    let t_setup = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let results: Vec<_> = (0..scenario.transplant_trials)
        .into_par_iter()
        .map(|i| {
            let (tc, d) = &transplant[i % transplant.len()];
            let mut trace = None;
            let r = world.run_transplant(i, tc, &d.id, &mut trace);
            (r, trace)
        })
        .collect();
    let mut registry = SlotRegistry::new();
    let mut planted: BTreeMap<String, Pose> = BTreeMap::new();
    let mut trials = Vec::with_capacity(scenario.transplant_trials + scenario.harvest_trials);
    let mut traces = Vec::new();
    for ((out, keep), trace) in results {
        traces.extend(trace);
        if let Some((est, pod)) = keep {
            registry.record_transplant(&out.slot, est, Some(out.trial));
            planted.insert(out.slot.clone(), pod);
        }
        trials.push(out);
    }
    let t_transplant = t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    let missing: Vec<usize> = (0..world.nominal.slots.len())
        .filter(|&k| !registry.is_occupied(&world.nominal.slots[k].id))
        .collect();
    let setup: Vec<_> = missing
        .par_iter()
        .map(|&k| {
            let mut rng = trial_rng(scenario.seed, PHASE_PLANTING, k as u64);
            world.perceive(k, &mut rng).map(|e| (k, e))
        })
        .collect();
    for r in setup {
        let (k, est) = r.map_err(|e| SimError::Setup(format!("planting: {e}")))?;
        let id = world.nominal.slots[k].id.clone();
        registry.record_transplant(&id, est, None);
        planted.insert(id, pod_in_slot(&world.truth.slots[k].frame, DEMO_INSERTION_DEPTH));
    }
    let (harvests, harvest_traces): (Vec<TrialOutcome>, Vec<Option<TrialTrace>>) = (0..scenario.harvest_trials)
        .into_par_iter()
        .map(|j| {
            let (tc, d) = &harvest[j % harvest.len()];
            let mut trace = None;
            let out = world.run_harvest(j, tc, &d.id, &registry, &planted, &mut trace);
            (out, trace)
        })
        .unzip();
    traces.extend(harvest_traces.into_iter().flatten());
    for h in &harvests {
        if h.success && registry.is_occupied(&h.slot) {
            registry.mark_harvested(&h.slot, h.trial)?;
        }
    }
    trials.extend(harvests);
    let t_harvest = t2.elapsed().as_secs_f64();

    let mut failures = BTreeMap::new();
    for t in trials.iter().filter(|t| !t.success) {
        *failures.entry(t.failure).or_insert(0) += 1;
    }
    let summary = RunSummary {
        transplant: Rate::of(trials.iter().filter(|t| t.task == TaskKind::Transplant)),
        harvest: Rate::of(trials.iter().filter(|t| t.task == TaskKind::Harvest)),
        overall: Rate::of(trials.iter()),
        failures,
    };
    Ok(RunReport {
        scenario: scenario.name.clone(),
        seed: scenario.seed,
        demos: learned.into_iter().map(|(_, d)| d).collect(),
        trials,
        summary,
        registry,
        timings: opts.timings.then_some(Timings {
            setup_s: t_setup,
            transplant_s: t_transplant,
            harvest_s: t_harvest,
        }),
        traces,
    })
}
