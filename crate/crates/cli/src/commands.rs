use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use screwtransfer::formats::{from_json, read_trajectory, save_json, save_trajectory, Warning};
use screwtransfer::kinematics::{forward_kinematics, plan_task, JointPath, ManipulatorModel};
use screwtransfer::perception::{
    estimate_slot_pose, read_depth_pgm, read_mask_pgm, write_depth_pgm, write_mask_pgm, AxisPrior, CameraModel, EstimateOptions, SlotPoseEstimate,
};
use screwtransfer::segment::{segment_demo, segment_fit_error, FitTolerance, ScrewSegmentSequence};
use screwtransfer::sim::{run_pipeline, trial_rng, RunOptions, RunReport, Scenario, World};
use screwtransfer::transfer::{constraint_report, extract_roi, transfer as transfer_to, ConstraintReport, TaskInstance, TaskKind, Waypoint, DEFAULT_ROI_RADIUS};

use crate::output::{emit, CliError, Inputs, Tool};
use crate::{FitArgs, Result};

fn warning_lines(w: &[Warning]) -> Vec<String> {
    w.iter().map(|w| format!("line {}: {}", w.line, w.message)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitError {
    pub position: f64,
    pub rotation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentFile {
    pub tool: Tool,
    pub inputs: Inputs,
    #[serde(default)]
    pub warnings: Vec<String>,
    /// Largest deviation of any sample from its segment's screw path.
    pub fit_error: FitError,
    pub sequence: ScrewSegmentSequence,
}

pub fn segment(demo: &Path, fit: FitArgs, out: Option<&Path>) -> Result<()> {
    let mut inputs = Inputs::default();
    let bytes = inputs.read("demo", demo)?;
    let id = demo.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let (d, warnings) = read_trajectory(&bytes[..], &id)?;
    let tol = FitTolerance::new(fit.eps_pos, fit.eps_rot.to_radians()).map_err(CliError::usage)?;
    let sequence = segment_demo(&d, tol).map_err(|e| CliError::stage("segmentation", e))?;
    let (p, r) = segment_fit_error(&sequence, &d).map_err(|e| CliError::stage("segmentation", e))?;
    emit(
        &SegmentFile {
            tool: Tool::current(),
            inputs,
            warnings: warning_lines(&warnings),
            fit_error: FitError { position: p, rotation: r },
            sequence,
        },
        out,
    )
}

/// Depth image, candidate masks and camera for estimating the slot pose.
/// Relative paths are resolved against the directory of the request file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerceptionRequest {
    pub depth: PathBuf,
    pub masks: Vec<PathBuf>,
    pub camera: PathBuf,
    /// Rough slot position, used to pick the mask.
    pub near: [f64; 3],
    /// Expected outward slot axis.
    #[serde(default)]
    pub axis: Option<[f64; 3]>,
}

#[derive(Args, Debug)]
pub struct TransferArgs {
    /// Segment file written by `segment`.
    pub segments: PathBuf,
    /// Task instance the demonstration was recorded against.
    #[arg(long)]
    pub demo_instance: PathBuf,
    /// New task instance; the demonstration's own instance when omitted.
    #[arg(long)]
    pub instance: Option<PathBuf>,
    /// Perception request whose slot estimate replaces the instance's slot pose.
    #[arg(long)]
    pub perception: Option<PathBuf>,
    /// Region-of-interest radius around each task object (m).
    #[arg(long, env = "SCREWTRANSFER_ROI_RADIUS", default_value_t = DEFAULT_ROI_RADIUS)]
    pub roi_radius: f64,
    #[arg(long, env = "SCREWTRANSFER_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferFile {
    pub tool: Tool,
    pub inputs: Inputs,
    pub roi_radius: f64,
    pub instance: TaskInstance,
    #[serde(default)]
    pub estimate: Option<SlotPoseEstimate>,
    pub constraints: ConstraintReport,
    pub waypoints: Vec<Waypoint>,
}

fn load<T: serde::de::DeserializeOwned>(inputs: &mut Inputs, role: &str, path: &Path) -> Result<T> {
    let text = inputs.read_string(role, path)?;
    from_json(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn estimate(inputs: &mut Inputs, path: &Path) -> Result<SlotPoseEstimate> {
    let req: PerceptionRequest = load(inputs, "perception", path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let depth = read_depth_pgm(&mut &inputs.read("depth", &dir.join(&req.depth))?[..]).map_err(CliError::usage)?;
    let mut masks = Vec::new();
    for (i, m) in req.masks.iter().enumerate() {
        let bytes = inputs.read(&format!("mask{i}"), &dir.join(m))?;
        masks.push(read_mask_pgm(&mut &bytes[..]).map_err(CliError::usage)?);
    }
    let cam: CameraModel = load(inputs, "camera", &dir.join(&req.camera))?;
    cam.validate().map_err(CliError::usage)?;
    let mut opts = EstimateOptions::default();
    opts.fit.prior = req.axis.map(|a| AxisPrior {
        axis: Vector3::from(a),
        reference: Vector3::z(),
    });
    estimate_slot_pose(&depth, &masks, &cam, &Vector3::from(req.near), &opts).map_err(|e| CliError::Stage {
        stage: "perception",
        message: e.to_string(),
        mode: Some("perception-failure".into()),
    })
}

pub fn transfer(a: &TransferArgs) -> Result<()> {
    let mut inputs = Inputs::default();
    let seg: SegmentFile = load(&mut inputs, "segments", &a.segments)?;
    let demo_inst: TaskInstance = load(&mut inputs, "demo_instance", &a.demo_instance)?;
    demo_inst.validate().map_err(CliError::usage)?;
    let mut inst = match &a.instance {
        Some(p) => load(&mut inputs, "instance", p)?,
        None => demo_inst.clone(),
    };
    let est = match &a.perception {
        Some(p) => {
            let e = estimate(&mut inputs, p)?;
            inst.objects.insert("slot".into(), e.pose);
            Some(e)
        }
        None => None,
    };
    inst.validate().map_err(CliError::usage)?;
    if !(a.roi_radius.is_finite() && a.roi_radius > 0.0) {
        return Err(CliError::usage("--roi-radius must be positive"));
    }
    let tc = extract_roi(&seg.sequence, &demo_inst, a.roi_radius).map_err(|e| CliError::stage("roi", e))?;
    let waypoints = transfer_to(&tc, &inst).map_err(|e| CliError::stage("transfer", e))?;
    emit(
        &TransferFile {
            tool: Tool::current(),
            inputs,
            roi_radius: a.roi_radius,
            instance: inst,
            estimate: est,
            constraints: constraint_report(&tc),
            waypoints,
        },
        a.out.as_deref(),
    )
}

#[derive(Args, Debug)]
pub struct PlanArgs {
    /// Waypoint file written by `transfer`, or a bare JSON list of waypoints.
    pub waypoints: PathBuf,
    /// Bundled model name (`arm7`, `planar_2r`) or a model TOML file.
    #[arg(long, default_value = "arm7")]
    pub model: String,
    /// Start configuration as comma-separated joint values; the model's
    /// ready configuration when omitted.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub q0: Option<Vec<f64>>,
    #[arg(long, env = "SCREWTRANSFER_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub samples: usize,
    pub waypoints: usize,
    /// Largest `[position, rotation]` distance from the interpolated targets.
    pub max_deviation: [f64; 2],
    pub final_configuration: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub tool: Tool,
    pub inputs: Inputs,
    pub model: String,
    pub q0: Vec<f64>,
    pub summary: PlanSummary,
    pub path: JointPath,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum WaypointSource {
    Bare(Vec<Waypoint>),
    File { waypoints: Vec<Waypoint> },
}

pub fn plan(a: &PlanArgs) -> Result<()> {
    let mut inputs = Inputs::default();
    let waypoints = match load(&mut inputs, "waypoints", &a.waypoints)? {
        WaypointSource::Bare(w) | WaypointSource::File { waypoints: w } => w,
    };
    let model = match ManipulatorModel::bundled(&a.model) {
        Some(m) => m,
        None => {
            let path = Path::new(&a.model);
            let text = inputs.read_string("model", path)?;
            ManipulatorModel::from_toml(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?
        }
    };
    let q0 = a.q0.clone().unwrap_or_else(|| model.start_configuration());
    forward_kinematics(&model, &q0).map_err(CliError::usage)?;
    let path = plan_task(&model, &q0, &waypoints, &Default::default()).map_err(|e| CliError::Stage {
        stage: "planning",
        message: e.to_string(),
        mode: Some("unreachable".into()),
    })?;
    emit(
        &PlanFile {
            tool: Tool::current(),
            inputs,
            model: model.name.clone(),
            q0,
            summary: PlanSummary {
                samples: path.len(),
                waypoints: waypoints.len(),
                max_deviation: path.max_deviation(),
                final_configuration: path.final_configuration().to_vec(),
            },
            path,
        },
        a.out.as_deref(),
    )
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Bundled scenario name (`default`, `zero_noise`) or a scenario TOML file.
    #[arg(long, default_value = "default")]
    pub scenario: String,
    #[arg(long, env = "SCREWTRANSFER_SEED")]
    pub seed: Option<u64>,
    /// Worker threads; all cores when omitted.
    #[arg(long, env = "SCREWTRANSFER_JOBS")]
    pub jobs: Option<usize>,
    /// Segment position tolerance (m); the scenario's when omitted.
    #[arg(long, env = "SCREWTRANSFER_EPS_POS")]
    pub eps_pos: Option<f64>,
    /// Segment rotation tolerance (degrees); the scenario's when omitted.
    #[arg(long, env = "SCREWTRANSFER_EPS_ROT")]
    pub eps_rot: Option<f64>,
    /// Region-of-interest radius (m); the scenario's when omitted.
    #[arg(long, env = "SCREWTRANSFER_ROI_RADIUS")]
    pub roi_radius: Option<f64>,
    /// Include wall-clock phase timings, which makes the report non-reproducible.
    #[arg(long)]
    pub timings: bool,
    /// Directory for per-trial waypoint and joint path files.
    #[arg(long)]
    pub traces: Option<PathBuf>,
    #[arg(long, env = "SCREWTRANSFER_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateFile {
    pub tool: Tool,
    pub inputs: Inputs,
    #[serde(flatten)]
    pub report: RunReport,
}

fn scenario(inputs: &mut Inputs, name: &str) -> Result<Scenario> {
    let text = match Scenario::bundled_source(name) {
        Some(t) => {
            inputs.add_bytes("scenario", &format!("bundled:{name}"), t.as_bytes());
            t.to_string()
        }
        None => inputs.read_string("scenario", Path::new(name))?,
    };
    Scenario::from_toml(&text).map_err(|e| CliError::usage(format!("{name}: {e}")))
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let mut inputs = Inputs::default();
    let mut sc = scenario(&mut inputs, &a.scenario)?;
    if let Some(s) = a.seed {
        sc.seed = s;
    }
    if let Some(v) = a.eps_pos {
        sc.eps_pos = v;
    }
    if let Some(v) = a.eps_rot {
        sc.eps_rot = v.to_radians();
    }
    if let Some(v) = a.roi_radius {
        sc.roi_radius = v;
    }
    sc.validate().map_err(CliError::usage)?;
    let opts = RunOptions {
        jobs: a.jobs,
        timings: a.timings,
        traces: a.traces.is_some(),
    };
    let report = run_pipeline(&sc, &opts).map_err(|e| CliError::stage("simulation", e))?;
    if let Some(dir) = &a.traces {
        fs::create_dir_all(dir).map_err(|e| CliError::stage("output", format!("{}: {e}", dir.display())))?;
        for t in &report.traces {
            save_json(&dir.join(format!("{}-{:04}.json", t.task, t.trial)), t).map_err(|e| CliError::stage("output", e))?;
        }
    }
    emit(
        &SimulateFile {
            tool: Tool::current(),
            inputs,
            report,
        },
        a.out.as_deref(),
    )
}

pub fn report(path: &Path, json: bool) -> Result<()> {
    let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let r = RunReport::from_json(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    if json {
        return emit(&r.summary, None);
    }
    let s = &r.summary;
    println!("scenario {} (seed {})", r.scenario, r.seed);
    println!("{:<12} {:>7} {:>9} {:>8}", "task", "trials", "success", "rate");
    for (name, rate) in [("transplant", &s.transplant), ("harvest", &s.harvest), ("overall", &s.overall)] {
        println!("{:<12} {:>7} {:>9} {:>7.1}%", name, rate.trials, rate.successes, 100.0 * rate.rate);
    }
    if !s.failures.is_empty() {
        println!();
        println!("{:<24} {:>6}", "failure", "count");
        for (mode, n) in &s.failures {
            println!("{:<24} {:>6}", mode.to_string(), n);
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Transplant,
    Harvest,
}

#[derive(Args, Debug)]
pub struct DemoArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Task::Transplant)]
    pub task: Task,
    /// Bundled scenario name or scenario TOML file providing the noise model.
    #[arg(long, default_value = "zero_noise")]
    pub scenario: String,
    #[arg(long, env = "SCREWTRANSFER_SEED")]
    pub seed: Option<u64>,
    /// Slot the demonstration is recorded on.
    #[arg(long, default_value = "A2")]
    pub demo_slot: String,
    /// Slot of the new task instance.
    #[arg(long, default_value = "B1")]
    pub target_slot: String,
}

pub fn demo(a: &DemoArgs) -> Result<()> {
    let mut sc = scenario(&mut Inputs::default(), &a.scenario)?;
    if let Some(s) = a.seed {
        sc.seed = s;
    }
    let world = World::new(&sc).map_err(CliError::usage)?;
    let kind = match a.task {
        Task::Transplant => TaskKind::Transplant,
        Task::Harvest => TaskKind::Harvest,
    };
    let (demo, demo_inst) = world.demonstration(kind, &a.demo_slot, 0).map_err(CliError::usage)?;
    let k = world.slot_index(&a.target_slot).map_err(CliError::usage)?;
    let mut rng = trial_rng(sc.seed, 0xde40, k as u64);
    let (view, cam) = world.view(k, &mut rng).map_err(|e| CliError::stage("render", e))?;
    // estimate from the depth as stored, so the files reproduce it exactly
    let depth = view.depth.quantized();
    let opts = world.estimate_options(k);
    let slot = &world.nominal.slots[k];
    let est = estimate_slot_pose(&depth, &view.masks, &cam, &slot.mouth(), &opts).map_err(|e| CliError::stage("perception", e))?;
    let target = match kind {
        TaskKind::Transplant => TaskInstance::transplant(world.source_tray.cell(1), est.pose),
        TaskKind::Harvest => TaskInstance::harvest(est.pose, world.harvest_tray.cell(1)),
    };

    let io = |e: std::io::Error| CliError::stage("output", e);
    fs::create_dir_all(&a.out).map_err(io)?;
    let out = |name: &str| a.out.join(name);
    save_trajectory(&out("demo.jsonl"), &demo).map_err(|e| CliError::stage("output", e))?;
    let save = |name: &str, v: &dyn erased::Json| fs::write(out(name), v.json()).map_err(io);
    save("demo-instance.json", &demo_inst)?;
    save("target-instance.json", &target)?;
    save("camera.json", &cam)?;
    let mut f = fs::File::create(out("depth.pgm")).map_err(io)?;
    write_depth_pgm(&mut f, &depth).map_err(io)?;
    let mut masks = Vec::new();
    for (i, m) in view.masks.iter().enumerate() {
        let name = format!("mask-{i}.pgm");
        let mut f = fs::File::create(out(&name)).map_err(io)?;
        write_mask_pgm(&mut f, m).map_err(io)?;
        masks.push(PathBuf::from(name));
    }
    let req = PerceptionRequest {
        depth: "depth.pgm".into(),
        masks,
        camera: "camera.json".into(),
        near: slot.mouth().into(),
        axis: Some(slot.axis().into()),
    };
    save("perception.json", &req)?;
    emit(
        &serde_json::json!({
            "status": "ok",
            "task": kind,
            "demo_slot": a.demo_slot,
            "target_slot": a.target_slot,
            "samples": demo.len(),
            "labels": view.labels,
        }),
        None,
    )
}

mod erased {
    use screwtransfer::formats::to_json;
    use serde::Serialize;

    /// Object-safe JSON serialization.
    pub trait Json {
        fn json(&self) -> String;
    }

    impl<T: Serialize> Json for T {
        fn json(&self) -> String {
            to_json(self)
        }
    }
}
