//! Scenario configuration for batch simulation runs.

use serde::{Deserialize, Serialize};

use super::panel::PanelSpec;
use super::SimError;
use crate::kinematics::PlannerOptions;
use crate::segment::FitTolerance;
use crate::transfer::DEFAULT_ROI_RADIUS;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    /// Per-pixel depth noise (m).
    pub depth_sigma: f64,
    /// Fraction of pixels with no return.
    pub dropout: f64,
    /// Camera extrinsic calibration error (m, rad).
    pub calibration_position: f64,
    pub calibration_rotation: f64,
    /// As-built slot placement error relative to the nominal panel (m, rad).
    pub geometry_position: f64,
    pub geometry_rotation: f64,
    /// Placement error of pods in the source tray (m).
    pub pod_position: f64,
    /// Recording noise of the demonstrations (m, rad).
    pub demo_position: f64,
    pub demo_rotation: f64,
    /// Whether neighbouring foliage can snag a harvest.
    pub foliage: bool,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            depth_sigma: 0.002,
            dropout: 0.01,
            calibration_position: 0.0008,
            calibration_rotation: 0.15f64.to_radians(),
            geometry_position: 0.005,
            geometry_rotation: 2f64.to_radians(),
            pod_position: 0.0015,
            demo_position: 0.0005,
            demo_rotation: 0.2f64.to_radians(),
            foliage: true,
        }
    }
}

impl NoiseModel {
    pub fn zero() -> Self {
        Self {
            depth_sigma: 0.0,
            dropout: 0.0,
            calibration_position: 0.0,
            calibration_rotation: 0.0,
            geometry_position: 0.0,
            geometry_rotation: 0.0,
            pod_position: 0.0,
            demo_position: 0.0,
            demo_rotation: 0.0,
            foliage: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSettings {
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    /// Distance from the slot mouth along the nominal slot axis (m).
    pub standoff: f64,
}

impl Default for CameraSettings {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            focal: 600.0,
            standoff: 0.35,
        }
    }
}

/// Foliage of a planted neighbour: a sphere on the slot axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoliageModel {
    /// Sphere radius range (m).
    pub radius: [f64; 2],
    /// Range of the sphere centre's distance out along the slot axis (m).
    pub offset: [f64; 2],
    /// Slots whose mouths are within this distance count as neighbours (m).
    pub neighbour_radius: f64,
}

impl Default for FoliageModel {
    fn default() -> Self {
        Self {
            radius: [0.05, 0.12],
            offset: [0.04, 0.10],
            neighbour_radius: 0.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub transplant_trials: usize,
    pub harvest_trials: usize,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub camera: CameraSettings,
    #[serde(default)]
    pub foliage: FoliageModel,
    #[serde(default = "default_eps_pos")]
    pub eps_pos: f64,
    /// Rotation fit tolerance (rad).
    #[serde(default = "default_eps_rot")]
    pub eps_rot: f64,
    #[serde(default = "default_roi")]
    pub roi_radius: f64,
    #[serde(default = "default_insertion")]
    pub insertion_threshold: f64,
    /// `[position, rotation]` grasp tolerance for harvesting (m, rad).
    #[serde(default = "default_grasp")]
    pub grasp_tolerance: [f64; 2],
    #[serde(default = "PanelSpec::bundled")]
    pub panel: PanelSpec,
    #[serde(default)]
    pub planner: PlannerOptions,
}

fn default_model() -> String {
    "arm7".into()
}
fn default_eps_pos() -> f64 {
    FitTolerance::default().position
}
fn default_eps_rot() -> f64 {
    FitTolerance::default().rotation
}
fn default_roi() -> f64 {
    DEFAULT_ROI_RADIUS
}
fn default_insertion() -> f64 {
    0.03
}
fn default_grasp() -> [f64; 2] {
    [0.008, 10f64.to_radians()]
}

const DEFAULT_TOML: &str = include_str!("../../scenarios/default.toml");
const ZERO_NOISE_TOML: &str = include_str!("../../scenarios/zero_noise.toml");

impl Scenario {
    pub fn from_toml(s: &str) -> Result<Self, SimError> {
        let sc: Self = toml::from_str(s).map_err(|e| SimError::Config(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Default noise model, 100 transplant and 100 harvest trials.
    pub fn bundled_default() -> Self {
        Self::from_toml(DEFAULT_TOML).expect("bundled scenario is valid")
    }

    /// Every noise source switched off.
    pub fn bundled_zero_noise() -> Self {
        Self::from_toml(ZERO_NOISE_TOML).expect("bundled scenario is valid")
    }

    pub fn bundled(name: &str) -> Option<Self> {
        Self::bundled_source(name).map(|s| Self::from_toml(s).expect("bundled scenario is valid"))
    }

    /// TOML text of a bundled scenario.
    pub fn bundled_source(name: &str) -> Option<&'static str> {
        match name {
            "default" => Some(DEFAULT_TOML),
            "zero_noise" | "zero-noise" => Some(ZERO_NOISE_TOML),
            _ => None,
        }
    }

    pub fn fit_tolerance(&self) -> Result<FitTolerance, SimError> {
        FitTolerance::new(self.eps_pos, self.eps_rot).map_err(|e| SimError::Config(e.to_string()))
    }

    /// Checks ranges; errors name the offending field.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        let n = &self.noise;
        let sigmas = [
            ("noise.depth_sigma", n.depth_sigma),
            ("noise.calibration_position", n.calibration_position),
            ("noise.calibration_rotation", n.calibration_rotation),
            ("noise.geometry_position", n.geometry_position),
            ("noise.geometry_rotation", n.geometry_rotation),
            ("noise.pod_position", n.pod_position),
            ("noise.demo_position", n.demo_position),
            ("noise.demo_rotation", n.demo_rotation),
        ];
        for (name, s) in sigmas {
            if !(s.is_finite() && s >= 0.0) {
                return bad(format!("{name} must be finite and non-negative, got {s}"));
            }
        }
        if !(0.0..1.0).contains(&n.dropout) {
            return bad(format!("noise.dropout must be in [0, 1), got {}", n.dropout));
        }
        let f = &self.foliage;
        if !(f.radius[0] > 0.0 && f.radius[0] <= f.radius[1]) {
            return bad(format!("foliage.radius must be an increasing positive range, got {:?}", f.radius));
        }
        if !(f.offset[0] <= f.offset[1]) {
            return bad(format!("foliage.offset must be an increasing range, got {:?}", f.offset));
        }
        let positive = [
            ("roi_radius", self.roi_radius),
            ("insertion_threshold", self.insertion_threshold),
            ("grasp_tolerance[0]", self.grasp_tolerance[0]),
            ("grasp_tolerance[1]", self.grasp_tolerance[1]),
            ("camera.focal", self.camera.focal),
            ("camera.standoff", self.camera.standoff),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.camera.width == 0 || self.camera.height == 0 {
            return bad("camera.width and camera.height must be positive".into());
        }
        if self.panel.tubes.iter().map(|t| t.slot_count).sum::<usize>() == 0 {
            return bad("panel.tubes has no slots".into());
        }
        FitTolerance::new(self.eps_pos, self.eps_rot).map_err(|e| SimError::Config(format!("eps_pos/eps_rot: {e}")))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios_load_and_roundtrip() {
        for s in [Scenario::bundled_default(), Scenario::bundled_zero_noise()] {
            assert_eq!(Scenario::from_toml(&s.to_toml()).unwrap(), s);
        }
        let z = Scenario::bundled_zero_noise();
        assert_eq!(z.noise, NoiseModel::zero());
        let d = Scenario::bundled_default();
        assert_eq!(d.noise, NoiseModel::default());
        assert_eq!(d.transplant_trials + d.harvest_trials, 200);
    }

    #[test]
    fn bad_scenarios_are_rejected() {
        let mut s = Scenario::bundled_default();
        s.noise.dropout = 1.5;
        let e = Scenario::from_toml(&s.to_toml()).unwrap_err().to_string();
        assert!(e.contains("noise.dropout"), "{e}");
        let mut s = Scenario::bundled_default();
        s.foliage.radius = [0.1, 0.05];
        assert!(s.validate().unwrap_err().to_string().contains("foliage.radius"));
        assert!(Scenario::from_toml("name = \"x\"\nseed = 1\ntransplant_trials = 1\nharvest_trials = 1\nbogus = 2").is_err());
        let mut s = Scenario::bundled_default();
        s.eps_pos = 0.0;
        assert!(s.validate().is_err());
    }
}
