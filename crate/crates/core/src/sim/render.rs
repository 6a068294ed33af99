//! Analytic depth rendering of the grow panel.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::panel::{GrowPanel, Slot};
use super::SimError;
use crate::perception::{CameraModel, DepthImage, Mask};
use crate::screw::Pose;

/// What a camera ray hit first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Surface {
    Tube(usize),
    Collar(usize),
    /// Covered mouth of slot `i`.
    Mouth(usize),
    Wall,
    Nothing,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorNoise {
    /// Gaussian depth noise (m).
    pub depth_sigma: f64,
    /// Probability that a pixel returns no depth.
    pub dropout: f64,
}

impl SensorNoise {
    pub const NONE: SensorNoise = SensorNoise {
        depth_sigma: 0.0,
        dropout: 0.0,
    };
}

#[derive(Clone, Debug)]
pub struct RenderedView {
    pub depth: DepthImage,
    /// Ground-truth surface per pixel, row-major.
    pub surfaces: Vec<Surface>,
    /// Instance masks: the whole panel, each visible tube, each visible mouth.
    pub masks: Vec<Mask>,
    pub labels: Vec<String>,
}

impl RenderedView {
    pub fn mask(&self, label: &str) -> Option<&Mask> {
        self.labels.iter().position(|l| l == label).map(|i| &self.masks[i])
    }
}

/// Entry distance of a ray into a closed cylinder `{ρ ≤ r, z0 ≤ z ≤ z1}`
/// given in local coordinates, and whether it entered through the `z1` cap.
fn cylinder_entry(o: &Vector3<f64>, d: &Vector3<f64>, r: f64, z0: f64, z1: f64) -> Option<(f64, Face)> {
    let mut best: Option<(f64, Face)> = None;
    let mut offer = |t: f64, f: Face| {
        if t > 0.0 && best.is_none_or(|(b, _)| t < b) {
            best = Some((t, f));
        }
    };
    let a = d.x * d.x + d.y * d.y;
    if a > 1e-18 {
        let b = o.x * d.x + o.y * d.y;
        let c = o.x * o.x + o.y * o.y - r * r;
        let disc = b * b - a * c;
        if disc >= 0.0 {
            let t = (-b - disc.sqrt()) / a;
            let z = o.z + t * d.z;
            if z >= z0 && z <= z1 {
                offer(t, Face::Side);
            }
        }
    }
    if d.z.abs() > 1e-18 {
        for (zc, f) in [(z0, Face::Bottom), (z1, Face::Top)] {
            let t = (zc - o.z) / d.z;
            let (x, y) = (o.x + t * d.x, o.y + t * d.y);
            if x * x + y * y <= r * r {
                offer(t, f);
            }
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Face {
    Side,
    Top,
    Bottom,
}

fn local_ray(frame: &Pose, o: &Vector3<f64>, d: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let inv = frame.rotation.inverse();
    (inv * (o - frame.translation), inv * d)
}

fn slot_entry(s: &Slot, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<(f64, Face)> {
    let (lo, ld) = local_ray(&s.frame, o, d);
    cylinder_entry(&lo, &ld, s.outer_radius(), -s.depth, 0.0)
}

/// First intersection of the ray `o + t d` (t > 0) with the panel and the
/// wall behind it. Each collar is a solid cylinder whose outer cap is the
/// covered slot mouth.
pub fn cast_ray(panel: &GrowPanel, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<(f64, Surface)> {
    let mut best: Option<(f64, Surface)> = None;
    let mut offer = |t: f64, s: Surface| {
        if best.is_none_or(|(b, _)| t < b) {
            best = Some((t, s));
        }
    };
    for (i, tube) in panel.tubes.iter().enumerate() {
        let (lo, ld) = local_ray(&tube.base, o, d);
        if let Some((t, _)) = cylinder_entry(&lo, &ld, tube.radius(), 0.0, tube.length) {
            offer(t, Surface::Tube(i));
        }
    }
    for (i, s) in panel.slots.iter().enumerate() {
        if let Some((t, f)) = slot_entry(s, o, d) {
            offer(t, if f == Face::Top { Surface::Mouth(i) } else { Surface::Collar(i) });
        }
    }
    if d.x.abs() > 1e-18 {
        let t = (panel.wall_x - o.x) / d.x;
        if t > 0.0 {
            offer(t, Surface::Wall);
        }
    }
    best
}

/// Camera pose `standoff` metres out along a slot axis, looking down the axis
/// with image rows running downward in the world.
pub fn slot_camera_pose(slot_frame: &Pose, standoff: f64) -> Pose {
    let a = slot_frame.axis(2);
    let z = -a;
    let up = Vector3::z();
    let y = -(up - z * z.dot(&up)).normalize();
    let x = y.cross(&z);
    let r = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z]));
    Pose::new(UnitQuaternion::from_rotation_matrix(&r), slot_frame.translation + a * standoff)
}

/// Renders the depth image and instance masks seen by `cam`, which here is the
/// true camera pose.
pub fn render<R: Rng + ?Sized>(
    panel: &GrowPanel,
    cam: &CameraModel,
    noise: &SensorNoise,
    rng: &mut R,
) -> Result<RenderedView, SimError> {
    cam.validate().map_err(|e| SimError::Render(e.to_string()))?;
    let (w, h) = (cam.width, cam.height);
    let o = cam.extrinsics.translation;
    let rot = cam.extrinsics.rotation;
    let hits: Vec<(f64, Surface)> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let d = rot * cam.ray((i % w) as f64, (i / w) as f64);
            cast_ray(panel, &o, &d).unwrap_or((0.0, Surface::Nothing))
        })
        .collect();

    let mut depth = DepthImage::zeros(w, h);
    let gauss = Normal::new(0.0, noise.depth_sigma.max(0.0)).map_err(|e| SimError::Render(e.to_string()))?;
    for (i, &(t, _)) in hits.iter().enumerate() {
        if t <= 0.0 {
            continue;
        }
        let mut z = t;
        if noise.depth_sigma > 0.0 {
            z += gauss.sample(rng);
        }
        if noise.dropout > 0.0 && rng.random::<f64>() < noise.dropout {
            z = 0.0;
        }
        depth.data[i] = z.max(0.0);
    }

    let surfaces: Vec<Surface> = hits.iter().map(|h| h.1).collect();
    let on_tube = |s: Surface, k: usize| match s {
        Surface::Tube(i) => i == k,
        Surface::Collar(i) | Surface::Mouth(i) => panel.slots[i].tube == k,
        _ => false,
    };
    let mask_of = |f: &dyn Fn(Surface) -> bool| Mask::from_fn(w, h, |u, v| f(surfaces[v * w + u]));

    let mut masks = Vec::new();
    let mut labels = Vec::new();
    let panel_mask = mask_of(&|s| !matches!(s, Surface::Wall | Surface::Nothing));
    if panel_mask.count() == 0 {
        return Err(SimError::EmptyView);
    }
    masks.push(panel_mask);
    labels.push("panel".to_string());
    for (k, t) in panel.tubes.iter().enumerate() {
        let m = mask_of(&|s| on_tube(s, k));
        if m.count() > 0 {
            masks.push(m);
            labels.push(format!("tube:{}", t.id));
        }
    }
    for (k, s) in panel.slots.iter().enumerate() {
        let m = mask_of(&|x| x == Surface::Mouth(k));
        if m.count() > 0 {
            masks.push(m);
            labels.push(format!("slot:{}", s.id));
        }
    }
    Ok(RenderedView {
        depth,
        surfaces,
        masks,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::project_point;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn axis_camera(panel: &GrowPanel, slot: &str, standoff: f64) -> CameraModel {
        let s = panel.slot(slot).unwrap();
        CameraModel::new(600.0, 600.0, 320.0, 240.0, 640, 480, slot_camera_pose(&s.frame, standoff)).unwrap()
    }

    #[test]
    fn centre_pixel_sees_the_mouth_at_the_standoff() {
        let panel = GrowPanel::bundled();
        for id in ["A1", "B3", "C4"] {
            let cam = axis_camera(&panel, id, 0.5);
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let view = render(&panel, &cam, &SensorNoise::NONE, &mut rng).unwrap();
            assert!((view.depth.get(320, 240) - 0.5).abs() < 1e-6);
            let k = panel.slot_index(id).unwrap();
            assert_eq!(view.surfaces[240 * 640 + 320], Surface::Mouth(k));
            // the slot mask is nested inside its tube mask
            let slot = view.mask(&format!("slot:{id}")).unwrap();
            let tube = view.mask(&format!("tube:{}", &id[..1])).unwrap();
            assert!(slot.count() < tube.count());
            assert_eq!(slot.union(tube), *tube);
        }
    }

    #[test]
    fn camera_looks_down_the_axis_with_world_up_at_the_top() {
        let panel = GrowPanel::bundled();
        let s = panel.slot("A2").unwrap();
        let cam = axis_camera(&panel, "A2", 0.35);
        let above = project_point(&cam, &(s.mouth() + Vector3::z() * 0.01)).unwrap();
        assert!(above.v < 240.0);
        let p = project_point(&cam, &s.mouth()).unwrap();
        assert!((p.u - 320.0).abs() < 1e-9 && (p.v - 240.0).abs() < 1e-9);
    }

    #[test]
    fn facing_away_is_an_empty_view() {
        let panel = GrowPanel::bundled();
        let pose = Pose::new(
            UnitQuaternion::from_axis_angle(&Vector3::y_axis(), -std::f64::consts::FRAC_PI_2),
            Vector3::new(0.2, 0.0, 0.4),
        );
        let cam = CameraModel::new(600.0, 600.0, 320.0, 240.0, 640, 480, pose).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(render(&panel, &cam, &SensorNoise::NONE, &mut rng), Err(SimError::EmptyView)));
    }

    #[test]
    fn noise_statistics() {
        let panel = GrowPanel::bundled();
        let cam = axis_camera(&panel, "B2", 0.35);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let clean = render(&panel, &cam, &SensorNoise::NONE, &mut rng).unwrap();
        let noise = SensorNoise {
            depth_sigma: 0.002,
            dropout: 0.01,
        };
        let noisy = render(&panel, &cam, &noise, &mut rng).unwrap();
        let mut diffs = Vec::new();
        let mut dropped = 0usize;
        for (a, b) in clean.depth.data.iter().zip(&noisy.depth.data) {
            if *b == 0.0 {
                dropped += 1;
            } else {
                diffs.push(b - a);
            }
        }
        let n = clean.depth.data.len() as f64;
        assert!((dropped as f64 / n - 0.01).abs() < 0.002);
        let sd = (diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64).sqrt();
        assert!((sd - 0.002).abs() < 0.0001);
        assert_eq!(clean.masks, noisy.masks);
    }
}
