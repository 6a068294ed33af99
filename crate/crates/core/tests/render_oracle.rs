//! The analytic ray caster checked against point-membership marching.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use screwtransfer::perception::{deproject_mask, CameraModel};
use screwtransfer::sim::{cast_ray, render, slot_camera_pose, GrowPanel, SensorNoise};

fn inside(panel: &GrowPanel, p: &Vector3<f64>) -> bool {
    if p.x >= panel.wall_x {
        return true;
    }
    let in_cyl = |q: Vector3<f64>, r: f64, z0: f64, z1: f64| q.x * q.x + q.y * q.y <= r * r && q.z >= z0 && q.z <= z1;
    panel.tubes.iter().any(|t| in_cyl(t.base.inverse().transform_point(p), t.radius(), 0.0, t.length))
        || panel
            .slots
            .iter()
            .any(|s| in_cyl(s.frame.inverse().transform_point(p), s.outer_radius(), -s.depth, 0.0))
}

/// First entry into the panel solid by fixed-step marching, refined by bisection.
fn march(panel: &GrowPanel, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<f64> {
    let step = 2e-4;
    let mut t = 0.0;
    while t < 3.0 {
        let next = t + step;
        if inside(panel, &(o + d * next)) {
            let (mut lo, mut hi) = (t, next);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if inside(panel, &(o + d * mid)) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Some(hi);
        }
        t = next;
    }
    None
}

fn cameras(panel: &GrowPanel) -> Vec<CameraModel> {
    panel
        .slots
        .iter()
        .map(|s| CameraModel::centred(600.0, 640, 480, slot_camera_pose(&s.frame, 0.35)))
        .collect()
}

#[test]
fn analytic_depth_matches_marching() {
    let panel = GrowPanel::bundled();
    let cams = cameras(&panel);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut hits = 0;
    for _ in 0..1000 {
        let cam = &cams[rng.random_range(0..cams.len())];
        let (u, v) = (rng.random_range(0..cam.width), rng.random_range(0..cam.height));
        let d = cam.extrinsics.rotation * cam.ray(u as f64, v as f64);
        let o = cam.extrinsics.translation;
        let analytic = cast_ray(&panel, &o, &d).map(|h| h.0);
        let marched = march(&panel, &o, &d);
        match (analytic, marched) {
            (Some(a), Some(m)) => {
                assert!((a - m).abs() < 1e-6, "pixel ({u}, {v}): {a} vs {m}");
                hits += 1;
            }
            (None, None) => {}
            other => panic!("pixel ({u}, {v}): {other:?}"),
        }
    }
    assert!(hits > 900);
}

#[test]
fn mouth_pixels_deproject_onto_the_mouth_disk() {
    let panel = GrowPanel::bundled();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (cam, slot) in cameras(&panel).iter().zip(&panel.slots) {
        let view = render(&panel, cam, &SensorNoise::NONE, &mut rng).unwrap();
        let mask = view.mask(&format!("slot:{}", slot.id)).unwrap();
        assert!(mask.count() > 100);
        let pts = deproject_mask(&view.depth, mask, cam).unwrap();
        let inv = slot.frame.inverse();
        for p in pts {
            let q = inv.transform_point(&p);
            assert!(q.z.abs() < 1e-9, "{} off the mouth plane by {}", slot.id, q.z);
            assert!(q.xy().norm() <= slot.outer_radius() + 1e-9);
        }
    }
}
