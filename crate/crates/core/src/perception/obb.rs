use nalgebra::{Matrix3, Rotation3, SymmetricEigen, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::PerceptionError;
use crate::screw::Pose;

/// Known direction used to orient the box.
///
/// The box z axis becomes the principal axis best aligned with `axis`, signed
/// to agree with it. The x axis is `reference` projected onto the plane
/// orthogonal to z, which fixes the spin of near-symmetric clouds such as a
/// round slot mouth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisPrior {
    pub axis: Vector3<f64>,
    pub reference: Vector3<f64>,
}

impl AxisPrior {
    pub fn transformed(&self, t: &Pose) -> Self {
        Self {
            axis: t.transform_vector(&self.axis),
            reference: t.transform_vector(&self.reference),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxFitOptions {
    pub min_points: usize,
    /// Extents below this are clamped and the fit flagged degenerate (m).
    pub extent_floor: f64,
    pub prior: Option<AxisPrior>,
}

impl Default for BoxFitOptions {
    fn default() -> Self {
        Self {
            min_points: 50,
            extent_floor: 0.001,
            prior: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotPoseEstimate {
    /// Box frame in the base frame, origin at the box centre.
    pub pose: Pose,
    /// Full edge lengths along the box x, y, z axes (m).
    pub extents: [f64; 3],
    pub point_count: usize,
    /// RMS distance from the points to the box surface (m).
    pub residual: f64,
    pub degenerate: bool,
}

fn canonical_sign(v: Vector3<f64>) -> Vector3<f64> {
    let i = v.iamax();
    if v[i] < 0.0 {
        -v
    } else {
        v
    }
}

/// PCA-oriented bounding box of `cloud`.
pub fn fit_bounding_box(cloud: &[Vector3<f64>], opts: &BoxFitOptions) -> Result<SlotPoseEstimate, PerceptionError> {
    if cloud.len() < opts.min_points.max(1) {
        return Err(PerceptionError::TooFewPoints {
            found: cloud.len(),
            required: opts.min_points,
        });
    }
    if cloud.iter().any(|p| !p.iter().all(|x| x.is_finite())) {
        return Err(PerceptionError::NonFinitePoint);
    }
    let n = cloud.len() as f64;
    let mean = cloud.iter().sum::<Vector3<f64>>() / n;
    let cov = cloud.iter().fold(Matrix3::zeros(), |acc, p| {
        let d = p - mean;
        acc + d * d.transpose()
    }) / n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let pcs: Vec<Vector3<f64>> = order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();

    let (x, y, z) = match &opts.prior {
        None => {
            let x = canonical_sign(pcs[0]);
            let y = canonical_sign(pcs[1]);
            (x, y, x.cross(&y))
        }
        Some(prior) => {
            let a = prior.axis.normalize();
            let zi = (0..3)
                .max_by(|&i, &j| pcs[i].dot(&a).abs().total_cmp(&pcs[j].dot(&a).abs()))
                .unwrap();
            let z = if pcs[zi].dot(&a) < 0.0 { -pcs[zi] } else { pcs[zi] };
            let r = prior.reference - z * z.dot(&prior.reference);
            let x = if r.norm() > 1e-6 {
                r.normalize()
            } else {
                let xi = (0..3).find(|&i| i != zi).unwrap();
                canonical_sign(pcs[xi])
            };
            (x, z.cross(&x), z)
        }
    };
    let axes = [x, y, z];

    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in cloud {
        let d = p - mean;
        for k in 0..3 {
            let c = axes[k].dot(&d);
            lo[k] = lo[k].min(c);
            hi[k] = hi[k].max(c);
        }
    }
    let mut centre = mean;
    let mut extents = [0.0; 3];
    let mut degenerate = false;
    for k in 0..3 {
        centre += axes[k] * (0.5 * (lo[k] + hi[k]));
        extents[k] = hi[k] - lo[k];
        if extents[k] < opts.extent_floor {
            extents[k] = opts.extent_floor;
            degenerate = true;
        }
    }

    let half = Vector3::from(extents) * 0.5;
    let sq: f64 = cloud
        .iter()
        .map(|p| {
            let d = p - centre;
            let c = Vector3::new(x.dot(&d), y.dot(&d), z.dot(&d));
            let outside = Vector3::from_fn(|k, _| (c[k].abs() - half[k]).max(0.0));
            let dist = if outside.norm() > 0.0 {
                outside.norm()
            } else {
                (0..3).map(|k| half[k] - c[k].abs()).fold(f64::INFINITY, f64::min)
            };
            dist * dist
        })
        .sum();

    let rot = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&axes));
    Ok(SlotPoseEstimate {
        pose: Pose::new(UnitQuaternion::from_rotation_matrix(&rot), centre),
        extents,
        point_count: cloud.len(),
        residual: (sq / n).sqrt(),
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_pose, random_unit_vector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn corners(a: f64, b: f64, c: f64) -> Vec<Vector3<f64>> {
        let mut v = Vec::new();
        for sx in [-0.5, 0.5] {
            for sy in [-0.5, 0.5] {
                for sz in [-0.5, 0.5] {
                    v.push(Vector3::new(sx * a, sy * b, sz * c));
                }
            }
        }
        v
    }

    fn loose() -> BoxFitOptions {
        BoxFitOptions {
            min_points: 8,
            ..BoxFitOptions::default()
        }
    }

    fn is_signed_permutation(m: &Matrix3<f64>) -> bool {
        m.iter().all(|x| x.abs() < 1e-9 || (x.abs() - 1.0).abs() < 1e-9)
    }

    #[test]
    fn unit_cube_corners() {
        let e = fit_bounding_box(&corners(1.0, 1.0, 1.0), &loose()).unwrap();
        for k in 0..3 {
            assert!((e.extents[k] - 1.0).abs() < 1e-12);
        }
        let r = e.pose.rotation.to_rotation_matrix().into_inner();
        assert!(is_signed_permutation(&r));
        assert!((r.determinant() - 1.0).abs() < 1e-12);
        assert!(e.pose.translation.norm() < 1e-12);
        assert!(!e.degenerate);
        assert!((e.residual).abs() < 1e-12);
    }

    #[test]
    fn rotated_cuboid_recovers_axes() {
        // distinct extents so the principal axes are well defined
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let t = random_pose(&mut rng, 1.0);
            let cloud: Vec<_> = corners(0.3, 0.2, 0.1).iter().map(|p| t.transform_point(p)).collect();
            let e = fit_bounding_box(&cloud, &loose()).unwrap();
            let want = t.rotation.to_rotation_matrix().into_inner();
            let got = e.pose.rotation.to_rotation_matrix().into_inner();
            for k in 0..3 {
                assert!((got.column(k).dot(&want.column(k)).abs() - 1.0).abs() < 1e-9);
            }
            assert!((Vector3::from(e.extents) - Vector3::new(0.3, 0.2, 0.1)).norm() < 1e-9);
            assert!((e.pose.translation - t.translation).norm() < 1e-12);
        }
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let cloud: Vec<_> = (0..60).map(|i| Vector3::new(1.0, 2.0, 3.0) * (i as f64 * 0.001)).collect();
        let e = fit_bounding_box(&cloud, &BoxFitOptions::default()).unwrap();
        assert!(e.degenerate);
        let floored = e.extents.iter().filter(|&&x| x == 0.001).count();
        assert_eq!(floored, 2);
        let too_few = fit_bounding_box(&cloud[..10], &BoxFitOptions::default());
        assert_eq!(too_few, Err(PerceptionError::TooFewPoints { found: 10, required: 50 }));
    }

    #[test]
    fn prior_fixes_axis_and_spin() {
        // flat disk: the normal has the least variance, in-plane axes are arbitrary
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let disk: Vec<Vector3<f64>> = (0..400)
            .map(|_| {
                let r = 0.02 * rng.random::<f64>().sqrt();
                let a = rng.random_range(0.0..std::f64::consts::TAU);
                Vector3::new(r * a.cos(), r * a.sin(), 0.0)
            })
            .collect();
        let prior = AxisPrior {
            axis: Vector3::new(0.1, 0.0, -1.0),
            reference: Vector3::new(1.0, 1.0, 0.0),
        };
        let e = fit_bounding_box(&disk, &BoxFitOptions { prior: Some(prior), ..Default::default() }).unwrap();
        assert!((e.pose.axis(2) - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
        assert!((e.pose.axis(0) - Vector3::new(1.0, 1.0, 0.0).normalize()).norm() < 1e-12);
        assert!(e.degenerate);
    }

    #[test]
    fn equivariance_and_bounding() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let cloud: Vec<Vector3<f64>> = (0..200)
                .map(|_| Vector3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.05..0.05), rng.random_range(-0.02..0.02)))
                .collect();
            let prior = AxisPrior {
                axis: random_unit_vector(&mut rng),
                reference: random_unit_vector(&mut rng),
            };
            let opts = BoxFitOptions { prior: Some(prior), ..Default::default() };
            let base = fit_bounding_box(&cloud, &opts).unwrap();
            let t = random_pose(&mut rng, 1.0);
            let moved: Vec<_> = cloud.iter().map(|p| t.transform_point(p)).collect();
            let opts_t = BoxFitOptions { prior: Some(prior.transformed(&t)), ..Default::default() };
            let e = fit_bounding_box(&moved, &opts_t).unwrap();
            let (dp, dr) = t.compose(&base.pose).distance_to(&e.pose);
            assert!(dp < 1e-9 && dr < 1e-9, "{dp} {dr}");
            for k in 0..3 {
                assert!((e.extents[k] - base.extents[k]).abs() < 1e-9);
            }
            let inv = e.pose.inverse();
            for p in &moved {
                let c = inv.transform_point(p);
                for k in 0..3 {
                    assert!(c[k].abs() <= 0.5 * e.extents[k] + 1e-9);
                }
            }
        }
    }
}
