use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::PerceptionError;
use crate::screw::Pose;

/// Pinhole camera. Pixel `(u, v)` addresses the centre of column `u`, row `v`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Camera frame in the robot base frame (optical axis = +z).
    pub extrinsics: Pose,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    /// Distance along the optical axis.
    pub depth: f64,
}

impl Projection {
    /// Nearest pixel centre.
    pub fn pixel(&self) -> (usize, usize) {
        (self.u.round() as usize, self.v.round() as usize)
    }
}

impl CameraModel {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize, extrinsics: Pose) -> Result<Self, PerceptionError> {
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            extrinsics,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Centred principal point.
    pub fn centred(f: f64, width: usize, height: usize, extrinsics: Pose) -> Self {
        Self {
            fx: f,
            fy: f,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
            width,
            height,
            extrinsics,
        }
    }

    pub fn validate(&self) -> Result<(), PerceptionError> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx > 0.0
            && self.cy > 0.0
            && self.cx < self.width as f64
            && self.cy < self.height as f64
            && self.fx.is_finite()
            && self.fy.is_finite()
            && self.extrinsics.is_finite();
        if ok {
            Ok(())
        } else {
            Err(PerceptionError::InvalidCamera)
        }
    }

    pub fn in_bounds(&self, u: f64, v: f64) -> bool {
        u >= -0.5 && v >= -0.5 && u < self.width as f64 - 0.5 && v < self.height as f64 - 0.5
    }

    /// Camera-frame ray direction (z = 1) through pixel `(u, v)`.
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Base-frame point seen at pixel `(u, v)` with optical depth `z`.
    pub fn deproject(&self, u: f64, v: f64, z: f64) -> Vector3<f64> {
        self.extrinsics.transform_point(&(self.ray(u, v) * z))
    }
}

pub fn project_point(cam: &CameraModel, point: &Vector3<f64>) -> Result<Projection, PerceptionError> {
    let p = cam.extrinsics.inverse().transform_point(point);
    if p.z <= 0.0 {
        return Err(PerceptionError::BehindCamera { depth: p.z });
    }
    let u = cam.fx * p.x / p.z + cam.cx;
    let v = cam.fy * p.y / p.z + cam.cy;
    if !cam.in_bounds(u, v) {
        return Err(PerceptionError::OutOfBounds { u, v });
    }
    Ok(Projection { u, v, depth: p.z })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam() -> CameraModel {
        CameraModel::new(600.0, 600.0, 320.0, 240.0, 640, 480, Pose::identity()).unwrap()
    }

    #[test]
    fn optical_axis_hits_principal_point() {
        let p = project_point(&cam(), &Vector3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!((p.u, p.v, p.depth), (320.0, 240.0, 1.0));
    }

    #[test]
    fn out_of_bounds_is_reported_not_clamped() {
        let e = project_point(&cam(), &Vector3::new(1.0, 0.0, 1.0)).unwrap_err();
        assert_eq!(e, PerceptionError::OutOfBounds { u: 920.0, v: 240.0 });
        assert!(matches!(
            project_point(&cam(), &Vector3::new(0.0, 0.0, -1.0)),
            Err(PerceptionError::BehindCamera { .. })
        ));
    }

    #[test]
    fn rejects_bad_intrinsics() {
        assert!(CameraModel::new(600.0, 600.0, 700.0, 240.0, 640, 480, Pose::identity()).is_err());
        assert!(CameraModel::new(-1.0, 600.0, 320.0, 240.0, 640, 480, Pose::identity()).is_err());
    }

    #[test]
    fn deproject_then_project() {
        let c = CameraModel {
            extrinsics: Pose::from_axis_angle(&Vector3::new(1.0, 2.0, 0.5), 0.8).compose(&Pose::from_translation(0.1, 0.2, 0.3)),
            ..cam()
        };
        let p = c.deproject(100.0, 400.0, 0.7);
        let q = project_point(&c, &p).unwrap();
        assert!((q.u - 100.0).abs() < 1e-9 && (q.v - 400.0).abs() < 1e-9 && (q.depth - 0.7).abs() < 1e-12);
    }
}
