use nalgebra::{Point2, Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::GeometryError;

/// Points closer than this to the image plane cannot be projected.
pub const MIN_PROJECTION_DEPTH: f64 = 1e-6;

/// Pinhole intrinsics plus image size, all in pixels.
///
/// Camera frame: x right, y down, z forward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: f64,
        height: f64,
    ) -> Result<Self, GeometryError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let all_finite = [self.fx, self.fy, self.cx, self.cy, self.width, self.height]
            .iter()
            .all(|x| x.is_finite());
        if !all_finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(GeometryError::InvalidIntrinsics(
                "focal lengths must be positive",
            ));
        }
        if self.width <= 0.0 || self.height <= 0.0 {
            return Err(GeometryError::InvalidIntrinsics(
                "image size must be positive",
            ));
        }
        Ok(())
    }

    pub fn project(&self, point: &Point3<f64>) -> Result<Point2<f64>, GeometryError> {
        project(point, self)
    }

    /// Back-projects pixel `(u, v)` to the point at depth `z`.
    pub fn unproject(&self, u: f64, v: f64, z: f64) -> Point3<f64> {
        Point3::new((u - self.cx) * z / self.fx, (v - self.cy) * z / self.fy, z)
    }

    /// Unnormalised direction `((u - cx)/fx, (v - cy)/fy, 1)`.
    pub fn pixel_direction(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }
}

pub fn project(point: &Point3<f64>, k: &CameraIntrinsics) -> Result<Point2<f64>, GeometryError> {
    if !(point.z > MIN_PROJECTION_DEPTH) {
        return Err(GeometryError::BehindCamera { z: point.z });
    }
    Ok(Point2::new(
        k.fx * point.x / point.z + k.cx,
        k.fy * point.y / point.z + k.cy,
    ))
}
