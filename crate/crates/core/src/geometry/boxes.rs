use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::rotation::{allocentric_to_egocentric, egocentric_to_allocentric, rot6d_to_matrix};
use super::{CameraIntrinsics, GeometryError, Rot6D};

/// Sign pattern of each corner, indexed by the 3-bit number `zyx`
/// (bit 0 selects the x sign, bit 1 y, bit 2 z).
pub const CORNER_SIGNS: [[f64; 3]; 8] = [
    [-1.0, -1.0, -1.0],
    [1.0, -1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
    [1.0, -1.0, 1.0],
    [-1.0, 1.0, 1.0],
    [1.0, 1.0, 1.0],
];

/// The 12 edges of a box as pairs of indices into the corner order.
pub const BOX_EDGES: [[usize; 2]; 12] = [
    [0, 1],
    [2, 3],
    [4, 5],
    [6, 7],
    [0, 2],
    [1, 3],
    [4, 6],
    [5, 7],
    [0, 4],
    [1, 5],
    [2, 6],
    [3, 7],
];

/// An oriented 3D box.
///
/// The centre is stored as its projection `(u, v)` plus depth `z`, and the
/// rotation `p` is allocentric: relative to the viewing ray through `(u, v)`.
/// Dimensions `w`, `h`, `l` extend along the box's local x, y and z axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    pub u: f64,
    pub v: f64,
    pub z: f64,
    pub w: f64,
    pub h: f64,
    pub l: f64,
    pub p: Rot6D,
}

impl Box3D {
    pub fn new(
        u: f64,
        v: f64,
        z: f64,
        w: f64,
        h: f64,
        l: f64,
        p: Rot6D,
    ) -> Result<Self, GeometryError> {
        let b = Self {
            u,
            v,
            z,
            w,
            h,
            l,
            p,
        };
        b.validate()?;
        Ok(b)
    }

    /// Builds a box from a camera-frame pose: centre, dimensions and the
    /// egocentric rotation matrix.
    pub fn from_pose(
        centre: &Point3<f64>,
        dims: [f64; 3],
        r_ego: &Matrix3<f64>,
        k: &CameraIntrinsics,
    ) -> Result<Self, GeometryError> {
        if !(centre.z > 0.0) {
            return Err(GeometryError::InvalidBox("centre depth must be positive"));
        }
        let u = k.fx * centre.x / centre.z + k.cx;
        let v = k.fy * centre.y / centre.z + k.cy;
        let p = egocentric_to_allocentric(r_ego, u, v, k)?;
        Self::new(u, v, centre.z, dims[0], dims[1], dims[2], p)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let scalars = [self.u, self.v, self.z, self.w, self.h, self.l];
        if scalars
            .iter()
            .chain(self.p.to_array().iter())
            .any(|x| !x.is_finite())
        {
            return Err(GeometryError::InvalidBox("parameters must be finite"));
        }
        if self.z <= 0.0 {
            return Err(GeometryError::InvalidBox("depth must be positive"));
        }
        if self.w <= 0.0 || self.h <= 0.0 || self.l <= 0.0 {
            return Err(GeometryError::InvalidBox("dimensions must be positive"));
        }
        rot6d_to_matrix(&self.p)?;
        Ok(())
    }

    pub fn dims(&self) -> [f64; 3] {
        [self.w, self.h, self.l]
    }

    pub fn volume(&self) -> f64 {
        self.w * self.h * self.l
    }

    /// Length of the space diagonal.
    pub fn diagonal(&self) -> f64 {
        (self.w * self.w + self.h * self.h + self.l * self.l).sqrt()
    }

    /// Centre in the camera frame, metres.
    pub fn centre(&self, k: &CameraIntrinsics) -> Point3<f64> {
        k.unproject(self.u, self.v, self.z)
    }

    pub fn rotation_egocentric(&self, k: &CameraIntrinsics) -> Result<Matrix3<f64>, GeometryError> {
        allocentric_to_egocentric(&self.p, self.u, self.v, k)
    }

    /// The 8 corners in [`CORNER_SIGNS`] order.
    pub fn corners(&self, k: &CameraIntrinsics) -> Result<[Point3<f64>; 8], GeometryError> {
        corners(self, k)
    }

    /// Same box with centre, dimensions and depth scaled by `k` about the
    /// camera origin. The projected centre and rotation are unchanged.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            z: self.z * s,
            w: self.w * s,
            h: self.h * s,
            l: self.l * s,
            ..*self
        }
    }
}

pub fn corners(b: &Box3D, k: &CameraIntrinsics) -> Result<[Point3<f64>; 8], GeometryError> {
    let centre = b.centre(k);
    let r = b.rotation_egocentric(k)?;
    let half = Vector3::new(b.w, b.h, b.l) * 0.5;
    Ok(
        CORNER_SIGNS
            .map(|s| centre + r * Vector3::new(s[0] * half.x, s[1] * half.y, s[2] * half.z)),
    )
}
