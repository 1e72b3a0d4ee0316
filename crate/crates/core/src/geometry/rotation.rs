//! Continuous 6D rotation representation and the allocentric/egocentric
//! conversion used by [`Box3D`](super::Box3D).

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{CameraIntrinsics, GeometryError};

/// Minimum norm accepted for the first column, and minimum sine of the angle
/// between the two columns.
const DEGENERACY_EPS: f64 = 1e-12;

/// Tolerance used when checking that a matrix is a proper rotation.
pub const ROTATION_TOLERANCE: f64 = 1e-6;

/// The first two columns of a rotation matrix, before orthonormalisation.
///
/// Any pair of non-parallel vectors is a valid representation; Gram–Schmidt
/// in [`Rot6D::to_matrix`] recovers the rotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rot6D {
    pub a1: Vector3<f64>,
    pub a2: Vector3<f64>,
}

impl Rot6D {
    pub const IDENTITY: Rot6D = Rot6D {
        a1: Vector3::new(1.0, 0.0, 0.0),
        a2: Vector3::new(0.0, 1.0, 0.0),
    };

    pub fn new(a1: Vector3<f64>, a2: Vector3<f64>) -> Self {
        Self { a1, a2 }
    }

    /// Layout is `[a1.x, a1.y, a1.z, a2.x, a2.y, a2.z]`.
    pub fn from_array(p: [f64; 6]) -> Self {
        Self {
            a1: Vector3::new(p[0], p[1], p[2]),
            a2: Vector3::new(p[3], p[4], p[5]),
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.a1.x, self.a1.y, self.a1.z, self.a2.x, self.a2.y, self.a2.z,
        ]
    }

    /// Gram–Schmidt: normalise `a1`, orthogonalise `a2` against it, and take
    /// the cross product as the third column.
    pub fn to_matrix(&self) -> Result<Matrix3<f64>, GeometryError> {
        rot6d_to_matrix(self)
    }

    pub fn from_matrix(r: &Matrix3<f64>) -> Result<Self, GeometryError> {
        matrix_to_rot6d(r)
    }
}

impl Default for Rot6D {
    fn default() -> Self {
        Self::IDENTITY
    }
}

pub fn rot6d_to_matrix(p: &Rot6D) -> Result<Matrix3<f64>, GeometryError> {
    let n1 = p.a1.norm();
    if !n1.is_finite() || n1 <= DEGENERACY_EPS {
        return Err(GeometryError::DegenerateRotation(
            "first column has zero length",
        ));
    }
    let b1 = p.a1 / n1;
    let n2 = p.a2.norm();
    if !n2.is_finite() || b1.cross(&p.a2).norm() <= DEGENERACY_EPS * n2.max(1.0) {
        return Err(GeometryError::DegenerateRotation("columns are parallel"));
    }
    let ortho = p.a2 - b1 * b1.dot(&p.a2);
    let b2 = ortho / ortho.norm();
    let b3 = b1.cross(&b2);
    Ok(Matrix3::from_columns(&[b1, b2, b3]))
}

/// Checks `RᵀR = I` and `det R = +1` within [`ROTATION_TOLERANCE`].
pub fn is_rotation(r: &Matrix3<f64>) -> bool {
    if r.iter().any(|x| !x.is_finite()) {
        return false;
    }
    let gram = r.transpose() * r - Matrix3::identity();
    gram.amax() <= ROTATION_TOLERANCE && (r.determinant() - 1.0).abs() <= ROTATION_TOLERANCE
}

pub fn matrix_to_rot6d(r: &Matrix3<f64>) -> Result<Rot6D, GeometryError> {
    if !is_rotation(r) {
        return Err(GeometryError::NotARotation);
    }
    Ok(Rot6D {
        a1: r.column(0).into_owned(),
        a2: r.column(1).into_owned(),
    })
}

/// Unit viewing ray through pixel `(u, v)`.
pub fn viewing_ray(u: f64, v: f64, k: &CameraIntrinsics) -> Vector3<f64> {
    Vector3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0).normalize()
}

/// Minimal rotation taking the optical axis `(0, 0, 1)` onto the viewing ray
/// through `(u, v)`.
///
/// Rodrigues' formula in its trig-free form: with `v = ẑ × r` and `c = ẑ · r`,
/// `R = I + [v]ₓ + [v]ₓ² / (1 + c)`. Rays always have positive depth, so
/// `c > 0`.
pub fn ray_rotation(u: f64, v: f64, k: &CameraIntrinsics) -> Matrix3<f64> {
    let r = viewing_ray(u, v, k);
    let axis = Vector3::z().cross(&r);
    let c = r.z;
    let skew = axis.cross_matrix();
    Matrix3::identity() + skew + skew * skew / (1.0 + c)
}

pub fn allocentric_to_egocentric(
    p: &Rot6D,
    u: f64,
    v: f64,
    k: &CameraIntrinsics,
) -> Result<Matrix3<f64>, GeometryError> {
    Ok(ray_rotation(u, v, k) * rot6d_to_matrix(p)?)
}

/// Inverse of [`allocentric_to_egocentric`].
pub fn egocentric_to_allocentric(
    r_ego: &Matrix3<f64>,
    u: f64,
    v: f64,
    k: &CameraIntrinsics,
) -> Result<Rot6D, GeometryError> {
    matrix_to_rot6d(&(ray_rotation(u, v, k).transpose() * r_ego))
}
