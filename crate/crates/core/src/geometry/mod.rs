//! Oriented boxes, rotations, and the pinhole camera.
//!
//! Every function here is pure and operates on `Copy` values.

mod boxes;
mod camera;
mod prompt;
mod rotation;

pub use boxes::{corners, Box3D, BOX_EDGES, CORNER_SIGNS};
pub use camera::{project, CameraIntrinsics, MIN_PROJECTION_DEPTH};
pub use prompt::{encode_prompt, BoxPrompt2D, GeometricPrompt};
pub use rotation::{
    allocentric_to_egocentric, egocentric_to_allocentric, is_rotation, matrix_to_rot6d,
    ray_rotation, rot6d_to_matrix, viewing_ray, Rot6D, ROTATION_TOLERANCE,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("degenerate 6D rotation: {0}")]
    DegenerateRotation(&'static str),
    #[error("matrix is not a proper rotation")]
    NotARotation,
    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(&'static str),
    #[error("invalid box: {0}")]
    InvalidBox(&'static str),
    #[error("invalid prompt: {0}")]
    InvalidPrompt(&'static str),
}
