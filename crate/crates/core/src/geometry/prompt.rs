use serde::{Deserialize, Serialize};

use super::{CameraIntrinsics, GeometryError};

/// A 2D box prompt (centre and size, pixels) with the object depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxPrompt2D {
    pub u2d: f64,
    pub v2d: f64,
    pub w2d: f64,
    pub h2d: f64,
    pub z: f64,
    /// Set when the box is allowed to extend past the image border.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub clipped: bool,
}

impl BoxPrompt2D {
    pub fn new(u2d: f64, v2d: f64, w2d: f64, h2d: f64, z: f64) -> Self {
        Self {
            u2d,
            v2d,
            w2d,
            h2d,
            z,
            clipped: false,
        }
    }

    pub fn validate(&self, k: &CameraIntrinsics) -> Result<(), GeometryError> {
        if [self.u2d, self.v2d, self.w2d, self.h2d, self.z]
            .iter()
            .any(|x| !x.is_finite())
        {
            return Err(GeometryError::InvalidPrompt("fields must be finite"));
        }
        if self.w2d <= 0.0 || self.h2d <= 0.0 {
            return Err(GeometryError::InvalidPrompt("box size must be positive"));
        }
        if self.z <= 0.0 {
            return Err(GeometryError::InvalidPrompt("depth must be positive"));
        }
        if !self.clipped {
            let (x0, x1) = (self.u2d - 0.5 * self.w2d, self.u2d + 0.5 * self.w2d);
            let (y0, y1) = (self.v2d - 0.5 * self.h2d, self.v2d + 0.5 * self.h2d);
            // Half-pixel slack for boxes snapped to the border.
            let slack = 0.5;
            if x0 < -slack || y0 < -slack || x1 > k.width + slack || y1 > k.height + slack {
                return Err(GeometryError::InvalidPrompt("box leaves the image"));
            }
        }
        Ok(())
    }

    /// Same prompt placed at another depth.
    pub fn at_depth(&self, z: f64) -> Self {
        Self { z, ..*self }
    }
}

/// The geometric part of the conditioning signal: 2D centre plus the box
/// size unprojected to metres at the object depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometricPrompt {
    pub u2d: f64,
    pub v2d: f64,
    pub w3d: f64,
    pub h3d: f64,
    pub z: f64,
}

/// `(w3d, h3d) = (w2d·z/fx, h2d·z/fy)`.
pub fn encode_prompt(b: &BoxPrompt2D, k: &CameraIntrinsics) -> GeometricPrompt {
    GeometricPrompt {
        u2d: b.u2d,
        v2d: b.v2d,
        w3d: b.w2d * b.z / k.fx,
        h3d: b.h2d * b.z / k.fy,
        z: b.z,
    }
}
