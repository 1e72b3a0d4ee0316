//! The annotation file: images with intrinsics (and optional poses), and
//! objects with a 2D prompt box and a ground-truth 3D box.
//!
//! ```json
//! {
//!   "images": [
//!     { "id": "img0", "width": 640, "height": 480,
//!       "intrinsics": { "fx": 500, "fy": 500, "cx": 320, "cy": 240 },
//!       "pose": [[1,0,0,0],[0,1,0,0],[0,0,1,0],[0,0,0,1]],
//!       "path": "images/img0.png" }
//!   ],
//!   "objects": [
//!     { "id": "obj0", "image_id": "img0", "category": "chair",
//!       "box2d": { "u2d": 320, "v2d": 240, "w2d": 90, "h2d": 120 },
//!       "depth": 4.0,
//!       "gt_box3d": { "centre": [0, 0, 4], "dims": [0.6, 0.9, 0.6],
//!                     "rotation": [[1,0,0],[0,1,0],[0,0,1]] } }
//!   ]
//! }
//! ```
//!
//! `pose` (camera-to-world, row-major 4×4), `path` and `depth` are optional.
//! `depth` overrides the prompt depth, which otherwise is the ground-truth
//! centre depth. Rotations are egocentric and row-major.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use nalgebra::{Matrix3, Matrix4, Point3};
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::geometry::{is_rotation, Box3D, BoxPrompt2D, CameraIntrinsics};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PinholeK {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageRecord {
    pub id: String,
    pub width: f64,
    pub height: f64,
    pub intrinsics: PinholeK,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<[[f64; 4]; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

impl ImageRecord {
    pub fn camera(&self) -> CameraIntrinsics {
        let k = &self.intrinsics;
        CameraIntrinsics {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            width: self.width,
            height: self.height,
        }
    }

    pub fn pose_matrix(&self) -> Option<Matrix4<f64>> {
        self.pose.map(|p| Matrix4::from_fn(|r, c| p[r][c]))
    }
}

/// The 2D part of a prompt; the depth comes from the object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Box2D {
    pub u2d: f64,
    pub v2d: f64,
    pub w2d: f64,
    pub h2d: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub clipped: bool,
}

/// A camera-frame box: centre (metres), dimensions `[w, h, l]` and the
/// egocentric rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseBox {
    pub centre: [f64; 3],
    pub dims: [f64; 3],
    pub rotation: [[f64; 3]; 3],
}

impl PoseBox {
    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|r, c| self.rotation[r][c])
    }

    pub fn to_box3d(&self, k: &CameraIntrinsics) -> Result<Box3D, EvalError> {
        let c = Point3::from(self.centre);
        Ok(Box3D::from_pose(&c, self.dims, &self.rotation_matrix(), k)?)
    }

    pub fn from_box3d(b: &Box3D, k: &CameraIntrinsics) -> Result<Self, EvalError> {
        let r = b.rotation_egocentric(k)?;
        let c = b.centre(k);
        Ok(Self {
            centre: [c.x, c.y, c.z],
            dims: b.dims(),
            rotation: std::array::from_fn(|i| std::array::from_fn(|j| r[(i, j)])),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectRecord {
    pub id: String,
    pub image_id: String,
    pub category: String,
    pub box2d: Box2D,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<f64>,
    pub gt_box3d: PoseBox,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationSet {
    pub images: Vec<ImageRecord>,
    pub objects: Vec<ObjectRecord>,
}

pub(crate) fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    out
}

fn schema(pointer: String, message: impl Into<String>) -> EvalError {
    EvalError::Schema {
        pointer,
        message: message.into(),
    }
}

impl AnnotationSet {
    /// Parses and validates annotation JSON.
    pub fn from_json(s: &str) -> Result<Self, EvalError> {
        let de = &mut serde_json::Deserializer::from_str(s);
        let set: AnnotationSet = serde_path_to_error::deserialize(de).map_err(|e| {
            let inner = e.inner();
            if inner.is_data() {
                schema(json_pointer(e.path()), inner.to_string())
            } else {
                EvalError::Parse(inner.to_string())
            }
        })?;
        set.validate()?;
        Ok(set)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("annotations serialise")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EvalError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n").map_err(|e| EvalError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let mut image_ids = HashSet::new();
        for (i, img) in self.images.iter().enumerate() {
            if !image_ids.insert(img.id.as_str()) {
                return Err(schema(
                    format!("/images/{i}/id"),
                    format!("duplicate image id `{}`", img.id),
                ));
            }
            img.camera()
                .validate()
                .map_err(|e| schema(format!("/images/{i}/intrinsics"), e.to_string()))?;
            if let Some(pose) = img.pose_matrix() {
                let r = pose.fixed_view::<3, 3>(0, 0).into_owned();
                let last_row_ok = pose[(3, 0)] == 0.0
                    && pose[(3, 1)] == 0.0
                    && pose[(3, 2)] == 0.0
                    && pose[(3, 3)] == 1.0;
                if !is_rotation(&r) || !last_row_ok || pose.iter().any(|x| !x.is_finite()) {
                    return Err(schema(
                        format!("/images/{i}/pose"),
                        "pose must be a rigid transform",
                    ));
                }
            }
        }
        let mut object_ids = HashSet::new();
        for (i, obj) in self.objects.iter().enumerate() {
            if !object_ids.insert((obj.image_id.as_str(), obj.id.as_str())) {
                return Err(schema(
                    format!("/objects/{i}/id"),
                    format!("duplicate object id `{}`", obj.id),
                ));
            }
            let img = self.image(&obj.image_id).ok_or_else(|| {
                schema(
                    format!("/objects/{i}/image_id"),
                    format!("unknown image `{}`", obj.image_id),
                )
            })?;
            let g = &obj.gt_box3d;
            if !is_rotation(&g.rotation_matrix()) {
                return Err(EvalError::InvalidRotation {
                    object_id: obj.id.clone(),
                });
            }
            if g.dims.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
                return Err(schema(
                    format!("/objects/{i}/gt_box3d/dims"),
                    "dimensions must be positive",
                ));
            }
            if !(g.centre[2] > 0.0) || g.centre.iter().any(|c| !c.is_finite()) {
                return Err(schema(
                    format!("/objects/{i}/gt_box3d/centre"),
                    "centre must lie in front of the camera",
                ));
            }
            if matches!(obj.depth, Some(d) if !(d > 0.0 && d.is_finite())) {
                return Err(schema(
                    format!("/objects/{i}/depth"),
                    "depth must be positive",
                ));
            }
            self.prompt(obj)
                .validate(&img.camera())
                .map_err(|e| schema(format!("/objects/{i}/box2d"), e.to_string()))?;
        }
        Ok(())
    }

    pub fn image(&self, id: &str) -> Option<&ImageRecord> {
        self.images.iter().find(|i| i.id == id)
    }

    pub fn object(&self, image_id: &str, object_id: &str) -> Option<&ObjectRecord> {
        self.objects
            .iter()
            .find(|o| o.image_id == image_id && o.id == object_id)
    }

    /// The object's prompt at its annotated depth.
    pub fn prompt(&self, obj: &ObjectRecord) -> BoxPrompt2D {
        let b = &obj.box2d;
        BoxPrompt2D {
            u2d: b.u2d,
            v2d: b.v2d,
            w2d: b.w2d,
            h2d: b.h2d,
            z: obj.depth.unwrap_or(obj.gt_box3d.centre[2]),
            clipped: b.clipped,
        }
    }

    pub fn camera_of(&self, obj: &ObjectRecord) -> Result<CameraIntrinsics, EvalError> {
        self.image(&obj.image_id)
            .map(|i| i.camera())
            .ok_or_else(|| EvalError::UnknownImage(obj.image_id.clone()))
    }

    pub fn gt_box(&self, obj: &ObjectRecord) -> Result<Box3D, EvalError> {
        obj.gt_box3d.to_box3d(&self.camera_of(obj)?)
    }

    /// Number of objects per category, sorted by name.
    pub fn category_counts(&self) -> Vec<(String, usize)> {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for o in &self.objects {
            *counts.entry(o.category.as_str()).or_default() += 1;
        }
        let mut v: Vec<_> = counts
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        v.sort();
        v
    }
}

/// Extent of a box along the camera z axis.
pub fn extent_z(b: &Box3D, k: &CameraIntrinsics) -> Result<f64, EvalError> {
    let c = b.corners(k)?;
    let (lo, hi) = c
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.z), hi.max(p.z))
        });
    Ok(hi - lo)
}
