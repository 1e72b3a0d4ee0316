use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::distance::{chamfer_corners, nhd, CornerSet};
use super::polytope::{convex_hull, HalfSpace, Polytope};
use super::MetricError;
use crate::geometry::{Box3D, CameraIntrinsics};

/// Boxes with less volume than this are treated as degenerate.
const MIN_VOLUME: f64 = 1e-15;

/// The enclosing set used by [`giou3d`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Enclosure {
    /// Convex hull of both boxes' 16 corners.
    #[default]
    ConvexHull,
    /// Axis-aligned (camera frame) bounding box of the 16 corners.
    AxisAligned,
}

struct Solid {
    corners: [Point3<f64>; 8],
    planes: [HalfSpace; 6],
    volume: f64,
}

impl Solid {
    fn new(b: &Box3D, k: &CameraIntrinsics) -> Result<Self, MetricError> {
        let corners = b.corners(k)?;
        let centre = b.centre(k);
        let r = b.rotation_egocentric(k)?;
        let half = [b.w * 0.5, b.h * 0.5, b.l * 0.5];
        let planes = std::array::from_fn(|i| {
            let axis: Vector3<f64> = r.column(i / 2).into_owned();
            let normal = if i % 2 == 0 { axis } else { -axis };
            HalfSpace {
                normal,
                offset: normal.dot(&centre.coords) + half[i / 2],
            }
        });
        Ok(Self {
            corners,
            planes,
            volume: b.volume(),
        })
    }
}

fn intersection_volume(a: &Solid, b: &Solid) -> f64 {
    let mut poly = Polytope::from_box_corners(&a.corners);
    for plane in &b.planes {
        poly = poly.clip(plane);
        if poly.is_empty() {
            return 0.0;
        }
    }
    poly.volume().clamp(0.0, a.volume.min(b.volume))
}

fn iou_of(a: &Solid, b: &Solid, identical: bool) -> (f64, f64) {
    if identical {
        return (1.0, a.volume);
    }
    if a.volume < MIN_VOLUME || b.volume < MIN_VOLUME {
        return (0.0, a.volume + b.volume);
    }
    let inter = intersection_volume(a, b);
    let union = a.volume + b.volume - inter;
    ((inter / union).clamp(0.0, 1.0), union)
}

/// Exact intersection-over-union of two oriented boxes.
pub fn iou3d(a: &Box3D, b: &Box3D, k: &CameraIntrinsics) -> Result<f64, MetricError> {
    let (sa, sb) = (Solid::new(a, k)?, Solid::new(b, k)?);
    Ok(iou_of(&sa, &sb, a == b).0)
}

fn enclosure_volume(a: &Solid, b: &Solid, enclosure: Enclosure) -> f64 {
    let pts: Vec<Point3<f64>> = a.corners.iter().chain(b.corners.iter()).copied().collect();
    match enclosure {
        Enclosure::ConvexHull => convex_hull(&pts).volume(),
        Enclosure::AxisAligned => {
            let mut lo = pts[0].coords;
            let mut hi = pts[0].coords;
            for p in &pts[1..] {
                lo = lo.inf(&p.coords);
                hi = hi.sup(&p.coords);
            }
            (hi - lo).product()
        }
    }
}

fn giou_of(a: &Solid, b: &Solid, identical: bool, enclosure: Enclosure) -> (f64, f64) {
    let (iou, union) = iou_of(a, b, identical);
    if identical {
        return (iou, 1.0);
    }
    let hull = enclosure_volume(a, b, enclosure);
    if hull < MIN_VOLUME {
        return (iou, iou);
    }
    (iou, iou - (hull - union).max(0.0) / hull)
}

/// Generalised IoU: `IoU − |C \ (A ∪ B)| / |C|` for the enclosing set `C`.
pub fn giou3d(
    a: &Box3D,
    b: &Box3D,
    k: &CameraIntrinsics,
    enclosure: Enclosure,
) -> Result<f64, MetricError> {
    let (sa, sb) = (Solid::new(a, k)?, Solid::new(b, k)?);
    Ok(giou_of(&sa, &sb, a == b, enclosure).1)
}

/// All four comparison metrics for one predicted box against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub iou3d: f64,
    pub giou3d: f64,
    pub nhd: f64,
    /// Metres.
    pub chamfer: f64,
}

pub fn compare_boxes(
    pred: &Box3D,
    gt: &Box3D,
    k: &CameraIntrinsics,
) -> Result<MetricReport, MetricError> {
    compare_boxes_with(pred, gt, k, Enclosure::ConvexHull)
}

pub fn compare_boxes_with(
    pred: &Box3D,
    gt: &Box3D,
    k: &CameraIntrinsics,
    enclosure: Enclosure,
) -> Result<MetricReport, MetricError> {
    let (sp, sg) = (Solid::new(pred, k)?, Solid::new(gt, k)?);
    let (iou3d, giou3d) = giou_of(&sp, &sg, pred == gt, enclosure);
    let cp = CornerSet::new(sp.corners)?;
    let cg = CornerSet::new(sg.corners)?;
    Ok(MetricReport {
        iou3d,
        giou3d,
        nhd: nhd(&cp, &cg, gt.diagonal())?,
        chamfer: chamfer_corners(&cp, &cg),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rot6D;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 0.0, 0.0, 640.0, 480.0).unwrap()
    }

    /// Axis-aligned (egocentric) box centred at `c` in the camera frame.
    fn aligned(c: [f64; 3], d: [f64; 3]) -> Box3D {
        let k = k();
        Box3D::from_pose(&Point3::from(c), d, &nalgebra::Matrix3::identity(), &k).unwrap()
    }

    #[test]
    fn identical_boxes() {
        let a = aligned([0.3, -0.2, 5.0], [1.0, 2.0, 0.5]);
        assert_eq!(iou3d(&a, &a, &k()).unwrap(), 1.0);
        assert_eq!(giou3d(&a, &a, &k(), Enclosure::ConvexHull).unwrap(), 1.0);
        let r = compare_boxes(&a, &a, &k()).unwrap();
        assert_eq!((r.iou3d, r.giou3d, r.nhd, r.chamfer), (1.0, 1.0, 0.0, 0.0));
    }

    #[test]
    fn half_offset_unit_cubes() {
        let a = aligned([0.0, 0.0, 5.0], [1.0; 3]);
        let b = aligned([0.5, 0.0, 5.0], [1.0; 3]);
        let iou = iou3d(&a, &b, &k()).unwrap();
        assert!((iou - 1.0 / 3.0).abs() < 1e-12, "{iou}");
    }

    #[test]
    fn separated_cubes_giou() {
        let a = aligned([0.5, 0.5, 5.5], [1.0; 3]);
        let b = aligned([2.5, 0.5, 5.5], [1.0; 3]);
        assert_eq!(iou3d(&a, &b, &k()).unwrap(), 0.0);
        let g = giou3d(&a, &b, &k(), Enclosure::ConvexHull).unwrap();
        assert!((g + 1.0 / 3.0).abs() < 1e-12, "{g}");
        let g_axis = giou3d(&a, &b, &k(), Enclosure::AxisAligned).unwrap();
        assert!((g_axis + 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn nested_concentric_cubes() {
        let outer = aligned([0.0, 0.0, 5.0], [1.0; 3]);
        let inner = aligned([0.0, 0.0, 5.0], [0.5; 3]);
        let iou = iou3d(&inner, &outer, &k()).unwrap();
        let giou = giou3d(&inner, &outer, &k(), Enclosure::ConvexHull).unwrap();
        assert!((iou - 0.125).abs() < 1e-12);
        assert!((giou - 0.125).abs() < 1e-12);
    }

    #[test]
    fn touching_faces_give_zero() {
        let a = aligned([0.0, 0.0, 5.0], [1.0; 3]);
        let b = aligned([1.0, 0.0, 5.0], [1.0; 3]);
        let iou = iou3d(&a, &b, &k()).unwrap();
        assert!(iou.abs() < 1e-12 && !iou.is_nan());
    }

    #[test]
    fn degenerate_rotation_is_an_error() {
        let mut a = aligned([0.0, 0.0, 5.0], [1.0; 3]);
        a.p = Rot6D::from_array([0.0; 6]);
        assert!(matches!(iou3d(&a, &a, &k()), Err(MetricError::Geometry(_))));
    }
}
