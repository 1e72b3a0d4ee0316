//! Box-comparison metrics: normalised Hungarian distance (NHD), corner
//! Chamfer distance, exact oriented IoU and generalised IoU.
//!
//! NHD matches corners one-to-one with the Hungarian algorithm and sums L2
//! distances; the Chamfer distance matches each corner to its nearest
//! counterpart and sums L1 distances. The two are deliberately different:
//! NHD is an evaluation metric, Chamfer is the training loss.

mod distance;
mod hungarian;
mod iou;
pub mod polytope;

pub use distance::{chamfer_corners, nhd, CornerSet};
pub use hungarian::{assignment_cost, hungarian_assign, Assignment};
pub use iou::{compare_boxes, compare_boxes_with, giou3d, iou3d, Enclosure, MetricReport};

use crate::geometry::GeometryError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("ground-truth diagonal must be positive")]
    ZeroDiagonal,
    #[error("corners do not form a parallelepiped")]
    NotAParallelepiped,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
