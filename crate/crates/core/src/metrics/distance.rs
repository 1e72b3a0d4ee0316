use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use super::hungarian::hungarian_assign;
use super::MetricError;

/// Eight box corners in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CornerSet {
    points: [Point3<f64>; 8],
}

/// Corner index pairs joined by the four space diagonals.
const SPACE_DIAGONALS: [(usize, usize); 4] = [(0, 7), (1, 6), (2, 5), (3, 4)];

impl CornerSet {
    /// Accepts the corners of a (possibly degenerate) parallelepiped: all
    /// four space diagonals must share a midpoint.
    pub fn new(points: [Point3<f64>; 8]) -> Result<Self, MetricError> {
        if points.iter().any(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(MetricError::NotAParallelepiped);
        }
        let scale = points
            .iter()
            .map(|p| p.coords.amax())
            .fold(1.0f64, f64::max);
        let (a, b) = SPACE_DIAGONALS[0];
        let mid = nalgebra::center(&points[a], &points[b]);
        for &(i, j) in &SPACE_DIAGONALS[1..] {
            if (nalgebra::center(&points[i], &points[j]) - mid).norm() > 1e-6 * scale {
                return Err(MetricError::NotAParallelepiped);
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point3<f64>; 8] {
        &self.points
    }

    /// Corner sets are equal as sets (order-independent) within `tol`.
    pub fn same_set(&self, other: &CornerSet, tol: f64) -> bool {
        self.points
            .iter()
            .all(|p| other.points.iter().any(|q| (p - q).norm() <= tol))
            && other
                .points
                .iter()
                .all(|q| self.points.iter().any(|p| (p - q).norm() <= tol))
    }
}

/// Normalised Hungarian distance: the total Euclidean distance between
/// optimally matched corners, divided by the ground-truth space diagonal.
pub fn nhd(pred: &CornerSet, gt: &CornerSet, gt_diag: f64) -> Result<f64, MetricError> {
    if !(gt_diag > 0.0) {
        return Err(MetricError::ZeroDiagonal);
    }
    let cost: [[f64; 8]; 8] =
        std::array::from_fn(|i| std::array::from_fn(|j| (pred.points[i] - gt.points[j]).norm()));
    Ok(hungarian_assign(&cost).total_cost / gt_diag)
}

fn l1(a: &Point3<f64>, b: &Point3<f64>) -> f64 {
    (a - b).abs().sum()
}

fn nearest_sum(from: &[Point3<f64>; 8], to: &[Point3<f64>; 8]) -> f64 {
    from.iter()
        .map(|a| to.iter().map(|b| l1(a, b)).fold(f64::INFINITY, f64::min))
        .sum()
}

/// Bidirectional sum of nearest-corner L1 distances.
pub fn chamfer_corners(pred: &CornerSet, gt: &CornerSet) -> f64 {
    nearest_sum(&pred.points, &gt.points) + nearest_sum(&gt.points, &pred.points)
}
