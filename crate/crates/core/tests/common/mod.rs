#![allow(dead_code)]

use boxdiff::geometry::{Box3D, CameraIntrinsics};
use nalgebra::{Matrix3, Point3, Quaternion, UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn camera() -> CameraIntrinsics {
    CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640.0, 480.0).unwrap()
}

pub fn random_rotation<R: Rng>(rng: &mut R) -> Matrix3<f64> {
    let q = Quaternion::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    );
    UnitQuaternion::from_quaternion(q)
        .to_rotation_matrix()
        .into_inner()
}

pub fn pose_box(centre: [f64; 3], dims: [f64; 3], r: &Matrix3<f64>) -> Box3D {
    Box3D::from_pose(&Point3::from(centre), dims, r, &camera()).unwrap()
}

/// A random oriented box around `(0, 0, 6)`.
pub fn random_box<R: Rng>(rng: &mut R) -> Box3D {
    let centre = [
        rng.random_range(-0.5..0.5),
        rng.random_range(-0.5..0.5),
        rng.random_range(5.5..6.5),
    ];
    let dims = std::array::from_fn(|_| rng.random_range(0.3..2.0));
    pose_box(centre, dims, &random_rotation(rng))
}

/// A box near `a`, so that most pairs overlap.
pub fn nearby_box<R: Rng>(rng: &mut R, a: &Box3D) -> Box3D {
    let c = a.centre(&camera());
    let d = 0.5 * a.diagonal();
    let centre = [
        c.x + rng.random_range(-d..d),
        c.y + rng.random_range(-d..d),
        c.z + rng.random_range(-d..d),
    ];
    let dims = std::array::from_fn(|_| rng.random_range(0.3..2.0));
    pose_box(centre, dims, &random_rotation(rng))
}

/// Whether `p` lies inside `b`.
pub fn contains(b: &Box3D, p: &Point3<f64>) -> bool {
    let k = camera();
    let r = b.rotation_egocentric(&k).unwrap();
    let local: Vector3<f64> = r.transpose() * (p - b.centre(&k));
    let half = [0.5 * b.w, 0.5 * b.h, 0.5 * b.l];
    (0..3).all(|i| local[i].abs() <= half[i])
}

/// Monte-Carlo IoU: uniform points in `a`, counted inside `b`.
pub fn monte_carlo_iou<R: Rng>(a: &Box3D, b: &Box3D, samples: usize, rng: &mut R) -> f64 {
    let k = camera();
    let r = a.rotation_egocentric(&k).unwrap();
    let c = a.centre(&k);
    let hits = (0..samples)
        .filter(|_| {
            let local = Vector3::new(
                a.w * (rng.random::<f64>() - 0.5),
                a.h * (rng.random::<f64>() - 0.5),
                a.l * (rng.random::<f64>() - 0.5),
            );
            contains(b, &(c + r * local))
        })
        .count();
    let inter = a.volume() * hits as f64 / samples as f64;
    inter / (a.volume() + b.volume() - inter)
}

/// Minimum total cost over all permutations.
pub fn exhaustive_min_cost(cost: &[Vec<f64>]) -> f64 {
    fn go(cost: &[Vec<f64>], row: usize, used: &mut [bool], acc: f64, best: &mut f64) {
        if row == cost.len() {
            *best = best.min(acc);
            return;
        }
        for j in 0..cost.len() {
            if !used[j] {
                used[j] = true;
                go(cost, row + 1, used, acc + cost[row][j], best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(cost, 0, &mut vec![false; cost.len()], 0.0, &mut best);
    best
}
