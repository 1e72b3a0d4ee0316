//! Metrics checked against independent brute-force computations.

mod common;

use boxdiff::geometry::Box3D;
use boxdiff::metrics::{
    assignment_cost, chamfer_corners, compare_boxes, giou3d, hungarian_assign, iou3d, nhd,
    CornerSet, Enclosure,
};
use common::*;
use nalgebra::{Matrix3, Point3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cube(centre: [f64; 3], side: f64) -> Box3D {
    pose_box(centre, [side; 3], &Matrix3::identity())
}

fn corner_set(b: &Box3D) -> CornerSet {
    CornerSet::new(b.corners(&camera()).unwrap()).unwrap()
}

#[test]
fn hungarian_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in 1..=7 {
        for _ in 0..40 {
            let cost: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..n).map(|_| rng.random_range(0.0..10.0)).collect())
                .collect();
            let a = hungarian_assign(&cost);
            assert_eq!(a.total_cost, exhaustive_min_cost(&cost), "{cost:?}");
            assert_eq!(a.total_cost, assignment_cost(&cost, &a.permutation));
        }
    }
}

#[test]
fn hungarian_handles_negative_and_integer_costs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let cost: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..6).map(|_| rng.random_range(-3..4) as f64).collect())
            .collect();
        assert_eq!(
            hungarian_assign(&cost).total_cost,
            exhaustive_min_cost(&cost)
        );
    }
}

#[test]
fn iou_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let k = camera();
    for _ in 0..20 {
        let a = random_box(&mut rng);
        let b = nearby_box(&mut rng, &a);
        let exact = iou3d(&a, &b, &k).unwrap();
        let mc = monte_carlo_iou(&a, &b, 200_000, &mut rng);
        // Four standard errors of the hit fraction, mapped to IoU.
        assert!((exact - mc).abs() < 5e-3, "{exact} vs {mc}");
    }
}

#[test]
fn axis_aligned_cases_are_exact() {
    let k = camera();
    let a = cube([0.0, 0.0, 6.0], 1.0);
    let half = cube([0.5, 0.0, 6.0], 1.0);
    assert!((iou3d(&a, &half, &k).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    let inner = cube([0.0, 0.0, 6.0], 0.5);
    assert!((iou3d(&a, &inner, &k).unwrap() - 0.125).abs() < 1e-12);
    let corner = cube([0.5, 0.5, 6.5], 1.0);
    assert!((iou3d(&a, &corner, &k).unwrap() - 0.125 / 1.875).abs() < 1e-12);
    let apart = cube([3.0, 0.0, 6.0], 1.0);
    assert_eq!(iou3d(&a, &apart, &k).unwrap(), 0.0);
    // Hull of two unit cubes with a unit gap is a 3 × 1 × 1 slab.
    let gap = cube([2.0, 0.0, 6.0], 1.0);
    let g = giou3d(&a, &gap, &k, Enclosure::ConvexHull).unwrap();
    assert!((g - (0.0 - 1.0 / 3.0)).abs() < 1e-12);
}

#[test]
fn nhd_matches_permutation_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let k = camera();
    for _ in 0..5 {
        let a = random_box(&mut rng);
        let b = nearby_box(&mut rng, &a);
        let (pa, pb) = (a.corners(&k).unwrap(), b.corners(&k).unwrap());
        let cost: Vec<Vec<f64>> = (0..8)
            .map(|i| (0..8).map(|j| (pa[i] - pb[j]).norm()).collect())
            .collect();
        let want = exhaustive_min_cost(&cost) / b.diagonal();
        let got = nhd(&corner_set(&a), &corner_set(&b), b.diagonal()).unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
}

#[test]
fn chamfer_matches_definition() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let k = camera();
    let l1 = |p: &Point3<f64>, q: &Point3<f64>| (p - q).abs().sum();
    for _ in 0..20 {
        let a = random_box(&mut rng);
        let b = nearby_box(&mut rng, &a);
        let (pa, pb) = (a.corners(&k).unwrap(), b.corners(&k).unwrap());
        let one_way = |x: &[Point3<f64>; 8], y: &[Point3<f64>; 8]| -> f64 {
            x.iter()
                .map(|p| y.iter().map(|q| l1(p, q)).fold(f64::INFINITY, f64::min))
                .sum()
        };
        let want = one_way(&pa, &pb) + one_way(&pb, &pa);
        let got = chamfer_corners(&corner_set(&a), &corner_set(&b));
        assert!((got - want).abs() < 1e-12);
    }
}

#[test]
fn compare_boxes_agrees_with_each_metric() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let k = camera();
    let a = random_box(&mut rng);
    let b = nearby_box(&mut rng, &a);
    let r = compare_boxes(&a, &b, &k).unwrap();
    assert_eq!(r.iou3d, iou3d(&a, &b, &k).unwrap());
    assert_eq!(r.giou3d, giou3d(&a, &b, &k, Enclosure::ConvexHull).unwrap());
    assert_eq!(
        r.nhd,
        nhd(&corner_set(&a), &corner_set(&b), b.diagonal()).unwrap()
    );
}
