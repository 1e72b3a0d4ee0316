//! Invariants of the geometry, metrics and normalisation layers.

mod common;

use boxdiff::diffusion::{denormalise, normalise, NormalisationSpec};
use boxdiff::geometry::{
    allocentric_to_egocentric, egocentric_to_allocentric, is_rotation, matrix_to_rot6d,
    rot6d_to_matrix, Box3D,
};
use boxdiff::metrics::{
    assignment_cost, compare_boxes, giou3d, hungarian_assign, iou3d, Enclosure,
};
use common::*;
use nalgebra::Matrix3;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rotation() -> impl Strategy<Value = Matrix3<f64>> {
    any::<u64>().prop_map(|s| random_rotation(&mut ChaCha8Rng::seed_from_u64(s)))
}

fn box_pair() -> impl Strategy<Value = (Box3D, Box3D)> {
    any::<u64>().prop_map(|s| {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let a = random_box(&mut rng);
        let b = nearby_box(&mut rng, &a);
        (a, b)
    })
}

fn max_abs_diff(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    (a - b).abs().max()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn rot6d_round_trip(r in rotation()) {
        let p = matrix_to_rot6d(&r).unwrap();
        let back = rot6d_to_matrix(&p).unwrap();
        prop_assert!(max_abs_diff(&r, &back) < 1e-12);
        prop_assert!(is_rotation(&back));
    }

    #[test]
    fn allocentric_round_trip(r in rotation(), u in 0.0..640.0f64, v in 0.0..480.0f64) {
        let k = camera();
        let p = egocentric_to_allocentric(&r, u, v, &k).unwrap();
        let back = allocentric_to_egocentric(&p, u, v, &k).unwrap();
        prop_assert!(max_abs_diff(&r, &back) < 1e-12);
    }

    #[test]
    fn overlap_metrics_are_bounded_and_symmetric((a, b) in box_pair()) {
        let k = camera();
        let ab = iou3d(&a, &b, &k).unwrap();
        let ba = iou3d(&b, &a, &k).unwrap();
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((ab - ba).abs() < 1e-12);
        for e in [Enclosure::ConvexHull, Enclosure::AxisAligned] {
            let g = giou3d(&a, &b, &k, e).unwrap();
            prop_assert!(g <= ab + 1e-12 && g >= -1.0);
        }
        // The hull is never larger than the axis-aligned enclosure.
        let hull = giou3d(&a, &b, &k, Enclosure::ConvexHull).unwrap();
        let aabb = giou3d(&a, &b, &k, Enclosure::AxisAligned).unwrap();
        prop_assert!(hull >= aabb - 1e-12);
    }

    #[test]
    fn identical_boxes_are_perfect((a, _) in box_pair()) {
        let r = compare_boxes(&a, &a, &camera()).unwrap();
        prop_assert_eq!((r.iou3d, r.giou3d, r.nhd, r.chamfer), (1.0, 1.0, 0.0, 0.0));
    }

    #[test]
    fn joint_scaling_leaves_metrics_unchanged((a, b) in box_pair(), s in 0.25..4.0f64) {
        let k = camera();
        let r = compare_boxes(&a, &b, &k).unwrap();
        let q = compare_boxes(&a.scaled(s), &b.scaled(s), &k).unwrap();
        prop_assert!((r.iou3d - q.iou3d).abs() < 1e-9);
        prop_assert!((r.giou3d - q.giou3d).abs() < 1e-9);
        prop_assert!((r.nhd - q.nhd).abs() < 1e-9);
        prop_assert!((r.chamfer * s - q.chamfer).abs() < 1e-9 * s.max(1.0));
    }

    #[test]
    fn nhd_is_nonnegative((a, b) in box_pair()) {
        prop_assert!(compare_boxes(&a, &b, &camera()).unwrap().nhd >= 0.0);
    }

    #[test]
    fn normalisation_round_trip((a, _) in box_pair(), scale in 0.5..4.0f64) {
        let spec = NormalisationSpec::new(640.0, 480.0, 15.0).unwrap();
        let x = normalise(&a, &spec, scale).unwrap();
        prop_assert!(x.0.iter().all(|c| c.abs() <= scale + 1e-12));
        let back = denormalise(&x, a.z, &spec, scale).unwrap();
        let (pa, pb) = (a.p.to_array(), back.p.to_array());
        for (p, q) in [
            (a.u, back.u), (a.v, back.v), (a.w, back.w), (a.h, back.h), (a.l, back.l),
        ] {
            prop_assert!((p - q).abs() < 1e-9);
        }
        for i in 0..6 {
            prop_assert!((pa[i] - pb[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn hungarian_beats_every_sampled_permutation(
        cost in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 6), 6),
        perm in Just((0..6).collect::<Vec<usize>>()).prop_shuffle(),
    ) {
        let a = hungarian_assign(&cost);
        prop_assert!(a.total_cost <= assignment_cost(&cost, &perm) + 1e-12);
        let mut seen = a.permutation.clone();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..6).collect::<Vec<_>>());
    }
}
