//! Sampler identities: the forward process, its terminal distribution and
//! exact recovery with an oracle denoiser.

mod common;

use boxdiff::diffusion::{
    denormalise, forward_noise, normalise, standard_normal_state, BoxState, DiffusionSchedule,
    NormalisationSpec, ScheduleKind, STATE_DIM,
};
use boxdiff::eval::{extent_z, AnnotationSet, DiffusionPipeline, ObjectQuery, Predictor};
use boxdiff::geometry::Box3D;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/desk10.json");

fn spec() -> NormalisationSpec {
    NormalisationSpec::new(640.0, 480.0, 15.0).unwrap()
}

/// Largest absolute difference over every box parameter.
fn box_diff(a: &Box3D, b: &Box3D) -> f64 {
    let s = [
        a.u - b.u,
        a.v - b.v,
        a.z - b.z,
        a.w - b.w,
        a.h - b.h,
        a.l - b.l,
    ];
    let (pa, pb) = (a.p.to_array(), b.p.to_array());
    s.iter()
        .copied()
        .chain((0..6).map(|i| pa[i] - pb[i]))
        .map(f64::abs)
        .fold(0.0, f64::max)
}

#[test]
fn normalisation_round_trip_on_random_boxes() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let sched = DiffusionSchedule::default();
    for _ in 0..1000 {
        let b = common::random_box(&mut rng);
        let x = normalise(&b, &spec(), sched.scale()).unwrap();
        let back = denormalise(&x, b.z, &spec(), sched.scale()).unwrap();
        assert!(box_diff(&b, &back) < 1e-9);
    }
}

#[test]
fn forward_noise_at_zero_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for kind in [ScheduleKind::Cosine, ScheduleKind::Linear] {
        let sched = DiffusionSchedule::new(kind, 1000, 2.0).unwrap();
        assert_eq!(sched.alpha_cumprod(0), 1.0);
        let x0 = BoxState(std::array::from_fn(|i| i as f64 * 0.3 - 1.5));
        let eps = standard_normal_state(&mut rng);
        assert_eq!(forward_noise(&x0, 0, &eps, &sched), x0);
    }
}

#[test]
fn alpha_cumprod_decreases_to_near_zero() {
    let sched = DiffusionSchedule::default();
    let a = sched.alpha_cumprods();
    assert!(a.windows(2).all(|w| w[1] < w[0]));
    assert!(a[sched.steps()] < 1e-4);
}

/// Kolmogorov–Smirnov test of `x_T` against a standard normal. The clean
/// state sits at the edge of the range to make any leak visible.
#[test]
fn terminal_state_is_standard_normal() {
    let sched = DiffusionSchedule::default();
    let x0 = BoxState([sched.scale(); STATE_DIM]);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 20_000;
    let normal = Normal::standard();
    for dim in [0, 5, STATE_DIM - 1] {
        let mut xs: Vec<f64> = (0..n)
            .map(|_| {
                let eps = standard_normal_state(&mut rng);
                forward_noise(&x0, sched.steps(), &eps, &sched).0[dim]
            })
            .collect();
        xs.sort_by(f64::total_cmp);
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = normal.cdf(x);
                (f - i as f64 / n as f64).max((i + 1) as f64 / n as f64 - f)
            })
            .fold(0.0, f64::max);
        // Critical value at the 0.1% level.
        let critical = 1.95 / (n as f64).sqrt();
        assert!(d < critical, "dim {dim}: D = {d}");
    }
}

fn oracle_pipeline(set: &AnnotationSet) -> DiffusionPipeline {
    DiffusionPipeline::oracle(set, 0.1, DiffusionSchedule::default(), spec()).unwrap()
}

#[test]
fn oracle_sampling_reproduces_ground_truth() {
    let set = AnnotationSet::load(FIXTURE).unwrap();
    for steps in [1, 3, 5] {
        for n_eval in [1, 10] {
            let p = oracle_pipeline(&set).with_sampling(n_eval, steps);
            for (index, o) in set.objects.iter().enumerate() {
                let k = set.camera_of(o).unwrap();
                let gt = set.gt_box(o).unwrap();
                let q = ObjectQuery {
                    index,
                    image_id: &o.image_id,
                    object_id: &o.id,
                    prompt: set.prompt(o),
                    intrinsics: k,
                    gt_length_z: extent_z(&gt, &k).unwrap(),
                };
                for seed in [0, 7] {
                    let b = p.predict(&q, seed).unwrap();
                    let d = box_diff(&b, &gt);
                    assert!(d < 1e-6, "{} steps {steps} n {n_eval}: {d}", o.id);
                }
            }
        }
    }
}

#[test]
fn sampling_is_deterministic_per_seed() {
    let set = AnnotationSet::load(FIXTURE).unwrap();
    let sched = DiffusionSchedule::default();
    let constant = boxdiff::denoiser::ConstantDenoiser::new(0.2, sched.scale());
    let p = DiffusionPipeline::new(Box::new(constant), sched, spec()).with_sampling(4, 3);
    let o = &set.objects[0];
    let k = set.camera_of(o).unwrap();
    let q = ObjectQuery {
        index: 0,
        image_id: &o.image_id,
        object_id: &o.id,
        prompt: set.prompt(o),
        intrinsics: k,
        gt_length_z: 1.0,
    };
    assert_eq!(p.predict(&q, 3).unwrap(), p.predict(&q, 3).unwrap());
}
