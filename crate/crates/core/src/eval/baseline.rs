use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::geometry::{
    egocentric_to_allocentric, encode_prompt, Box3D, BoxPrompt2D, CameraIntrinsics,
};

/// Back-projects a 2D prompt at its depth. The box is aligned with the
/// camera axes, its width and height are the unprojected prompt size and
/// its length is supplied (the ground-truth extent along the optical axis).
pub fn unprojection_baseline(
    prompt: &BoxPrompt2D,
    k: &CameraIntrinsics,
    gt_length_z: f64,
) -> Result<Box3D, EvalError> {
    if !(gt_length_z > 0.0 && gt_length_z.is_finite()) {
        return Err(EvalError::InvalidInput(
            "baseline length must be positive".into(),
        ));
    }
    let g = encode_prompt(prompt, k);
    let p = egocentric_to_allocentric(&Matrix3::identity(), g.u2d, g.v2d, k)?;
    Ok(Box3D::new(g.u2d, g.v2d, g.z, g.w3d, g.h3d, gt_length_z, p)?)
}

/// Noise levels for 2D prompt boxes, in image-normalised units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbSpec {
    pub sigma_scale: f64,
    pub sigma_trans: f64,
    pub seed: u64,
}

impl PerturbSpec {
    pub fn new(sigma_scale: f64, sigma_trans: f64, seed: u64) -> Result<Self, EvalError> {
        if !(sigma_scale >= 0.0
            && sigma_trans >= 0.0
            && sigma_scale.is_finite()
            && sigma_trans.is_finite())
        {
            return Err(EvalError::InvalidInput(
                "noise levels must be nonnegative".into(),
            ));
        }
        Ok(Self {
            sigma_scale,
            sigma_trans,
            seed,
        })
    }
}

/// Perturbs a prompt with the randomness of stream `stream` of `spec.seed`
/// (one stream per object keeps results order-independent).
///
/// With `(w, h, x, y)` normalised by the image size:
/// `w' = w + N(0, σ_s²)`, `h' = h + N(0, σ_s²)`, `x' = x + N(0, σ_t²·w)`,
/// `y' = y + N(0, σ_t²·h)`. Sizes are clamped to at least one pixel, and a
/// box pushed past the border is flagged as clipped.
pub fn perturb_prompt(
    prompt: &BoxPrompt2D,
    spec: &PerturbSpec,
    k: &CameraIntrinsics,
    stream: u64,
) -> BoxPrompt2D {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(stream);
    perturb_prompt_with(prompt, spec, k, &mut rng)
}

pub fn perturb_prompt_with<R: Rng + ?Sized>(
    prompt: &BoxPrompt2D,
    spec: &PerturbSpec,
    k: &CameraIntrinsics,
    rng: &mut R,
) -> BoxPrompt2D {
    let n: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
    let (iw, ih) = (k.width, k.height);
    let (wn, hn) = (prompt.w2d / iw, prompt.h2d / ih);
    let mut out = *prompt;
    out.w2d = (prompt.w2d + iw * spec.sigma_scale * n[0]).max(1.0);
    out.h2d = (prompt.h2d + ih * spec.sigma_scale * n[1]).max(1.0);
    out.u2d = prompt.u2d + iw * spec.sigma_trans * wn.sqrt() * n[2];
    out.v2d = prompt.v2d + ih * spec.sigma_trans * hn.sqrt() * n[3];
    let outside = out.u2d - 0.5 * out.w2d < 0.0
        || out.v2d - 0.5 * out.h2d < 0.0
        || out.u2d + 0.5 * out.w2d > iw
        || out.v2d + 0.5 * out.h2d > ih;
    out.clipped = prompt.clipped || outside;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rot6D;
    use crate::metrics::iou3d;
    use nalgebra::{Point3, Rotation3, Vector3};

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640.0, 480.0).unwrap()
    }

    #[test]
    fn exact_for_fronto_parallel_box_on_axis() {
        // The prompt is the box's cross-section at its centre depth.
        let k = k();
        let gt = Box3D::new(320.0, 240.0, 5.0, 1.0, 0.8, 0.6, Rot6D::IDENTITY).unwrap();
        let prompt = BoxPrompt2D::new(320.0, 240.0, 100.0, 80.0, 5.0);
        let b = unprojection_baseline(&prompt, &k, 0.6).unwrap();
        assert_eq!(iou3d(&b, &gt, &k).unwrap(), 1.0);
    }

    #[test]
    fn rotated_box_loses_overlap() {
        let k = k();
        let r = Rotation3::from_axis_angle(&Vector3::y_axis(), std::f64::consts::FRAC_PI_4);
        let gt =
            Box3D::from_pose(&Point3::new(0.0, 0.0, 5.0), [1.0, 0.8, 0.6], r.matrix(), &k).unwrap();
        let prompt = BoxPrompt2D::new(320.0, 240.0, 100.0, 80.0, 5.0);
        let b = unprojection_baseline(&prompt, &k, 0.6).unwrap();
        let iou = iou3d(&b, &gt, &k).unwrap();
        assert!(iou > 0.0 && iou < 1.0, "{iou}");
    }

    #[test]
    fn off_axis_baseline_is_camera_aligned() {
        let k = k();
        let b = unprojection_baseline(&BoxPrompt2D::new(100.0, 60.0, 50.0, 40.0, 3.0), &k, 1.0)
            .unwrap();
        let r = b.rotation_egocentric(&k).unwrap();
        assert!((r - Matrix3::identity()).abs().max() < 1e-12);
    }

    #[test]
    fn zero_noise_is_identity() {
        let p = BoxPrompt2D::new(333.3, 123.4, 55.5, 77.7, 4.2);
        let spec = PerturbSpec::new(0.0, 0.0, 7).unwrap();
        for s in 0..20 {
            assert_eq!(perturb_prompt(&p, &spec, &k(), s), p);
        }
    }

    #[test]
    fn empirical_spread_matches_formula() {
        let k = k();
        let p = BoxPrompt2D::new(320.0, 240.0, 160.0, 120.0, 4.0);
        let spec = PerturbSpec::new(0.05, 0.05, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 100_000;
        let (mut sw, mut sx) = (0.0, 0.0);
        for _ in 0..n {
            let q = perturb_prompt_with(&p, &spec, &k, &mut rng);
            sw += ((q.w2d - p.w2d) / k.width).powi(2);
            sx += ((q.u2d - p.u2d) / k.width).powi(2);
        }
        let std_w = (sw / n as f64).sqrt();
        let std_x = (sx / n as f64).sqrt();
        assert!((std_w / 0.05 - 1.0).abs() < 0.02, "{std_w}");
        let expected_x = 0.05 * (p.w2d / k.width).sqrt();
        assert!(
            (std_x / expected_x - 1.0).abs() < 0.02,
            "{std_x} vs {expected_x}"
        );
    }
}
