//! Confidence-weighted Chamfer loss with uncertainty regularisation.
//!
//! `L = (1/N) Σ ηⁱ·chamfer(x̂₀ⁱ, x₀) + λ_reg·(1/N) Σ μⁱ`, with `η = e^{−μ}`.

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use super::dual::{Dual, Real};
use super::{DenoiserError, DenoiserOutput};
use crate::diffusion::{denormalise, BoxState, NormalisationSpec, MIN_DIMENSION, STATE_DIM};
use crate::geometry::{Box3D, CameraIntrinsics, CORNER_SIGNS};
use crate::metrics::{chamfer_corners, CornerSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    /// Confidence-weighted Chamfer term.
    pub reconstruction: f64,
    /// Mean uncertainty.
    pub regularisation: f64,
    /// Per-proposal Chamfer distances, metres.
    pub chamfer: Vec<f64>,
    /// Per-proposal contributions `(ηⁱ·chamferⁱ + λ·μⁱ)/N`.
    pub per_proposal: Vec<f64>,
}

/// Scalar loss from per-proposal Chamfer distances and uncertainties.
pub fn combine(chamfer: &[f64], mu: &[f64], lambda_reg: f64) -> LossBreakdown {
    let n = chamfer.len() as f64;
    let per_proposal: Vec<f64> = chamfer
        .iter()
        .zip(mu)
        .map(|(c, m)| ((-m).exp() * c + lambda_reg * m) / n)
        .collect();
    let reconstruction = chamfer
        .iter()
        .zip(mu)
        .map(|(c, m)| (-m).exp() * c)
        .sum::<f64>()
        / n;
    let regularisation = mu.iter().sum::<f64>() / n;
    LossBreakdown {
        total: reconstruction + lambda_reg * regularisation,
        reconstruction,
        regularisation,
        chamfer: chamfer.to_vec(),
        per_proposal,
    }
}

/// Loss of a set of denoiser outputs against a ground-truth box. Each
/// estimate is denormalised at the ground-truth depth and compared corner to
/// corner.
pub fn loss(
    outputs: &[DenoiserOutput],
    gt: &Box3D,
    k: &CameraIntrinsics,
    spec: &NormalisationSpec,
    scale: f64,
    lambda_reg: f64,
) -> Result<LossBreakdown, DenoiserError> {
    if outputs.is_empty() {
        return Err(DenoiserError::InvalidConfig(
            "loss needs at least one proposal".into(),
        ));
    }
    let gt_corners = CornerSet::new(gt.corners(k)?)?;
    let mut chamfer = Vec::with_capacity(outputs.len());
    for out in outputs {
        let b = denormalise(&out.x0_pred, gt.z, spec, scale)
            .map_err(|e| DenoiserError::Failure(e.to_string()))?;
        chamfer.push(chamfer_corners(
            &CornerSet::new(b.corners(k)?)?,
            &gt_corners,
        ));
    }
    let mu: Vec<f64> = outputs.iter().map(|o| o.mu).collect();
    Ok(combine(&chamfer, &mu, lambda_reg))
}

type V3<S> = [S; 3];

fn cross<S: Real>(a: V3<S>, b: V3<S>) -> V3<S> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot<S: Real>(a: V3<S>, b: V3<S>) -> S {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn normalized<S: Real>(a: V3<S>) -> V3<S> {
    let n = dot(a, a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

/// Box corners as a function of the scaled state, mirroring
/// `denormalise` followed by `Box3D::corners`. The dimension floor is kept:
/// a corner set is unchanged when a dimension flips sign, so without it
/// training can settle on negative sizes that sampling then flattens.
pub fn state_corners<S: Real>(
    state: &[S; STATE_DIM],
    z: f64,
    k: &CameraIntrinsics,
    spec: &NormalisationSpec,
    scale: f64,
) -> [V3<S>; 8] {
    let unit: [S; STATE_DIM] =
        std::array::from_fn(|i| (state[i].scale(1.0 / scale) + S::constant(1.0)).scale(0.5));
    let u = unit[0].scale(spec.image_width);
    let v = unit[1].scale(spec.image_height);
    let dims = [unit[2], unit[3], unit[4]].map(|d| {
        let d = d.scale(spec.max_dim);
        if d.value() < MIN_DIMENSION {
            S::constant(MIN_DIMENSION)
        } else {
            d
        }
    });
    let p: [S; 6] = std::array::from_fn(|j| unit[5 + j].scale(2.0) - S::constant(1.0));

    let b1 = normalized([p[0], p[1], p[2]]);
    let a2 = [p[3], p[4], p[5]];
    let proj = dot(b1, a2);
    let b2 = normalized([
        a2[0] - b1[0] * proj,
        a2[1] - b1[1] * proj,
        a2[2] - b1[2] * proj,
    ]);
    let b3 = cross(b1, b2);
    let allo = [b1, b2, b3]; // columns

    let dx = (u - S::constant(k.cx)).scale(1.0 / k.fx);
    let dy = (v - S::constant(k.cy)).scale(1.0 / k.fy);
    let ray = normalized([dx, dy, S::constant(1.0)]);
    // Rodrigues, trig-free: R = I + [w]ₓ + [w]ₓ²/(1 + c), w = ẑ × ray.
    let w = [-ray[1], ray[0], S::constant(0.0)];
    let c = ray[2];
    let inv = S::constant(1.0) / (S::constant(1.0) + c);
    let zero = S::constant(0.0);
    let one = S::constant(1.0);
    let skew = [
        [zero, -w[2], w[1]],
        [w[2], zero, -w[0]],
        [-w[1], w[0], zero],
    ];
    let r_ray: [[S; 3]; 3] = std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            let sq = skew[i][0] * skew[0][j] + skew[i][1] * skew[1][j] + skew[i][2] * skew[2][j];
            let id = if i == j { one } else { zero };
            id + skew[i][j] + sq * inv
        })
    });
    // Egocentric rotation rows: R_ego[i][j] = Σ_m r_ray[i][m]·allo[j][m].
    let r_ego: [[S; 3]; 3] = std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            r_ray[i][0] * allo[j][0] + r_ray[i][1] * allo[j][1] + r_ray[i][2] * allo[j][2]
        })
    });
    let centre = [dx.scale(z), dy.scale(z), S::constant(z)];
    let half = dims.map(|d| d.scale(0.5));
    CORNER_SIGNS.map(|s| {
        let local = [
            half[0].scale(s[0]),
            half[1].scale(s[1]),
            half[2].scale(s[2]),
        ];
        std::array::from_fn(|i| {
            centre[i] + r_ego[i][0] * local[0] + r_ego[i][1] * local[1] + r_ego[i][2] * local[2]
        })
    })
}

fn l1<S: Real>(a: &V3<S>, b: &Point3<f64>) -> S {
    (a[0] - S::constant(b.x)).abs()
        + (a[1] - S::constant(b.y)).abs()
        + (a[2] - S::constant(b.z)).abs()
}

/// Corner Chamfer distance between a state-parameterised box and fixed
/// ground-truth corners.
pub fn state_chamfer<S: Real>(corners: &[V3<S>; 8], gt: &[Point3<f64>; 8]) -> S {
    let mut total = S::constant(0.0);
    for a in corners {
        let mut best = l1(a, &gt[0]);
        for b in &gt[1..] {
            let d = l1(a, b);
            if d.value() < best.value() {
                best = d;
            }
        }
        total = total + best;
    }
    for b in gt {
        let mut best = l1(&corners[0], b);
        for a in &corners[1..] {
            let d = l1(a, b);
            if d.value() < best.value() {
                best = d;
            }
        }
        total = total + best;
    }
    total
}

/// Chamfer distance of `state` against `gt` and its gradient with respect
/// to the state.
pub fn chamfer_with_gradient(
    state: &BoxState,
    gt: &[Point3<f64>; 8],
    z: f64,
    k: &CameraIntrinsics,
    spec: &NormalisationSpec,
    scale: f64,
) -> (f64, [f64; STATE_DIM]) {
    let vars: [Dual; STATE_DIM] = std::array::from_fn(|i| Dual::variable(state.0[i], i));
    let d = state_chamfer(&state_corners(&vars, z, k, spec, scale), gt);
    (d.v, d.d)
}
