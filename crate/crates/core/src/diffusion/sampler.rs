use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::normalise::{denormalise, BoxState, NormalisationSpec, STATE_DIM};
use super::schedule::DiffusionSchedule;
use super::DiffusionError;
use crate::denoiser::{Denoiser, DenoiserInput};
use crate::geometry::{Box3D, GeometricPrompt};

/// `x_t = √ᾱ_t·x₀ + √(1−ᾱ_t)·ε`.
pub fn forward_noise(
    x0: &BoxState,
    t: usize,
    eps: &BoxState,
    sched: &DiffusionSchedule,
) -> BoxState {
    let a = sched.alpha_cumprod(t);
    let (sa, sn) = (a.sqrt(), (1.0 - a).sqrt());
    BoxState(std::array::from_fn(|i| sa * x0.0[i] + sn * eps.0[i]))
}

/// Noise implied by `x_t` and a clean estimate `x̂₀` at step `t > 0`.
pub fn implied_noise(
    xt: &BoxState,
    x0_pred: &BoxState,
    t: usize,
    sched: &DiffusionSchedule,
) -> BoxState {
    let a = sched.alpha_cumprod(t);
    let (sa, sn) = (a.sqrt(), (1.0 - a).sqrt());
    BoxState(std::array::from_fn(|i| (xt.0[i] - sa * x0_pred.0[i]) / sn))
}

/// Deterministic DDIM update from `t_now` to `t_next`.
pub fn ddim_step(
    xt: &BoxState,
    x0_pred: &BoxState,
    t_now: usize,
    t_next: usize,
    sched: &DiffusionSchedule,
) -> Result<BoxState, DiffusionError> {
    if !(t_now <= sched.steps() && t_now > t_next) {
        return Err(DiffusionError::InvalidStepOrder { t_now, t_next });
    }
    if t_next == 0 {
        return Ok(*x0_pred);
    }
    let eps = implied_noise(xt, x0_pred, t_now, sched);
    Ok(forward_noise(x0_pred, t_next, &eps, sched))
}

/// A denoised box with its uncertainty `mu` and confidence `eta = e^{-mu}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    #[serde(rename = "box")]
    pub box3d: Box3D,
    pub mu: f64,
    pub eta: f64,
}

impl Prediction {
    pub fn new(box3d: Box3D, mu: f64) -> Self {
        Self {
            box3d,
            mu,
            eta: (-mu).exp(),
        }
    }
}

/// Highest confidence wins; ties go to the lowest index.
pub fn select_best(preds: &[Prediction]) -> Result<(usize, &Prediction), DiffusionError> {
    let mut best = None::<(usize, &Prediction)>;
    for (i, p) in preds.iter().enumerate() {
        match best {
            Some((_, b)) if !(p.eta > b.eta) => {}
            _ => best = Some((i, p)),
        }
    }
    best.ok_or(DiffusionError::EmptyPredictionSet)
}

/// Sampling parameters. `stream` identifies the object being sampled so
/// that several objects can share one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub n_eval: usize,
    pub steps: usize,
    pub seed: u64,
    #[serde(default)]
    pub stream: u64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            n_eval: 10,
            steps: 1,
            seed: 0,
            stream: 0,
        }
    }
}

/// RNG for one proposal: seeded by the master seed, with the ChaCha stream
/// selected by `(object, proposal)`. Results therefore do not depend on the
/// order in which proposals or objects are processed.
pub fn proposal_rng(seed: u64, object: u64, proposal: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(object.wrapping_shl(32) ^ proposal);
    rng
}

pub fn standard_normal_state<R: rand::Rng + ?Sized>(rng: &mut R) -> BoxState {
    BoxState(std::array::from_fn(|_| StandardNormal.sample(rng)))
}

/// Runs `n_eval` independent DDIM trajectories from seeded Gaussian noise.
pub fn sample(
    prompt: &GeometricPrompt,
    denoiser: &dyn Denoiser,
    cfg: &SampleConfig,
    sched: &DiffusionSchedule,
    spec: &NormalisationSpec,
    extra_features: &[f64],
) -> Result<Vec<Prediction>, DiffusionError> {
    if cfg.n_eval == 0 || cfg.steps == 0 {
        return Err(DiffusionError::InvalidConfig(
            "n_eval and steps must be at least 1".into(),
        ));
    }
    let pairs = sched.time_pairs(cfg.steps);
    let scale = sched.scale();
    (0..cfg.n_eval as u64)
        .map(|i| {
            let mut rng = proposal_rng(cfg.seed, cfg.stream, i);
            let mut xt = standard_normal_state(&mut rng);
            let mut last = None;
            for &(t_now, t_next) in &pairs {
                let out = denoiser.denoise(&DenoiserInput {
                    state: xt,
                    t: t_now,
                    prompt: *prompt,
                    extra_features,
                })?;
                if !out.x0_pred.is_finite() || !(out.mu.is_finite() && out.mu > 0.0) {
                    return Err(DiffusionError::NonFiniteOutput);
                }
                let x0 = out.x0_pred.clamped(scale);
                xt = ddim_step(&xt, &x0, t_now, t_next, sched)?;
                last = Some((x0, out.mu));
            }
            let (x0, mu) = last.expect("at least one time pair");
            debug_assert_eq!(x0.0.len(), STATE_DIM);
            Ok(Prediction::new(
                denormalise(&x0, prompt.z, spec, scale)?,
                mu,
            ))
        })
        .collect()
}
