use nalgebra::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{chamfer_with_gradient, combine};
use super::mlp::TinyMlp;
use super::{DenoiserError, DenoiserInput};
use crate::diffusion::{
    forward_noise, normalise, standard_normal_state, BoxState, DiffusionSchedule, STATE_DIM,
};
use crate::geometry::{Box3D, CameraIntrinsics, GeometricPrompt};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    #[default]
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Noise realisations per object and step.
    pub n_train: usize,
    pub lambda_reg: f64,
    pub lr: f64,
    pub iterations: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    /// Objects averaged per parameter update.
    pub batch_size: usize,
    /// Rescales the gradient to at most this norm when set.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_train: 100,
            lambda_reg: 1.0,
            lr: 1e-2,
            iterations: 1000,
            seed: 0,
            optimizer: Optimizer::Sgd,
            batch_size: 1,
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), DenoiserError> {
        let bad = |m: &str| Err(DenoiserError::InvalidConfig(m.into()));
        if self.n_train == 0 || self.batch_size == 0 {
            return bad("n_train and batch_size must be at least 1");
        }
        if !(self.lambda_reg >= 0.0 && self.lambda_reg.is_finite()) {
            return bad("lambda_reg must be a nonnegative number");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if matches!(self.grad_clip, Some(c) if !(c > 0.0)) {
            return bad("grad_clip must be positive");
        }
        Ok(())
    }
}

/// One training object: its clean state, camera and ground-truth corners.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub prompt: GeometricPrompt,
    pub x0: BoxState,
    pub z: f64,
    pub k: CameraIntrinsics,
    pub gt_corners: [Point3<f64>; 8],
    pub extra: Vec<f64>,
}

impl TrainSample {
    pub fn new(
        gt: &Box3D,
        prompt: GeometricPrompt,
        k: &CameraIntrinsics,
        model: &TinyMlp,
        extra: Vec<f64>,
    ) -> Result<Self, DenoiserError> {
        let x0 = normalise(gt, model.spec(), model.scale())
            .map_err(|e| DenoiserError::Failure(e.to_string()))?;
        Ok(Self {
            prompt,
            x0,
            z: gt.z,
            k: *k,
            gt_corners: gt.corners(k)?,
            extra,
        })
    }
}

/// Per-iteration mean training loss.
pub type LossCurve = Vec<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub model: TinyMlp,
    pub curve: LossCurve,
}

/// Loss of one object over a set of noisy states at step `t`, averaged
/// uniformly over cascade stages.
pub fn objective(
    model: &TinyMlp,
    sample: &TrainSample,
    noisy: &[BoxState],
    t: usize,
    lambda_reg: f64,
) -> Result<f64, DenoiserError> {
    evaluate(model, sample, noisy, t, lambda_reg, None)
}

/// [`objective`] together with its gradient with respect to every model
/// parameter.
pub fn objective_and_gradient(
    model: &TinyMlp,
    sample: &TrainSample,
    noisy: &[BoxState],
    t: usize,
    lambda_reg: f64,
) -> Result<(f64, Vec<f64>), DenoiserError> {
    let mut grad = vec![0.0; model.params().len()];
    let l = evaluate(model, sample, noisy, t, lambda_reg, Some(&mut grad))?;
    Ok((l, grad))
}

fn evaluate(
    model: &TinyMlp,
    sample: &TrainSample,
    noisy: &[BoxState],
    t: usize,
    lambda_reg: f64,
    mut grad: Option<&mut [f64]>,
) -> Result<f64, DenoiserError> {
    if noisy.is_empty() {
        return Err(DenoiserError::InvalidConfig(
            "need at least one noisy state".into(),
        ));
    }
    let stages = model.config().stages;
    let n = noisy.len() as f64;
    let weight = 1.0 / (n * stages as f64);
    let mut total = 0.0;
    for xt in noisy {
        let input = DenoiserInput {
            state: *xt,
            t,
            prompt: sample.prompt,
            extra_features: &sample.extra,
        };
        let (outs, cache) = model.forward_cached(&input)?;
        let mut stage_grads = Vec::with_capacity(stages);
        for o in &outs {
            let (c, dc) = chamfer_with_gradient(
                &o.x0_pred,
                &sample.gt_corners,
                sample.z,
                &sample.k,
                model.spec(),
                model.scale(),
            );
            let eta = (-o.mu).exp();
            total += combine(&[c], &[o.mu], lambda_reg).total * weight;
            let gx: [f64; STATE_DIM] = std::array::from_fn(|i| weight * eta * dc[i]);
            stage_grads.push((gx, weight * (lambda_reg - eta * c)));
        }
        if let Some(g) = grad.as_deref_mut() {
            model.backward(&cache, &stage_grads, g);
        }
    }
    Ok(total)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - Self::B1.powi(self.step);
        let c2 = 1.0 - Self::B2.powi(self.step);
        for i in 0..params.len() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * grad[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// DDPM-style training: every iteration draws `batch_size` objects, one
/// step `t ∈ 1..=T` per object and `n_train` noise realisations, then takes
/// one optimiser step on the mean loss.
pub fn train(
    mut model: TinyMlp,
    data: &[TrainSample],
    cfg: &TrainConfig,
    sched: &DiffusionSchedule,
) -> Result<TrainedModel, DenoiserError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(DenoiserError::InvalidConfig("training set is empty".into()));
    }
    if sched.steps() != model.time_steps() || sched.scale() != model.scale() {
        return Err(DenoiserError::InvalidConfig(
            "model and schedule disagree on T or scale".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let np = model.params().len();
    let mut adam = Adam {
        m: vec![0.0; np],
        v: vec![0.0; np],
        step: 0,
    };
    let mut curve = Vec::with_capacity(cfg.iterations);
    let mut grad = vec![0.0; np];
    let mut noisy = Vec::with_capacity(cfg.n_train);
    for iteration in 0..cfg.iterations {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for _ in 0..cfg.batch_size {
            let sample = &data[rng.random_range(0..data.len())];
            let t = rng.random_range(1..=sched.steps());
            noisy.clear();
            for _ in 0..cfg.n_train {
                let eps = standard_normal_state(&mut rng);
                noisy.push(forward_noise(&sample.x0, t, &eps, sched));
            }
            let (l, g) = objective_and_gradient(&model, sample, &noisy, t, cfg.lambda_reg)?;
            loss += l / cfg.batch_size as f64;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b / cfg.batch_size as f64;
            }
        }
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(DenoiserError::DivergedTraining { iteration, loss });
        }
        if let Some(clip) = cfg.grad_clip {
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > clip {
                grad.iter_mut().for_each(|g| *g *= clip / norm);
            }
        }
        match cfg.optimizer {
            Optimizer::Sgd => {
                for (p, g) in model.params_mut().iter_mut().zip(&grad) {
                    *p -= cfg.lr * g;
                }
            }
            Optimizer::Adam => adam.update(model.params_mut(), &grad, cfg.lr),
        }
        curve.push(loss);
    }
    Ok(TrainedModel { model, curve })
}

#[cfg(test)]
mod tests {
    use super::super::mlp::MlpConfig;
    use super::*;
    use crate::diffusion::NormalisationSpec;
    use crate::geometry::matrix_to_rot6d;
    use nalgebra::{Rotation3, Vector3};

    fn setup(cfg: MlpConfig) -> (TinyMlp, TrainSample, DiffusionSchedule) {
        let k = CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640.0, 480.0).unwrap();
        let spec = NormalisationSpec::new(640.0, 480.0, 15.0).unwrap();
        let sched = DiffusionSchedule::default();
        let model = TinyMlp::new(cfg, spec, 1000, 2.0, 11).unwrap();
        let r = Rotation3::from_axis_angle(&Vector3::y_axis(), 0.4);
        let gt = Box3D::new(
            350.0,
            260.0,
            5.0,
            1.2,
            0.8,
            1.6,
            matrix_to_rot6d(r.matrix()).unwrap(),
        )
        .unwrap();
        let prompt = GeometricPrompt {
            u2d: 350.0,
            v2d: 260.0,
            w3d: 1.5,
            h3d: 0.9,
            z: 5.0,
        };
        let extra = vec![0.0; model.config().extra_features];
        let sample = TrainSample::new(&gt, prompt, &k, &model, extra).unwrap();
        (model, sample, sched)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cfg = MlpConfig {
            hidden: vec![6, 6],
            stages: 2,
            frequencies: 1,
            extra_features: 1,
            anchor: true,
        };
        let (mut model, mut sample, sched) = setup(cfg);
        sample.extra = vec![0.3];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noisy: Vec<_> = (0..3)
            .map(|_| forward_noise(&sample.x0, 300, &standard_normal_state(&mut rng), &sched))
            .collect();
        let (_, g) = objective_and_gradient(&model, &sample, &noisy, 300, 0.4).unwrap();
        let h = 1e-5;
        for j in 0..g.len() {
            let orig = model.params()[j];
            model.params_mut()[j] = orig + h;
            let plus = objective(&model, &sample, &noisy, 300, 0.4).unwrap();
            model.params_mut()[j] = orig - h;
            let minus = objective(&model, &sample, &noisy, 300, 0.4).unwrap();
            model.params_mut()[j] = orig;
            let fd = (plus - minus) / (2.0 * h);
            let rel = (fd - g[j]).abs() / fd.abs().max(g[j].abs()).max(1e-6);
            assert!(rel < 1e-3, "param {j}: {fd} vs {}", g[j]);
        }
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let (model, sample, sched) = setup(MlpConfig {
            hidden: vec![16, 16],
            ..MlpConfig::default()
        });
        let cfg = TrainConfig {
            n_train: 8,
            iterations: 150,
            lr: 3e-3,
            optimizer: Optimizer::Adam,
            ..TrainConfig::default()
        };
        let a = train(model.clone(), std::slice::from_ref(&sample), &cfg, &sched).unwrap();
        let b = train(model, std::slice::from_ref(&sample), &cfg, &sched).unwrap();
        assert_eq!(a.curve, b.curve);
        assert_eq!(a.model.params(), b.model.params());
        let head: f64 = a.curve[..20].iter().sum::<f64>() / 20.0;
        let tail: f64 = a.curve[130..].iter().sum::<f64>() / 20.0;
        assert!(tail < head, "{head} -> {tail}");
    }

    #[test]
    fn divergence_is_reported() {
        let (mut model, sample, sched) = setup(MlpConfig {
            hidden: vec![8],
            ..MlpConfig::default()
        });
        model.params_mut()[0] = f64::NAN;
        let cfg = TrainConfig {
            n_train: 2,
            iterations: 50,
            ..TrainConfig::default()
        };
        let r = train(model, &[sample], &cfg, &sched);
        assert!(
            matches!(r, Err(DenoiserError::DivergedTraining { .. })),
            "{r:?}"
        );
    }

    #[test]
    fn empty_dataset_rejected() {
        let (model, _, sched) = setup(MlpConfig::default());
        assert!(train(model, &[], &TrainConfig::default(), &sched).is_err());
    }
}
