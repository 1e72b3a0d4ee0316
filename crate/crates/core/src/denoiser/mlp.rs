//! A small fully connected denoiser with hand-written backpropagation.
//!
//! Each stage maps `features(y, t, prompt, extras)` through tanh hidden
//! layers to 12 outputs: an 11-vector and a pre-softplus uncertainty. Stage 0
//! reads `y = x_t`; later stages read the previous estimate and add a
//! residual to it. All parameters live in one flat vector so optimisers,
//! checkpoints and finite-difference checks can treat them uniformly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Denoiser, DenoiserError, DenoiserInput, DenoiserOutput};
use crate::diffusion::{BoxState, NormalisationSpec, STATE_DIM};
use crate::geometry::GeometricPrompt;

const OUTPUTS: usize = STATE_DIM + 1;
const PROMPT_FEATURES: usize = 5;
const TIME_FEATURES: usize = 5;
/// Added to the softplus so `μ` stays strictly positive.
pub const MU_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    /// Hidden layer widths.
    pub hidden: Vec<usize>,
    /// Number of cascade stages.
    pub stages: usize,
    /// Sinusoidal frequencies per state component.
    pub frequencies: usize,
    /// Length of the extra feature vector every input must carry.
    pub extra_features: usize,
    /// Predict a correction to a prompt-derived anchor state instead of the
    /// state itself (stage 0 only).
    pub anchor: bool,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            stages: 1,
            frequencies: 2,
            extra_features: 0,
            anchor: true,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<(), DenoiserError> {
        let bad = |m: &str| Err(DenoiserError::InvalidConfig(m.into()));
        if self.hidden.is_empty() || self.hidden.len() > 4 {
            return bad("between 1 and 4 hidden layers are supported");
        }
        if self.hidden.iter().any(|&w| w == 0 || w > 128) {
            return bad("hidden widths must lie in 1..=128");
        }
        if self.stages == 0 || self.stages > 8 {
            return bad("stages must lie in 1..=8");
        }
        if self.frequencies > 8 {
            return bad("at most 8 positional frequencies");
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        STATE_DIM * (1 + 2 * self.frequencies)
            + TIME_FEATURES
            + PROMPT_FEATURES
            + self.extra_features
    }

    fn layer_dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim()];
        d.extend(&self.hidden);
        d.push(OUTPUTS);
        d
    }

    /// Parameters per stage.
    pub fn stage_params(&self) -> usize {
        self.layer_dims()
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    pub fn num_params(&self) -> usize {
        self.stages * self.stage_params()
    }
}

/// One stage's output before and after the uncertainty nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageOutput {
    pub x0_pred: BoxState,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TinyMlp {
    config: MlpConfig,
    spec: NormalisationSpec,
    time_steps: usize,
    scale: f64,
    params: Vec<f64>,
}

/// Activations of one stage, kept for the backward pass.
struct StageCache {
    input_state: [f64; STATE_DIM],
    /// `acts[0]` are the features; the last entry holds the raw outputs.
    acts: Vec<Vec<f64>>,
}

pub(crate) struct ForwardCache {
    stages: Vec<StageCache>,
}

impl TinyMlp {
    /// Random initialisation: weights `N(0, 1/fan_in)`, output layer scaled
    /// down by 10, zero biases.
    pub fn new(
        config: MlpConfig,
        spec: NormalisationSpec,
        time_steps: usize,
        scale: f64,
        seed: u64,
    ) -> Result<Self, DenoiserError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = config.layer_dims();
        let mut params = Vec::with_capacity(config.num_params());
        for _ in 0..config.stages {
            for (l, w) in dims.windows(2).enumerate() {
                let last = l + 2 == dims.len();
                let std = (1.0 / w[0] as f64).sqrt() * if last { 0.1 } else { 1.0 };
                let normal = Normal::new(0.0, std).expect("positive std");
                params.extend((0..w[0] * w[1]).map(|_| normal.sample(&mut rng)));
                params.extend(std::iter::repeat_n(0.0, w[1]));
            }
        }
        Self::from_params(config, spec, time_steps, scale, params)
    }

    pub fn from_params(
        config: MlpConfig,
        spec: NormalisationSpec,
        time_steps: usize,
        scale: f64,
        params: Vec<f64>,
    ) -> Result<Self, DenoiserError> {
        config.validate()?;
        if params.len() != config.num_params() {
            return Err(DenoiserError::InvalidConfig(format!(
                "expected {} parameters, got {}",
                config.num_params(),
                params.len()
            )));
        }
        if time_steps == 0 || !(scale > 0.0) {
            return Err(DenoiserError::InvalidConfig(
                "time steps and scale must be positive".into(),
            ));
        }
        Ok(Self {
            config,
            spec,
            time_steps,
            scale,
            params,
        })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn spec(&self) -> &NormalisationSpec {
        &self.spec
    }

    pub fn time_steps(&self) -> usize {
        self.time_steps
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// The state an unprojected prompt would give: centre at the 2D box
    /// centre, `w`, `h` from the prompt, `l` as their mean and an identity
    /// allocentric rotation.
    pub fn anchor_state(&self, prompt: &GeometricPrompt) -> BoxState {
        let s = self.scale;
        let to_state = |x: f64, range: f64| (2.0 * x / range - 1.0) * s;
        let md = self.spec.max_dim;
        let mut a = [0.0; STATE_DIM];
        a[0] = to_state(prompt.u2d, self.spec.image_width);
        a[1] = to_state(prompt.v2d, self.spec.image_height);
        a[2] = to_state(prompt.w3d, md);
        a[3] = to_state(prompt.h3d, md);
        a[4] = to_state(0.5 * (prompt.w3d + prompt.h3d), md);
        for (j, p) in [1.0, 0.0, 0.0, 0.0, 1.0, 0.0].into_iter().enumerate() {
            a[5 + j] = p * s;
        }
        BoxState(a)
    }

    fn features(
        &self,
        y: &[f64; STATE_DIM],
        t: usize,
        prompt: &GeometricPrompt,
        extra: &[f64],
    ) -> Vec<f64> {
        let mut f = Vec::with_capacity(self.config.input_dim());
        for &x in y {
            f.push(x / self.scale);
            for k in 0..self.config.frequencies {
                let w = (1u32 << k) as f64;
                f.push((w * x).sin());
                f.push((w * x).cos());
            }
        }
        let tau = t as f64 / self.time_steps as f64;
        let pi = std::f64::consts::PI;
        f.extend([
            tau,
            (pi * tau).sin(),
            (pi * tau).cos(),
            (2.0 * pi * tau).sin(),
            (2.0 * pi * tau).cos(),
        ]);
        f.extend([
            2.0 * prompt.u2d / self.spec.image_width - 1.0,
            2.0 * prompt.v2d / self.spec.image_height - 1.0,
            prompt.w3d.ln(),
            prompt.h3d.ln(),
            prompt.z.ln(),
        ]);
        f.extend_from_slice(extra);
        f
    }

    /// `d loss / d y` from `d loss / d features` (state part only).
    fn feature_state_grad(&self, y: &[f64; STATE_DIM], gf: &[f64]) -> [f64; STATE_DIM] {
        let per = 1 + 2 * self.config.frequencies;
        std::array::from_fn(|c| {
            let x = y[c];
            let g = &gf[c * per..(c + 1) * per];
            let mut d = g[0] / self.scale;
            for k in 0..self.config.frequencies {
                let w = (1u32 << k) as f64;
                d += g[1 + 2 * k] * w * (w * x).cos() - g[2 + 2 * k] * w * (w * x).sin();
            }
            d
        })
    }

    fn check_input(&self, input: &DenoiserInput<'_>) -> Result<(), DenoiserError> {
        if input.extra_features.len() != self.config.extra_features {
            return Err(DenoiserError::InvalidConfig(format!(
                "expected {} extra features, got {}",
                self.config.extra_features,
                input.extra_features.len()
            )));
        }
        let p = &input.prompt;
        if !(p.w3d > 0.0 && p.h3d > 0.0 && p.z > 0.0) {
            return Err(DenoiserError::Failure(
                "prompt sizes and depth must be positive".into(),
            ));
        }
        if !input.state.is_finite() {
            return Err(DenoiserError::Failure("non-finite input state".into()));
        }
        Ok(())
    }

    /// Runs every stage, returning their outputs and the activations.
    pub(crate) fn forward_cached(
        &self,
        input: &DenoiserInput<'_>,
    ) -> Result<(Vec<StageOutput>, ForwardCache), DenoiserError> {
        self.check_input(input)?;
        let dims = self.config.layer_dims();
        let stage_len = self.config.stage_params();
        let mut outputs = Vec::with_capacity(self.config.stages);
        let mut caches = Vec::with_capacity(self.config.stages);
        let mut y = input.state.0;
        for stage in 0..self.config.stages {
            let mut theta = &self.params[stage * stage_len..(stage + 1) * stage_len];
            let mut acts = vec![self.features(&y, input.t, &input.prompt, input.extra_features)];
            for (l, w) in dims.windows(2).enumerate() {
                let (weights, rest) = theta.split_at(w[0] * w[1]);
                let (bias, rest) = rest.split_at(w[1]);
                theta = rest;
                let a = acts.last().expect("features pushed");
                let hidden = l + 2 < dims.len();
                let z: Vec<f64> = (0..w[1])
                    .map(|o| {
                        let row = &weights[o * w[0]..(o + 1) * w[0]];
                        let s = bias[o] + row.iter().zip(a).map(|(wi, ai)| wi * ai).sum::<f64>();
                        if hidden {
                            s.tanh()
                        } else {
                            s
                        }
                    })
                    .collect();
                acts.push(z);
            }
            let raw = acts.last().expect("output layer");
            let base = if stage == 0 {
                if self.config.anchor {
                    self.anchor_state(&input.prompt).0
                } else {
                    [0.0; STATE_DIM]
                }
            } else {
                y
            };
            let x0: [f64; STATE_DIM] = std::array::from_fn(|i| base[i] + raw[i]);
            let mu = softplus(raw[STATE_DIM]) + MU_EPSILON;
            outputs.push(StageOutput {
                x0_pred: BoxState(x0),
                mu,
            });
            caches.push(StageCache {
                input_state: y,
                acts,
            });
            y = x0;
        }
        Ok((outputs, ForwardCache { stages: caches }))
    }

    pub fn forward(&self, input: &DenoiserInput<'_>) -> Result<Vec<StageOutput>, DenoiserError> {
        Ok(self.forward_cached(input)?.0)
    }

    /// Accumulates into `grad` the parameter gradient given, per stage, the
    /// loss gradient with respect to that stage's `x̂₀` and `μ`.
    pub(crate) fn backward(
        &self,
        cache: &ForwardCache,
        stage_grads: &[([f64; STATE_DIM], f64)],
        grad: &mut [f64],
    ) {
        let dims = self.config.layer_dims();
        let stage_len = self.config.stage_params();
        let mut carry = [0.0; STATE_DIM];
        for stage in (0..self.config.stages).rev() {
            let sc = &cache.stages[stage];
            let (gx, gmu) = stage_grads[stage];
            let gy: [f64; STATE_DIM] = std::array::from_fn(|i| gx[i] + carry[i]);
            let raw = sc.acts.last().expect("output layer");
            let mut g: Vec<f64> = gy.to_vec();
            g.push(gmu * sigmoid(raw[STATE_DIM]));

            let theta = &self.params[stage * stage_len..(stage + 1) * stage_len];
            let gtheta = &mut grad[stage * stage_len..(stage + 1) * stage_len];
            let mut offsets = Vec::with_capacity(dims.len() - 1);
            let mut off = 0;
            for w in dims.windows(2) {
                offsets.push(off);
                off += w[0] * w[1] + w[1];
            }
            for l in (0..dims.len() - 1).rev() {
                let (n_in, n_out) = (dims[l], dims[l + 1]);
                let off = offsets[l];
                let a = &sc.acts[l];
                let weights = &theta[off..off + n_in * n_out];
                let mut g_in = vec![0.0; n_in];
                for o in 0..n_out {
                    let go = g[o];
                    if go == 0.0 {
                        continue;
                    }
                    let row = off + o * n_in;
                    for i in 0..n_in {
                        gtheta[row + i] += go * a[i];
                        g_in[i] += go * weights[o * n_in + i];
                    }
                    gtheta[off + n_in * n_out + o] += go;
                }
                if l > 0 {
                    for (gi, ai) in g_in.iter_mut().zip(a) {
                        *gi *= 1.0 - ai * ai;
                    }
                }
                g = g_in;
            }
            if stage > 0 {
                let through_features = self.feature_state_grad(&sc.input_state, &g);
                carry = std::array::from_fn(|i| gy[i] + through_features[i]);
            }
        }
    }
}

impl Denoiser for TinyMlp {
    fn denoise(&self, input: &DenoiserInput<'_>) -> Result<DenoiserOutput, DenoiserError> {
        let last = *self.forward(input)?.last().expect("at least one stage");
        if !last.x0_pred.is_finite() || !last.mu.is_finite() {
            return Err(DenoiserError::Failure("non-finite network output".into()));
        }
        Ok(DenoiserOutput {
            x0_pred: last.x0_pred,
            mu: last.mu,
        })
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
