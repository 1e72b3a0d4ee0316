//! Denoisers: `f(x_t, t, c) → (x̂₀, μ)`.
//!
//! Anything implementing [`Denoiser`] can drive
//! [`sample`](crate::diffusion::sample). Two fixed reference denoisers live
//! here; [`TinyMlp`] is the trainable one.

pub mod checkpoint;
pub mod dual;
mod loss;
mod mlp;
mod train;

pub use checkpoint::{
    config_hash, Checkpoint, CheckpointModel, ScheduleSpec, CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};
pub use loss::{chamfer_with_gradient, combine, loss, state_chamfer, state_corners, LossBreakdown};
pub use mlp::{MlpConfig, StageOutput, TinyMlp, MU_EPSILON};
pub use train::{
    objective, objective_and_gradient, train, LossCurve, Optimizer, TrainConfig, TrainSample,
    TrainedModel,
};

use serde::{Deserialize, Serialize};

use crate::diffusion::BoxState;
use crate::geometry::{GeometricPrompt, GeometryError};
use crate::metrics::MetricError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DenoiserError {
    #[error("denoiser failure: {0}")]
    Failure(String),
    #[error("invalid denoiser configuration: {0}")]
    InvalidConfig(String),
    #[error("training diverged at iteration {iteration} (loss = {loss})")]
    DivergedTraining { iteration: usize, loss: f64 },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Everything a denoiser may look at. `extra_features` stands in for image
/// features and is usually empty.
#[derive(Debug, Clone, Copy)]
pub struct DenoiserInput<'a> {
    pub state: BoxState,
    pub t: usize,
    pub prompt: GeometricPrompt,
    pub extra_features: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenoiserOutput {
    pub x0_pred: BoxState,
    pub mu: f64,
}

pub trait Denoiser: Send + Sync {
    fn denoise(&self, input: &DenoiserInput<'_>) -> Result<DenoiserOutput, DenoiserError>;
}

/// Returns a fixed clean state, typically the true `x₀` of one object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleDenoiser {
    pub x0: BoxState,
    pub mu: f64,
}

impl OracleDenoiser {
    pub fn new(x0: BoxState, mu: f64) -> Self {
        Self { x0, mu }
    }
}

impl Denoiser for OracleDenoiser {
    fn denoise(&self, _input: &DenoiserInput<'_>) -> Result<DenoiserOutput, DenoiserError> {
        Ok(DenoiserOutput {
            x0_pred: self.x0,
            mu: self.mu,
        })
    }
}

/// Ignores its input. [`ConstantDenoiser::new`] predicts the centre of
/// every parameter range with an identity allocentric rotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantDenoiser {
    pub state: BoxState,
    pub mu: f64,
}

impl ConstantDenoiser {
    /// `scale` is the schedule's signal scale.
    pub fn new(mu: f64, scale: f64) -> Self {
        let mut state = BoxState::ZERO;
        // First two columns of the identity are `(1, 0, 0)` and `(0, 1, 0)`.
        state.0[5] = scale;
        state.0[9] = scale;
        Self { state, mu }
    }

    pub fn with_state(state: BoxState, mu: f64) -> Self {
        Self { state, mu }
    }
}

impl Denoiser for ConstantDenoiser {
    fn denoise(&self, _input: &DenoiserInput<'_>) -> Result<DenoiserOutput, DenoiserError> {
        Ok(DenoiserOutput {
            x0_pred: self.state,
            mu: self.mu,
        })
    }
}

impl<D: Denoiser + ?Sized> Denoiser for Box<D> {
    fn denoise(&self, input: &DenoiserInput<'_>) -> Result<DenoiserOutput, DenoiserError> {
        (**self).denoise(input)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_denoisers_ignore_input() {
        let prompt = GeometricPrompt {
            u2d: 1.0,
            v2d: 2.0,
            w3d: 0.5,
            h3d: 0.5,
            z: 3.0,
        };
        let mut x0 = BoxState::ZERO;
        x0.0[3] = 0.25;
        let o = OracleDenoiser::new(x0, 0.4);
        let c = ConstantDenoiser::new(0.4, 2.0);
        for t in [0, 1, 500, 1000] {
            let input = DenoiserInput {
                state: BoxState([t as f64; 11]),
                t,
                prompt,
                extra_features: &[],
            };
            assert_eq!(
                o.denoise(&input).unwrap(),
                DenoiserOutput {
                    x0_pred: x0,
                    mu: 0.4
                }
            );
            assert_eq!(c.denoise(&input).unwrap().x0_pred, c.state);
        }
    }
}
