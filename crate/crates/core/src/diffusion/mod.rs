//! Diffusion over box parameters.
//!
//! A box's projected centre, dimensions and 6D rotation are normalised to
//! `[0, 1]` and mapped to `[-s, s]` ([`normalise`]). Training corrupts that
//! state with Gaussian noise ([`forward_noise`]); inference starts from pure
//! noise and walks the deterministic DDIM update ([`ddim_step`]) down to
//! `t = 0`, asking a [`Denoiser`](crate::denoiser::Denoiser) for a clean
//! estimate at each step ([`sample`]). Several proposals are drawn per
//! object and the most confident one is kept ([`select_best`]).

mod normalise;
mod sampler;
mod schedule;

pub use normalise::{
    denormalise, normalise, BoxState, NormalisationSpec, MIN_DIMENSION, STATE_DIM, STATE_FIELDS,
};
pub use sampler::{
    ddim_step, forward_noise, implied_noise, proposal_rng, sample, select_best,
    standard_normal_state, Prediction, SampleConfig,
};
pub use schedule::{DiffusionSchedule, ScheduleKind};

use crate::denoiser::DenoiserError;
use crate::geometry::GeometryError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiffusionError {
    #[error("parameter `{field}` = {value} is outside its normalisation range")]
    OutOfRange { field: &'static str, value: f64 },
    #[error("invalid DDIM step order: t_now = {t_now}, t_next = {t_next}")]
    InvalidStepOrder { t_now: usize, t_next: usize },
    #[error("no predictions to select from")]
    EmptyPredictionSet,
    #[error("denoiser produced a non-finite output")]
    NonFiniteOutput,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Denoiser(#[from] DenoiserError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
