//! Evaluation harness: annotation files, the unprojection baseline, prompt
//! noise, corpus evaluation with per-category and per-seed aggregation,
//! synthetic data and the metric-comparison scenarios.

mod annotations;
mod baseline;
mod evaluate;
mod report;
pub mod scenarios;
pub mod studies;
pub mod synthetic;
pub mod views;

pub use annotations::{
    extent_z, AnnotationSet, Box2D, ImageRecord, ObjectRecord, PinholeK, PoseBox,
};
pub use baseline::{perturb_prompt, perturb_prompt_with, unprojection_baseline, PerturbSpec};
pub use evaluate::{
    evaluate, load_predictions, BoxTable, DiffusionPipeline, EvalConfig, ObjectQuery,
    PipelineModel, PredictionRecord, Predictor, UnprojectionBaseline,
};
pub use report::{
    CategorySummary, EvalReport, Means, ObjectResult, Overall, SeedStats, SeedSummary,
};

use crate::denoiser::{DenoiserError, TinyMlp, TrainSample};
use crate::diffusion::DiffusionError;
use crate::geometry::{encode_prompt, GeometryError};
use crate::metrics::MetricError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("cannot read `{path}`: {message}")]
    Io { path: String, message: String },
    #[error("invalid JSON: {0}")]
    Parse(String),
    #[error("schema error at `{pointer}`: {message}")]
    Schema { pointer: String, message: String },
    #[error("object `{object_id}` has an invalid rotation matrix")]
    InvalidRotation { object_id: String },
    #[error("unknown image `{0}`")]
    UnknownImage(String),
    /// An object id, with its image when one was given.
    #[error("unknown object {0}")]
    UnknownObject(String),
    #[error("no prediction for object `{object_id}` in image `{image_id}`")]
    MissingPrediction { image_id: String, object_id: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("output error: {0}")]
    Output(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error(transparent)]
    Denoiser(#[from] DenoiserError),
}

impl From<csv::Error> for EvalError {
    fn from(e: csv::Error) -> Self {
        EvalError::Output(e.to_string())
    }
}

/// Training samples for every object of `set`, using the object's
/// annotated prompt.
pub fn training_samples(
    set: &AnnotationSet,
    model: &TinyMlp,
) -> Result<Vec<TrainSample>, EvalError> {
    set.objects
        .iter()
        .map(|o| {
            let k = set.camera_of(o)?;
            let prompt = encode_prompt(&set.prompt(o), &k);
            let extra = vec![0.0; model.config().extra_features];
            Ok(TrainSample::new(&set.gt_box(o)?, prompt, &k, model, extra)?)
        })
        .collect()
}
