use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::annotations::{extent_z, AnnotationSet, PoseBox};
use super::baseline::{perturb_prompt, unprojection_baseline, PerturbSpec};
use super::report::{EvalReport, ObjectResult};
use super::EvalError;
use crate::denoiser::{Checkpoint, CheckpointModel, ConstantDenoiser, Denoiser, OracleDenoiser};
use crate::diffusion::{
    normalise, sample, select_best, DiffusionSchedule, NormalisationSpec, Prediction, SampleConfig,
};
use crate::geometry::{encode_prompt, Box3D, BoxPrompt2D, CameraIntrinsics};
use crate::metrics::{compare_boxes_with, Enclosure};

/// What a predictor is told about one object. There is deliberately no
/// category field.
#[derive(Debug, Clone, Copy)]
pub struct ObjectQuery<'a> {
    /// Position of the object in the annotation file.
    pub index: usize,
    pub image_id: &'a str,
    pub object_id: &'a str,
    pub prompt: BoxPrompt2D,
    pub intrinsics: CameraIntrinsics,
    /// Ground-truth extent along the optical axis. Only the unprojection
    /// baseline reads it.
    pub gt_length_z: f64,
}

pub trait Predictor: Sync {
    fn predict(&self, query: &ObjectQuery<'_>, seed: u64) -> Result<Box3D, EvalError>;
}

pub struct UnprojectionBaseline;

impl Predictor for UnprojectionBaseline {
    fn predict(&self, q: &ObjectQuery<'_>, _seed: u64) -> Result<Box3D, EvalError> {
        unprojection_baseline(&q.prompt, &q.intrinsics, q.gt_length_z)
    }
}

type Key = (String, String);

fn key(image_id: &str, object_id: &str) -> Key {
    (image_id.to_string(), object_id.to_string())
}

/// Boxes looked up by `(image_id, object_id)`.
pub struct BoxTable {
    boxes: HashMap<Key, Box3D>,
}

impl BoxTable {
    /// Returns the ground truth itself.
    pub fn ground_truth(set: &AnnotationSet) -> Result<Self, EvalError> {
        let mut boxes = HashMap::new();
        for o in &set.objects {
            boxes.insert(key(&o.image_id, &o.id), set.gt_box(o)?);
        }
        Ok(Self { boxes })
    }

    pub fn from_predictions(
        set: &AnnotationSet,
        preds: &[PredictionRecord],
    ) -> Result<Self, EvalError> {
        let mut boxes = HashMap::new();
        for p in preds {
            let img = set
                .image(&p.image_id)
                .ok_or_else(|| EvalError::UnknownImage(p.image_id.clone()))?;
            boxes.insert(
                key(&p.image_id, &p.object_id),
                p.box3d.to_box3d(&img.camera())?,
            );
        }
        Ok(Self { boxes })
    }
}

impl Predictor for BoxTable {
    fn predict(&self, q: &ObjectQuery<'_>, _seed: u64) -> Result<Box3D, EvalError> {
        self.boxes
            .get(&key(q.image_id, q.object_id))
            .copied()
            .ok_or_else(|| EvalError::MissingPrediction {
                image_id: q.image_id.to_string(),
                object_id: q.object_id.to_string(),
            })
    }
}

/// One line of a prediction file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub image_id: String,
    pub object_id: String,
    pub box3d: PoseBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
}

pub fn load_predictions(
    path: impl AsRef<std::path::Path>,
) -> Result<Vec<PredictionRecord>, EvalError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let pointer = super::annotations::json_pointer(e.path());
        if e.inner().is_data() {
            EvalError::Schema {
                pointer,
                message: e.inner().to_string(),
            }
        } else {
            EvalError::Parse(e.inner().to_string())
        }
    })
}

/// Where the pipeline's denoiser comes from.
pub enum PipelineModel {
    Shared(Box<dyn Denoiser>),
    /// A per-object oracle returning that object's ground-truth state.
    Oracle(HashMap<Key, OracleDenoiser>),
}

/// Prompt → geometric prompt → `n_eval` diffusion samples → most confident.
pub struct DiffusionPipeline {
    pub model: PipelineModel,
    pub schedule: DiffusionSchedule,
    pub spec: NormalisationSpec,
    pub n_eval: usize,
    pub steps: usize,
}

impl DiffusionPipeline {
    pub fn new(
        denoiser: Box<dyn Denoiser>,
        schedule: DiffusionSchedule,
        spec: NormalisationSpec,
    ) -> Self {
        let d = SampleConfig::default();
        Self {
            model: PipelineModel::Shared(denoiser),
            schedule,
            spec,
            n_eval: d.n_eval,
            steps: d.steps,
        }
    }

    pub fn oracle(
        set: &AnnotationSet,
        mu: f64,
        schedule: DiffusionSchedule,
        spec: NormalisationSpec,
    ) -> Result<Self, EvalError> {
        let mut table = HashMap::new();
        for o in &set.objects {
            let x0 = normalise(&set.gt_box(o)?, &spec, schedule.scale())?;
            table.insert(key(&o.image_id, &o.id), OracleDenoiser::new(x0, mu));
        }
        let d = SampleConfig::default();
        Ok(Self {
            model: PipelineModel::Oracle(table),
            schedule,
            spec,
            n_eval: d.n_eval,
            steps: d.steps,
        })
    }

    /// The pipeline a checkpoint describes. Oracle checkpoints look up the
    /// ground truth of `set`, which they therefore require.
    pub fn from_checkpoint(
        ckpt: &Checkpoint,
        set: Option<&AnnotationSet>,
    ) -> Result<Self, EvalError> {
        let schedule = ckpt.schedule()?;
        let spec = ckpt.normalisation;
        match &ckpt.model {
            CheckpointModel::Oracle { mu } => {
                let set = set.ok_or_else(|| {
                    EvalError::InvalidInput(
                        "an oracle checkpoint needs the annotations it reproduces".into(),
                    )
                })?;
                Self::oracle(set, *mu, schedule, spec)
            }
            CheckpointModel::Constant { state, mu } => Ok(Self::new(
                Box::new(ConstantDenoiser::with_state(*state, *mu)),
                schedule,
                spec,
            )),
            CheckpointModel::Mlp { .. } => Ok(Self::new(Box::new(ckpt.mlp()?), schedule, spec)),
        }
    }

    pub fn with_sampling(mut self, n_eval: usize, steps: usize) -> Self {
        self.n_eval = n_eval;
        self.steps = steps;
        self
    }

    fn denoiser_for(&self, image_id: &str, object_id: &str) -> Result<&dyn Denoiser, EvalError> {
        match &self.model {
            PipelineModel::Shared(d) => Ok(d.as_ref()),
            PipelineModel::Oracle(table) => table
                .get(&key(image_id, object_id))
                .map(|d| d as &dyn Denoiser)
                .ok_or_else(|| EvalError::MissingPrediction {
                    image_id: image_id.into(),
                    object_id: object_id.into(),
                }),
        }
    }

    /// Sampling parameters for one object: the pipeline's `n_eval` and
    /// `steps`, with the object's position in the annotation file as the
    /// stream so that objects sharing a seed stay independent.
    pub fn sample_config(&self, seed: u64, object_index: usize) -> SampleConfig {
        SampleConfig {
            n_eval: self.n_eval,
            steps: self.steps,
            seed,
            stream: object_index as u64,
        }
    }

    /// All proposals for one object.
    pub fn proposals(
        &self,
        image_id: &str,
        object_id: &str,
        prompt: &BoxPrompt2D,
        k: &CameraIntrinsics,
        cfg: &SampleConfig,
    ) -> Result<Vec<Prediction>, EvalError> {
        let g = encode_prompt(prompt, k);
        Ok(sample(
            &g,
            self.denoiser_for(image_id, object_id)?,
            cfg,
            &self.schedule,
            &self.spec,
            &[],
        )?)
    }
}

impl Predictor for DiffusionPipeline {
    fn predict(&self, q: &ObjectQuery<'_>, seed: u64) -> Result<Box3D, EvalError> {
        let cfg = self.sample_config(seed, q.index);
        let preds = self.proposals(q.image_id, q.object_id, &q.prompt, &q.intrinsics, &cfg)?;
        Ok(select_best(&preds)?.1.box3d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalConfig {
    pub enclosure: Enclosure,
    /// Prompt noise; its seed is combined with each evaluation seed.
    pub perturb: Option<PerturbSpec>,
}

/// Evaluates `predictor` on every object once per seed.
pub fn evaluate(
    set: &AnnotationSet,
    predictor: &dyn Predictor,
    seeds: &[u64],
    config: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    if seeds.is_empty() {
        return Err(EvalError::InvalidInput(
            "at least one seed is required".into(),
        ));
    }
    let mut per_object = Vec::with_capacity(seeds.len() * set.objects.len());
    for &seed in seeds {
        for (index, obj) in set.objects.iter().enumerate() {
            let k = set.camera_of(obj)?;
            let gt = set.gt_box(obj)?;
            let mut prompt = set.prompt(obj);
            if let Some(p) = &config.perturb {
                let spec = PerturbSpec {
                    seed: p.seed ^ seed.rotate_left(32),
                    ..*p
                };
                prompt = perturb_prompt(&prompt, &spec, &k, index as u64);
            }
            let query = ObjectQuery {
                index,
                image_id: &obj.image_id,
                object_id: &obj.id,
                prompt,
                intrinsics: k,
                gt_length_z: extent_z(&gt, &k)?,
            };
            let pred = predictor.predict(&query, seed)?;
            let metrics = compare_boxes_with(&pred, &gt, &k, config.enclosure)?;
            per_object.push(ObjectResult {
                seed,
                image_id: obj.image_id.clone(),
                object_id: obj.id.clone(),
                category: obj.category.clone(),
                metrics,
            });
        }
    }
    Ok(EvalReport::from_results(seeds, per_object))
}
