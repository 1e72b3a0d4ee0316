//! Versioned JSON checkpoints.
//!
//! Network parameters are stored as base64 of their little-endian `f64`
//! bytes, so a checkpoint reloads bit-exactly.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::mlp::{MlpConfig, TinyMlp};
use super::{ConstantDenoiser, DenoiserError};
use crate::diffusion::{BoxState, DiffusionSchedule, NormalisationSpec, ScheduleKind};

pub const CHECKPOINT_FORMAT: &str = "boxdiff-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSpec {
    pub kind: ScheduleKind,
    pub steps: usize,
    pub scale: f64,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self::of(&DiffusionSchedule::default())
    }
}

impl ScheduleSpec {
    pub fn of(sched: &DiffusionSchedule) -> Self {
        Self {
            kind: sched.kind(),
            steps: sched.steps(),
            scale: sched.scale(),
        }
    }

    pub fn build(&self) -> Result<DiffusionSchedule, DenoiserError> {
        DiffusionSchedule::new(self.kind, self.steps, self.scale)
            .map_err(|e| DenoiserError::Checkpoint(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CheckpointModel {
    /// Reproduces each object's own ground truth; needs the annotations at
    /// sampling time.
    Oracle {
        mu: f64,
    },
    Constant {
        state: BoxState,
        mu: f64,
    },
    Mlp {
        config: MlpConfig,
        /// `[inputs, outputs]` of every layer of one stage.
        layer_shapes: Vec<[usize; 2]>,
        params: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub schedule: ScheduleSpec,
    pub normalisation: NormalisationSpec,
    pub model: CheckpointModel,
}

/// SHA-256 of the canonical JSON form of `config`, lower-case hex.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let bytes = serde_json::to_vec(config).expect("configs serialise");
    format!("{:x}", Sha256::digest(&bytes))
}

pub fn encode_params(params: &[f64]) -> String {
    let bytes: Vec<u8> = params.iter().flat_map(|p| p.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub fn decode_params(s: &str) -> Result<Vec<f64>, DenoiserError> {
    let bytes = STANDARD
        .decode(s)
        .map_err(|e| DenoiserError::Checkpoint(format!("parameters: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(DenoiserError::Checkpoint(
            "parameter bytes are not a whole number of f64".into(),
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

fn layer_shapes(config: &MlpConfig) -> Vec<[usize; 2]> {
    let mut dims = vec![config.input_dim()];
    dims.extend(&config.hidden);
    dims.push(crate::diffusion::STATE_DIM + 1);
    dims.windows(2).map(|w| [w[0], w[1]]).collect()
}

impl Checkpoint {
    fn wrap(
        config_hash: String,
        schedule: ScheduleSpec,
        normalisation: NormalisationSpec,
        model: CheckpointModel,
    ) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config_hash,
            schedule,
            normalisation,
            model,
        }
    }

    pub fn from_mlp(model: &TinyMlp, sched: &DiffusionSchedule, config_hash: String) -> Self {
        let m = CheckpointModel::Mlp {
            config: model.config().clone(),
            layer_shapes: layer_shapes(model.config()),
            params: encode_params(model.params()),
        };
        Self::wrap(config_hash, ScheduleSpec::of(sched), *model.spec(), m)
    }

    pub fn oracle(mu: f64, sched: &DiffusionSchedule, spec: NormalisationSpec) -> Self {
        Self::wrap(
            String::new(),
            ScheduleSpec::of(sched),
            spec,
            CheckpointModel::Oracle { mu },
        )
    }

    pub fn constant(
        d: &ConstantDenoiser,
        sched: &DiffusionSchedule,
        spec: NormalisationSpec,
    ) -> Self {
        Self::wrap(
            String::new(),
            ScheduleSpec::of(sched),
            spec,
            CheckpointModel::Constant {
                state: d.state,
                mu: d.mu,
            },
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoints serialise")
    }

    /// Parses and validates a checkpoint, rejecting other formats and
    /// versions.
    pub fn from_json(s: &str) -> Result<Self, DenoiserError> {
        let value: serde_json::Value = serde_json::from_str(s)
            .map_err(|e| DenoiserError::Checkpoint(format!("invalid JSON: {e}")))?;
        match (
            value.get("format").and_then(|f| f.as_str()),
            value.get("version").and_then(|v| v.as_u64()),
        ) {
            (Some(CHECKPOINT_FORMAT), Some(v)) if v == CHECKPOINT_VERSION as u64 => {}
            (Some(CHECKPOINT_FORMAT), v) => {
                return Err(DenoiserError::Checkpoint(format!(
                    "unsupported checkpoint version {v:?}, expected {CHECKPOINT_VERSION}"
                )))
            }
            _ => return Err(DenoiserError::Checkpoint("not a boxdiff checkpoint".into())),
        }
        let ckpt: Checkpoint =
            serde_json::from_value(value).map_err(|e| DenoiserError::Checkpoint(e.to_string()))?;
        ckpt.schedule.build()?;
        ckpt.normalisation
            .validate()
            .map_err(|e| DenoiserError::Checkpoint(e.to_string()))?;
        if let CheckpointModel::Mlp {
            config,
            layer_shapes: shapes,
            ..
        } = &ckpt.model
        {
            config.validate()?;
            if *shapes != layer_shapes(config) {
                return Err(DenoiserError::Checkpoint(
                    "layer shapes do not match the network config".into(),
                ));
            }
        }
        Ok(ckpt)
    }

    pub fn schedule(&self) -> Result<DiffusionSchedule, DenoiserError> {
        self.schedule.build()
    }

    /// Rebuilds the network of an `mlp` checkpoint.
    pub fn mlp(&self) -> Result<TinyMlp, DenoiserError> {
        match &self.model {
            CheckpointModel::Mlp { config, params, .. } => TinyMlp::from_params(
                config.clone(),
                self.normalisation,
                self.schedule.steps,
                self.schedule.scale,
                decode_params(params)?,
            ),
            _ => Err(DenoiserError::Checkpoint(
                "checkpoint does not hold a network".into(),
            )),
        }
    }
}
