//! The TOML configuration file. Every section is optional and unknown keys
//! are rejected.
//!
//! ```toml
//! [schedule]
//! kind = "cosine"      # or "linear"
//! steps = 1000         # T
//! scale = 2.0          # signal scale s
//!
//! [normalisation]      # defaults to the largest image of the data, 15 m
//! image_width = 640
//! image_height = 480
//! max_dim = 15.0
//!
//! [sampling]
//! n_eval = 10
//! steps = 1
//! seed = 0
//!
//! [model]
//! hidden = [64, 64]
//! stages = 1
//!
//! [training]
//! n_train = 100
//! lr = 0.01
//! iterations = 1000
//!
//! [data]               # either a file or a synthetic set
//! annotations = "train.json"
//!
//! [paths]
//! out_dir = "runs/a"
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};

use boxdiff::denoiser::{MlpConfig, ScheduleSpec, TrainConfig};
use boxdiff::diffusion::NormalisationSpec;
use boxdiff::eval::synthetic::SyntheticConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Largest box dimension, in metres, assumed when none is configured.
pub const DEFAULT_MAX_DIM: f64 = 15.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sampling {
    pub n_eval: usize,
    pub steps: usize,
    pub seed: u64,
}

impl Default for Sampling {
    fn default() -> Self {
        let d = boxdiff::diffusion::SampleConfig::default();
        Self {
            n_eval: d.n_eval,
            steps: d.steps,
            seed: d.seed,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Data {
    pub annotations: Option<PathBuf>,
    pub synthetic: Option<SyntheticConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub schedule: ScheduleSpec,
    pub normalisation: Option<NormalisationSpec>,
    pub sampling: Sampling,
    pub model: MlpConfig,
    pub training: TrainConfig,
    pub data: Data,
    pub paths: Paths,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let c: Config = toml::from_str(text).map_err(|e| CliError::Input(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = crate::read_file(path)?;
        let mut c = Self::from_toml(&text)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        c.data.annotations.as_mut().map(resolve);
        c.paths.out_dir.as_mut().map(resolve);
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.schedule.build()?;
        if let Some(n) = &self.normalisation {
            n.validate()?;
        }
        if self.sampling.n_eval == 0 || self.sampling.steps == 0 {
            return Err(CliError::Input(
                "sampling.n_eval and sampling.steps must be at least 1".into(),
            ));
        }
        self.model.validate()?;
        self.training.validate()?;
        match (&self.data.annotations, &self.data.synthetic) {
            (Some(_), Some(_)) => Err(CliError::Input(
                "data.annotations and data.synthetic are mutually exclusive".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Hash of everything that determines a trained model. Paths are left
    /// out so that moving a run does not change it.
    pub fn training_hash(&self) -> String {
        let mut c = self.clone();
        c.paths = Paths::default();
        c.sampling = Sampling::default();
        c.data.annotations = c
            .data
            .annotations
            .as_ref()
            .and_then(|p| p.file_name().map(PathBuf::from));
        boxdiff::denoiser::config_hash(&c)
    }
}
