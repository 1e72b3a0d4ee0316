//! The `boxdiff` command-line tool and the local labelling service.
//!
//! Exit codes: 0 on success, 1 on runtime failures, 2 on invalid input
//! (bad flags, missing files, schema errors, config mismatches) and 3 when
//! training diverges.

use std::path::Path;

use boxdiff::denoiser::DenoiserError;
use boxdiff::diffusion::DiffusionError;
use boxdiff::eval::EvalError;

pub mod commands;
pub mod config;
pub mod service;

pub use commands::{run, Cli};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("training diverged at iteration {iteration} (loss {loss})")]
    Diverged { iteration: usize, loss: f64 },
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Input(_) => 2,
            CliError::Diverged { .. } => 3,
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Output(m) => CliError::Runtime(m),
            EvalError::Denoiser(d) => d.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<DenoiserError> for CliError {
    fn from(e: DenoiserError) -> Self {
        match e {
            DenoiserError::DivergedTraining { iteration, loss } => {
                CliError::Diverged { iteration, loss }
            }
            DenoiserError::Failure(m) => CliError::Runtime(m),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<DiffusionError> for CliError {
    fn from(e: DiffusionError) -> Self {
        CliError::Input(e.to_string())
    }
}

pub(crate) fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read `{}`: {e}", path.display())))
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Runtime(format!("cannot create `{}`: {e}", dir.display())))?;
    }
    std::fs::write(path, contents)
        .map_err(|e| CliError::Runtime(format!("cannot write `{}`: {e}", path.display())))
}
