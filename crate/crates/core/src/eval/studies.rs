//! Robustness and ablation sweeps built on [`evaluate`].

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::annotations::AnnotationSet;
use super::baseline::PerturbSpec;
use super::evaluate::{evaluate, DiffusionPipeline, EvalConfig, Predictor};
use super::EvalError;
use crate::metrics::Enclosure;

/// One `(sigma_scale, sigma_trans)` point of a noise grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevel {
    pub sigma_scale: f64,
    pub sigma_trans: f64,
}

/// Parses `"0:0,0.05:0,0.1:0.1"` into noise levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseGrid(pub Vec<NoiseLevel>);

impl FromStr for NoiseGrid {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |m: String| EvalError::InvalidInput(m);
        let mut levels = Vec::new();
        for item in s.split(',').map(str::trim).filter(|i| !i.is_empty()) {
            let (a, b) = item
                .split_once(':')
                .ok_or_else(|| bad(format!("grid entry `{item}` is not `scale:trans`")))?;
            let parse = |x: &str| {
                x.trim()
                    .parse::<f64>()
                    .map_err(|_| bad(format!("grid entry `{item}` is not numeric")))
            };
            let (sigma_scale, sigma_trans) = (parse(a)?, parse(b)?);
            PerturbSpec::new(sigma_scale, sigma_trans, 0)?;
            levels.push(NoiseLevel {
                sigma_scale,
                sigma_trans,
            });
        }
        if levels.is_empty() {
            return Err(bad("the noise grid is empty".into()));
        }
        Ok(Self(levels))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub sigma_scale: f64,
    pub sigma_trans: f64,
    pub iou3d_pct: f64,
    pub nhd: f64,
}

/// Evaluates `predictor` at every noise level. All levels share `noise_seed`
/// so that rows differ only in the noise magnitude.
pub fn perturb_study(
    set: &AnnotationSet,
    predictor: &dyn Predictor,
    grid: &NoiseGrid,
    seeds: &[u64],
    noise_seed: u64,
    enclosure: Enclosure,
) -> Result<Vec<StudyRow>, EvalError> {
    grid.0
        .iter()
        .map(|l| {
            let config = EvalConfig {
                enclosure,
                perturb: Some(PerturbSpec::new(l.sigma_scale, l.sigma_trans, noise_seed)?),
            };
            let r = evaluate(set, predictor, seeds, &config)?;
            Ok(StudyRow {
                sigma_scale: l.sigma_scale,
                sigma_trans: l.sigma_trans,
                iou3d_pct: r.overall.means.iou3d_pct,
                nhd: r.overall.means.nhd,
            })
        })
        .collect()
}

pub fn study_csv(rows: &[StudyRow]) -> Result<String, EvalError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["sigma_scale", "sigma_trans", "iou3d_pct", "nhd"])?;
    for r in rows {
        w.write_record([
            r.sigma_scale.to_string(),
            r.sigma_trans.to_string(),
            format!("{:.2}", r.iou3d_pct),
            format!("{:.4}", r.nhd),
        ])?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| EvalError::Output(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("CSV of UTF-8 fields"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub n_eval: usize,
    pub steps: usize,
    pub iou3d_pct: f64,
    pub nhd: f64,
}

/// Evaluates the pipeline at each `(n_eval, steps)` setting, restoring its
/// original sampling parameters afterwards.
pub fn sampling_ablation(
    set: &AnnotationSet,
    pipeline: &mut DiffusionPipeline,
    settings: &[(usize, usize)],
    seeds: &[u64],
) -> Result<Vec<AblationRow>, EvalError> {
    let saved = (pipeline.n_eval, pipeline.steps);
    let rows = settings
        .iter()
        .map(|&(n_eval, steps)| {
            pipeline.n_eval = n_eval;
            pipeline.steps = steps;
            let r = evaluate(set, &*pipeline, seeds, &EvalConfig::default())?;
            Ok(AblationRow {
                n_eval,
                steps,
                iou3d_pct: r.overall.means.iou3d_pct,
                nhd: r.overall.means.nhd,
            })
        })
        .collect();
    (pipeline.n_eval, pipeline.steps) = saved;
    rows
}
