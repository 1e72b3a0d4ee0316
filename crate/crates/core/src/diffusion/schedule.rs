use serde::{Deserialize, Serialize};

use super::DiffusionError;

/// Offset of the cosine schedule, keeping β small near `t = 0`.
const COSINE_OFFSET: f64 = 0.008;
/// Upper bound on any single-step β, as in the improved-DDPM cosine schedule.
const MAX_BETA: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    #[default]
    Cosine,
    /// β linear from 1e-4 to 2e-2.
    Linear,
}

impl std::str::FromStr for ScheduleKind {
    type Err = DiffusionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cosine" => Ok(Self::Cosine),
            "linear" => Ok(Self::Linear),
            other => Err(DiffusionError::InvalidConfig(format!(
                "unknown schedule `{other}`"
            ))),
        }
    }
}

/// Noise schedule: `alpha_cumprod[t] = ᾱ_t` for `t = 0..=T`, plus the
/// signal scale `s` applied to normalised box parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSchedule {
    kind: ScheduleKind,
    scale: f64,
    alpha_cumprod: Vec<f64>,
}

impl DiffusionSchedule {
    pub const DEFAULT_STEPS: usize = 1000;
    pub const DEFAULT_SCALE: f64 = 2.0;

    pub fn new(kind: ScheduleKind, steps: usize, scale: f64) -> Result<Self, DiffusionError> {
        if steps == 0 {
            return Err(DiffusionError::InvalidConfig(
                "schedule needs at least one step".into(),
            ));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(DiffusionError::InvalidConfig(
                "signal scale must be positive".into(),
            ));
        }
        let betas: Vec<f64> = match kind {
            ScheduleKind::Cosine => {
                let f = |t: usize| {
                    let x = (t as f64 / steps as f64 + COSINE_OFFSET) / (1.0 + COSINE_OFFSET);
                    (x * std::f64::consts::FRAC_PI_2).cos().powi(2)
                };
                (1..=steps)
                    .map(|t| (1.0 - f(t) / f(t - 1)).min(MAX_BETA))
                    .collect()
            }
            ScheduleKind::Linear => {
                let (lo, hi) = (1e-4, 2e-2);
                (1..=steps)
                    .map(|t| {
                        if steps == 1 {
                            hi
                        } else {
                            lo + (hi - lo) * (t - 1) as f64 / (steps - 1) as f64
                        }
                    })
                    .collect()
            }
        };
        let mut alpha_cumprod = Vec::with_capacity(steps + 1);
        alpha_cumprod.push(1.0);
        let mut acc = 1.0;
        for beta in betas {
            acc *= 1.0 - beta;
            alpha_cumprod.push(acc);
        }
        let sched = Self {
            kind,
            scale,
            alpha_cumprod,
        };
        sched.validate()?;
        Ok(sched)
    }

    pub fn validate(&self) -> Result<(), DiffusionError> {
        let a = &self.alpha_cumprod;
        if a.len() < 2 || a[0] != 1.0 {
            return Err(DiffusionError::InvalidConfig(
                "alpha_cumprod[0] must be 1".into(),
            ));
        }
        if a.windows(2).any(|w| !(w[1] < w[0] && w[1] > 0.0)) {
            return Err(DiffusionError::InvalidConfig(
                "alpha_cumprod must be strictly decreasing in (0, 1]".into(),
            ));
        }
        if *a.last().unwrap() >= 1e-3 {
            return Err(DiffusionError::InvalidConfig(
                "alpha_cumprod[T] must be below 1e-3; use more steps".into(),
            ));
        }
        Ok(())
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    /// `T`.
    pub fn steps(&self) -> usize {
        self.alpha_cumprod.len() - 1
    }

    /// Signal scale `s`; normalised parameters live in `[-s, s]`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn alpha_cumprod(&self, t: usize) -> f64 {
        self.alpha_cumprod[t]
    }

    pub fn alpha_cumprods(&self) -> &[f64] {
        &self.alpha_cumprod
    }

    /// Sampling time pairs `(t_now, t_next)`, uniformly spaced from `T` down
    /// to 0. `steps = 1` is the single jump `(T, 0)`.
    pub fn time_pairs(&self, steps: usize) -> Vec<(usize, usize)> {
        let total = self.steps();
        let steps = steps.max(1);
        let times: Vec<usize> = (0..=steps).rev().map(|i| i * total / steps).collect();
        times
            .windows(2)
            .map(|w| (w[0], w[1]))
            .filter(|(a, b)| a > b)
            .collect()
    }
}

impl Default for DiffusionSchedule {
    fn default() -> Self {
        Self::new(
            ScheduleKind::Cosine,
            Self::DEFAULT_STEPS,
            Self::DEFAULT_SCALE,
        )
        .expect("default schedule is valid")
    }
}
