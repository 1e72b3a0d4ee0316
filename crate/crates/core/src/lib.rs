//! Category-agnostic 3D box prediction by denoising diffusion.
//!
//! Given a 2D box prompt and pinhole intrinsics, a trained denoiser turns
//! random box states into metric 3D boxes. The crate is split by concern:
//!
//! * [`geometry`]: boxes, rotations, cameras and convex polytopes.
//! * [`metrics`]: 3D IoU, generalised IoU, normalised Hungarian distance and
//!   Chamfer distance.
//! * [`diffusion`]: the noise schedule, box-state normalisation and the DDIM
//!   sampler.
//! * [`denoiser`]: denoiser interfaces, the reference oracle and a small MLP
//!   trained with the Chamfer objective.
//! * [`eval`]: annotation sets, baselines, evaluation reports and studies.

// Negated comparisons are how NaN inputs get rejected together with
// out-of-range ones.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod denoiser;
pub mod diffusion;
pub mod eval;
pub mod geometry;
pub mod metrics;

/// The guide's chapters, compiled as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/boxes.md")]
    mod boxes {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/diffusion.md")]
    mod diffusion {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/service.md")]
    mod service {}
}
