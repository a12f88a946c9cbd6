//! Photogrammetric fitting of a dynamic radiance field to an image matrix.
//!
//! Fitting runs in two stages. Stage 1 fits the pseudo ground truth, first on
//! frame 0 alone with the deformation frozen, then over a growing frame
//! window. Stage 2 re-renders the stage-1 field, passes the renders through a
//! [`Refiner`], and fits again against the refined targets.

mod loss;
mod refine;
mod sampling;
mod stage;
mod visibility;

pub use loss::{feature_distance, image_feature_distance, reconstruction_loss, LossTerms, LossWeights, RenderedPatch, TargetPatch};
pub use refine::{IdentityRefiner, OracleRefiner, Refiner, ToyDenoiserRefiner};
pub use sampling::{frame_window, sample_training_frames, sample_training_views};
pub use stage::{evaluate_loss, fit_two_stage, new_optimizer, optimize_stage, optimize_stage_with, render_matrix, stage2_refine_targets, FitReport, Stage, StageReport};
pub use visibility::{foreground_weights, visibility_map, VISIBILITY_EPS};

use crate::camera::OrbitCamera;
use crate::error::{Error, Result};
use crate::matrix::{Image, ImageMatrix};
use serde::{Deserialize, Serialize};

/// Fitting targets: RGBA cells (RGB over white, alpha as silhouette), per-cell
/// loss weights, and optional normal maps.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoGroundTruth {
    pub matrix: ImageMatrix,
    /// One single-channel map per cell, view-major like the matrix.
    pub visibility: Vec<Image>,
    pub normals: Option<Vec<Image>>,
}

impl PseudoGroundTruth {
    /// Visibility from the matrix's normal maps when it has them, otherwise
    /// from its silhouettes.
    pub fn from_matrix(matrix: ImageMatrix, camera: &OrbitCamera) -> Result<Self> {
        matrix.validate()?;
        if matrix.cells[0].channels != 4 {
            return Err(Error::dim(format!("pseudo ground truth needs RGBA cells, got {} channels", matrix.cells[0].channels)));
        }
        let normals = matrix.normals.clone();
        let visibility = match &normals {
            Some(ns) => (0..matrix.views)
                .flat_map(|v| (0..matrix.frames).map(move |f| (v, f)))
                .map(|(v, f)| visibility_map(camera, &matrix.poses[v], &ns[matrix.index(v, f)]))
                .collect::<Result<Vec<_>>>()?,
            None => matrix.cells.iter().map(foreground_weights).collect(),
        };
        Self::new(matrix, visibility, normals)
    }

    pub fn new(matrix: ImageMatrix, visibility: Vec<Image>, normals: Option<Vec<Image>>) -> Result<Self> {
        let n = matrix.views * matrix.frames;
        let (w, h) = (matrix.width(), matrix.height());
        if visibility.len() != n || visibility.iter().any(|m| m.width != w || m.height != h || m.channels != 1) {
            return Err(Error::dim("visibility maps do not match the image matrix"));
        }
        if let Some(ns) = &normals {
            if ns.len() != n || ns.iter().any(|m| m.width != w || m.height != h || m.channels != 3) {
                return Err(Error::dim("normal maps do not match the image matrix"));
            }
        }
        if visibility.iter().flat_map(|m| &m.data).any(|v| !(0.0..1.0).contains(v)) {
            return Err(Error::Contract("visibility weights must lie in [0, 1)".into()));
        }
        Ok(Self {
            matrix,
            visibility,
            normals,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    pub lr: f32,
    pub stage1_iters: usize,
    pub stage2_iters: usize,
    /// Index into the 50-level noise grid used by the stage-2 refiner.
    pub stage2_noise_step: usize,
    pub rays_per_step: usize,
    pub frames_per_step: usize,
    pub samples_per_ray: usize,
    pub weights: LossWeights,
    /// Mask-weight multiplier while only frame 0 is being fitted.
    pub static_mask_boost: f32,
    /// Explicit `(step, window)` breakpoints; the linear ramp when absent.
    pub frame_window_schedule: Option<Vec<(usize, usize)>>,
    /// Each step one sampled view may move to a random view within this
    /// many degrees of its target azimuth.
    pub view_jitter_deg: f32,
    /// Jitter samples within their bins during training.
    pub jitter_samples: bool,
    pub camera: OrbitCamera,
    pub seed: u64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            stage1_iters: 1500,
            stage2_iters: 500,
            stage2_noise_step: 25,
            rays_per_step: 4096,
            frames_per_step: 4,
            samples_per_ray: 32,
            weights: LossWeights::default(),
            static_mask_boost: 2.0,
            frame_window_schedule: None,
            view_jitter_deg: 0.0,
            jitter_samples: true,
            camera: OrbitCamera::default(),
            seed: 0,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let w = &self.weights;
        let all = [w.mse, w.lpips, w.mask, w.normal, w.depth_smooth, w.normal_smooth, self.static_mask_boost];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::config("loss weights must be finite and non-negative"));
        }
        if !(self.lr > 0.0) || self.rays_per_step == 0 || self.frames_per_step == 0 {
            return Err(Error::config("learning rate and per-step counts must be positive"));
        }
        if self.samples_per_ray < 2 {
            return Err(Error::config("need at least 2 samples per ray"));
        }
        if self.stage2_noise_step >= crate::diffusion::NUM_NOISE_LEVELS {
            return Err(Error::config(format!("noise step {} outside the noise grid", self.stage2_noise_step)));
        }
        if !(0.0..45.0).contains(&self.view_jitter_deg) {
            return Err(Error::config("view jitter must lie in [0, 45) degrees"));
        }
        if let Some(s) = &self.frame_window_schedule {
            if s.windows(2).any(|p| p[1].0 <= p[0].0 || p[1].1 < p[0].1) || s.iter().any(|p| p.1 == 0) {
                return Err(Error::config("frame window schedule must be increasing in step and non-decreasing in window"));
            }
        }
        Ok(())
    }
}
