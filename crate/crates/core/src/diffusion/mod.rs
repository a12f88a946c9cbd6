//! Multi-view video diffusion blocks at toy scale.
//!
//! Latents flow as `(F, V, H, W, C)` blocks. Attention runs over three
//! layouts: spatial (`(F·V), H·W, C`), 3D (`F, V·H·W, C`) and frame
//! (`V·H·W, F, C`). The 3D and frame blocks merge into the skip path through
//! clamped scalar blend weights.

mod attention;
mod denoiser;
mod embed;
mod layout;
mod schedule;
mod train;

pub use attention::{attention, blended_3d_attention, blended_frame_attention, init_attention, init_blended};
pub use denoiser::{DenoiserConfig, ToyDenoiser};
pub use embed::{camera_encoding, frame_encoding, noise_encoding, CAMERA_ENCODING_DIM, FRAME_ENCODING_DIM};
pub use layout::{
    back_from_frame, back_from_view, from_3d_layout, from_frame_layout, from_view_layout, reshape_for_3d_attention, reshape_for_frame_attention,
    reshape_for_view_attention, to_3d_layout, to_frame_layout, to_view_layout,
};
pub use schedule::{
    apply_random_ref_masking, autoregressive_extension_plan, cfg_scale_schedule, sigma_grid, ExtensionWindow,
    NUM_NOISE_LEVELS,
};
pub use train::{toy_latents, train_toy, StepLoss, ToyBatch, ToyTrainConfig, ToyTrainReport};

use crate::camera::CameraPose;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Rank-5 `(F, V, H, W, C)` latent tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentBlock {
    values: Tensor,
}

impl LatentBlock {
    pub fn new(values: Tensor) -> Result<Self> {
        if values.rank() != 5 {
            return Err(Error::dim(format!("latent block needs rank 5, got {:?}", values.shape())));
        }
        Ok(Self { values })
    }

    pub fn zeros(f: usize, v: usize, h: usize, w: usize, c: usize) -> Self {
        Self {
            values: Tensor::zeros(&[f, v, h, w, c]),
        }
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn into_values(self) -> Tensor {
        self.values
    }

    /// `(F, V, H, W, C)`.
    pub fn dims(&self) -> [usize; 5] {
        let s = self.values.shape();
        [s[0], s[1], s[2], s[3], s[4]]
    }

    pub fn frames(&self) -> usize {
        self.dims()[0]
    }

    pub fn views(&self) -> usize {
        self.dims()[1]
    }

    pub fn channels(&self) -> usize {
        self.dims()[4]
    }
}

/// Per-view poses relative to the input view.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraTrajectory {
    pub poses: Vec<CameraPose>,
}

impl CameraTrajectory {
    pub fn new(poses: Vec<CameraPose>) -> Result<Self> {
        if poses.is_empty() {
            return Err(Error::dim("camera trajectory needs at least one pose"));
        }
        let mut out = Vec::with_capacity(poses.len());
        for p in poses {
            out.push(CameraPose::new(p.elevation_deg, p.azimuth_deg)?);
        }
        Ok(Self { poses: out })
    }

    /// `views` poses evenly spaced in azimuth at elevation 0.
    pub fn orbit(views: usize) -> Self {
        Self {
            poses: CameraPose::orbit(views.max(1), 0.0),
        }
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

/// Frame-0 latents across views, optionally masked out.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceCondition {
    /// `(V, H, W, C)`.
    pub reference_latents: Option<Tensor>,
    pub mask_flag: bool,
}

impl ReferenceCondition {
    pub fn absent() -> Self {
        Self {
            reference_latents: None,
            mask_flag: false,
        }
    }

    pub fn present(latents: Tensor) -> Result<Self> {
        if latents.rank() != 4 {
            return Err(Error::dim(format!("reference latents need rank 4, got {:?}", latents.shape())));
        }
        Ok(Self {
            reference_latents: Some(latents),
            mask_flag: false,
        })
    }

    pub fn masked(mut self) -> Self {
        self.mask_flag = true;
        self
    }

    /// True when the reference takes part in attention.
    pub fn is_active(&self) -> bool {
        self.reference_latents.is_some() && !self.mask_flag
    }

    /// What cross-attention sees: the latents, zeros of the same shape when
    /// masked, or nothing when absent.
    pub fn conditioning(&self) -> Option<Tensor> {
        let t = self.reference_latents.as_ref()?;
        Some(if self.mask_flag { Tensor::zeros(t.shape()) } else { t.clone() })
    }
}
