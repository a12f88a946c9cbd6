use super::attention::{attention, blended_3d_attention, frame_attention_with, init_attention, init_blended, LN_EPS};
use super::embed::{noise_encoding, CAMERA_ENCODING_DIM, FRAME_ENCODING_DIM};
use super::layout::{to_spatial_layout, var_dims};
use super::schedule::{cfg_scale_schedule, sigma_grid};
use super::{CameraTrajectory, LatentBlock, ReferenceCondition};
use crate::error::{Error, Result};
use crate::params::{BoundParams, ParamStore};
use crate::rng::substream;
use crate::tensor::{Tape, Tensor, Var};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DenoiserConfig {
    pub latent_channels: usize,
    pub hidden: usize,
    pub alpha_3d_init: f32,
    pub alpha_f_init: f32,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            latent_channels: 4,
            hidden: 16,
            alpha_3d_init: 0.5,
            alpha_f_init: 0.01,
        }
    }
}

/// conv-in -> spatial attention -> blended 3D attention -> blended frame
/// attention -> conv-out, predicting the noise. The convolutions are
/// pointwise.
#[derive(Clone, Debug)]
pub struct ToyDenoiser {
    pub config: DenoiserConfig,
    pub params: ParamStore,
}

fn linear<'t>(x: Var<'t>, w: Var<'t>, b: Option<Var<'t>>) -> Result<Var<'t>> {
    let s = x.shape();
    let (n_in, n_out) = (w.shape()[0], w.shape()[1]);
    if s.last() != Some(&n_in) {
        return Err(Error::dim(format!("linear {n_in}->{n_out} on {s:?}")));
    }
    let rows = x.numel() / n_in;
    let mut y = x.reshape(&[rows, n_in])?.matmul(w)?;
    if let Some(b) = b {
        y = y.add(b)?;
    }
    let mut out = s.clone();
    *out.last_mut().expect("rank >= 1") = n_out;
    y.reshape(&out)
}

impl ToyDenoiser {
    pub fn new(config: DenoiserConfig, seed: u64) -> Result<Self> {
        let (cl, c) = (config.latent_channels, config.hidden);
        if cl == 0 || c == 0 {
            return Err(Error::config("denoiser needs positive channel counts"));
        }
        let mut rng = substream(seed, "toy-denoiser-init");
        let mut p = ParamStore::new();
        p.insert("conv_in.w", Tensor::randn(&[2 * cl, c], 1.0 / ((2 * cl) as f32).sqrt(), &mut rng));
        p.insert("conv_in.b", Tensor::zeros(&[c]));
        p.insert("noise.w", Tensor::randn(&[FRAME_ENCODING_DIM, c], 0.1, &mut rng));
        init_attention(&mut p, "spatial", c, &mut rng);
        init_blended(&mut p, "attn3d", c, CAMERA_ENCODING_DIM, config.alpha_3d_init, &mut rng);
        init_blended(&mut p, "frame", c, FRAME_ENCODING_DIM, config.alpha_f_init, &mut rng);
        p.insert("frame.ref", Tensor::randn(&[cl, c], 1.0 / (cl as f32).sqrt(), &mut rng));
        p.insert("conv_out.w", Tensor::zeros(&[c, cl]));
        p.insert("conv_out.b", Tensor::zeros(&[cl]));
        Ok(Self { config, params: p })
    }

    /// Differentiable forward pass. `noisy` is `(F, V, H, W, Cl)`, `video`
    /// is the input-view condition `(F, H, W, Cl)`. With `spatial_only` the
    /// 3D and frame blocks are skipped.
    #[allow(clippy::too_many_arguments)]
    pub fn forward<'t>(
        &self,
        p: &BoundParams<'t>,
        noisy: Var<'t>,
        sigma: f32,
        video: Var<'t>,
        cam: &CameraTrajectory,
        frame_indices: &[usize],
        reference: &ReferenceCondition,
        spatial_only: bool,
    ) -> Result<Var<'t>> {
        let dims = var_dims(noisy)?;
        let [f, v, h, w, cl] = dims;
        if cl != self.config.latent_channels {
            return Err(Error::dim(format!("{cl} latent channels, model expects {}", self.config.latent_channels)));
        }
        if video.shape() != [f, h, w, cl] {
            return Err(Error::dim(format!("video condition {:?} for latents {dims:?}", video.shape())));
        }
        if !(sigma > 0.0) {
            return Err(Error::config(format!("noise level {sigma} must be positive")));
        }
        let tape = noisy.tape();
        let c_in = 1.0 / (sigma * sigma + 1.0).sqrt();
        let j = video.reshape(&[f, 1, h, w, cl])?.broadcast_to(&dims)?;
        let x = Var::concat(&[noisy.scale(c_in), j], 4)?;
        let mut hdn = linear(x, p.get("conv_in.w"), Some(p.get("conv_in.b")))?;
        let noise = tape
            .constant(Tensor::new(&[1, FRAME_ENCODING_DIM], noise_encoding(sigma))?)
            .matmul(p.get("noise.w"))?;
        hdn = hdn.add(noise)?;
        let c = self.config.hidden;
        let hdims = [f, v, h, w, c];

        let s = to_spatial_layout(hdn)?;
        hdn = s.add(attention(s.layer_norm(LN_EPS), p, "spatial", None)?)?.reshape(&hdims)?;

        if !spatial_only {
            hdn = blended_3d_attention(hdn, p, "attn3d", cam)?;
            let cond = match (reference.is_active(), &reference.reference_latents) {
                (true, Some(r)) => {
                    if r.shape() != [v, h, w, cl] {
                        return Err(Error::dim(format!("reference {:?} for latents {dims:?}", r.shape())));
                    }
                    Some(linear(tape.constant(r.clone()), p.get("frame.ref"), None)?)
                }
                _ => None,
            };
            hdn = frame_attention_with(hdn, p, "frame", frame_indices, cond)?;
        }
        linear(hdn, p.get("conv_out.w"), Some(p.get("conv_out.b")))
    }

    /// Inference-time noise prediction.
    pub fn predict(
        &self,
        noisy: &LatentBlock,
        sigma: f32,
        video: &Tensor,
        cam: &CameraTrajectory,
        frame_indices: &[usize],
        reference: &ReferenceCondition,
    ) -> Result<LatentBlock> {
        let tape = Tape::new();
        let p = self.params.bind_frozen(&tape);
        let out = self.forward(
            &p,
            tape.constant(noisy.values().clone()),
            sigma,
            tape.constant(video.clone()),
            cam,
            frame_indices,
            reference,
            false,
        )?;
        LatentBlock::new((*out.value()).clone())
    }

    /// Classifier-free guided noise: one conditional pass and one pass with
    /// the video zeroed and the reference masked, mixed per cell with the
    /// ramped guidance scale.
    #[allow(clippy::too_many_arguments)]
    pub fn guided_epsilon(
        &self,
        noisy: &LatentBlock,
        sigma: f32,
        video: &Tensor,
        cam: &CameraTrajectory,
        frame_indices: &[usize],
        reference: &ReferenceCondition,
        guidance: (f32, f32),
    ) -> Result<Tensor> {
        let cond = self.predict(noisy, sigma, video, cam, frame_indices, reference)?;
        let uncond_ref = reference.clone().masked();
        let uncond = self.predict(noisy, sigma, &Tensor::zeros(video.shape()), cam, frame_indices, &uncond_ref)?;
        let [f, v, h, w, c] = noisy.dims();
        let cell = h * w * c;
        let mut out = uncond.into_values();
        for fi in 0..f {
            for vi in 0..v {
                let s = cfg_scale_schedule(guidance.0, guidance.1, vi, v, fi, f)?;
                let o = (fi * v + vi) * cell;
                for (u, &cv) in out.data_mut()[o..o + cell].iter_mut().zip(&cond.values().data()[o..o + cell]) {
                    *u += s * (cv - *u);
                }
            }
        }
        Ok(out)
    }

    /// Deterministic guided denoising from grid level `start_level` down to
    /// a clean estimate.
    #[allow(clippy::too_many_arguments)]
    pub fn sample_from(
        &self,
        z: &LatentBlock,
        start_level: usize,
        video: &Tensor,
        cam: &CameraTrajectory,
        frame_indices: &[usize],
        reference: &ReferenceCondition,
        guidance: (f32, f32),
    ) -> Result<LatentBlock> {
        let sigmas = sigma_grid();
        if start_level >= sigmas.len() {
            return Err(Error::config(format!("noise level {start_level} outside the {}-level grid", sigmas.len())));
        }
        let mut z = z.values().clone();
        for n in (0..=start_level).rev() {
            let eps = self.guided_epsilon(&LatentBlock::new(z.clone())?, sigmas[n], video, cam, frame_indices, reference, guidance)?;
            let next = if n > 0 { sigmas[n - 1] } else { 0.0 };
            for (zi, &e) in z.data_mut().iter_mut().zip(eps.data()) {
                let x0 = *zi - sigmas[n] * e;
                *zi = x0 + next * e;
            }
        }
        LatentBlock::new(z)
    }
}
