//! Progressive toy training on the noise-prediction objective.
//!
//! Phase 1 sees single-frame batches with the frame block frozen and its
//! blend weight pinned at 0. Phase 2 resets that weight to its initial
//! value and trains everything on multi-frame windows.

use super::denoiser::{DenoiserConfig, ToyDenoiser};
use super::schedule::{apply_random_ref_masking, sigma_grid};
use super::{CameraTrajectory, ReferenceCondition};
use crate::error::{Error, Result};
use crate::matrix::ImageMatrix;
use crate::params::{Adam, AdamConfig};
use crate::rng::{substream, substream_at, Rng};
use crate::tensor::{Tape, Tensor};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyTrainConfig {
    pub denoiser: DenoiserConfig,
    pub phase1_steps: usize,
    pub phase2_steps: usize,
    pub lr: f32,
    /// Frames per batch in phase 2.
    pub window_frames: usize,
    pub p_mask: f32,
    pub eval_batches: usize,
    pub latent_size: usize,
    pub seed: u64,
}

impl Default for ToyTrainConfig {
    fn default() -> Self {
        Self {
            denoiser: DenoiserConfig::default(),
            phase1_steps: 200,
            phase2_steps: 200,
            lr: 1e-3,
            window_frames: 4,
            p_mask: 0.5,
            eval_batches: 8,
            latent_size: 8,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepLoss {
    pub step: usize,
    pub phase: u8,
    pub loss: f32,
}

#[derive(Clone, Debug)]
pub struct ToyTrainReport {
    pub steps: Vec<StepLoss>,
    pub initial_eval_loss: f32,
    pub final_eval_loss: f32,
    /// Model at the end of phase 1.
    pub phase1: ToyDenoiser,
}

/// One training example.
#[derive(Clone, Debug)]
pub struct ToyBatch {
    /// `(F, V, h, w, Cl)` clean latents.
    pub x0: Tensor,
    /// `(F, h, w, Cl)` input-view latents.
    pub video: Tensor,
    pub cam: CameraTrajectory,
    pub frame_indices: Vec<usize>,
    pub reference: ReferenceCondition,
    pub sigma: f32,
    pub eps: Tensor,
}

/// Area-downsampled RGBA latents in `[-1, 1]`, shaped `(F, V, s, s, 4)`.
pub fn toy_latents(m: &ImageMatrix, size: usize) -> Result<Tensor> {
    let (w, h) = (m.width(), m.height());
    if size == 0 || w % size != 0 || h % size != 0 {
        return Err(Error::config(format!("latent size {size} does not divide {w}x{h}")));
    }
    let (bx, by) = (w / size, h / size);
    let norm = 1.0 / (bx * by) as f32;
    let mut out = Vec::with_capacity(m.frames * m.views * size * size * 4);
    for f in 0..m.frames {
        for v in 0..m.views {
            let img = m.cell(v, f);
            let rgba = if img.channels == 4 { img.clone() } else { img.select_channels(&[0, 1, 2, 0]) };
            for y in 0..size {
                for x in 0..size {
                    let mut acc = [0.0f32; 4];
                    for yy in 0..by {
                        for xx in 0..bx {
                            for (a, &p) in acc.iter_mut().zip(rgba.pixel(x * bx + xx, y * by + yy)) {
                                *a += p;
                            }
                        }
                    }
                    out.extend(acc.iter().map(|a| 2.0 * a * norm - 1.0));
                }
            }
        }
    }
    Tensor::new(&[m.frames, m.views, size, size, 4], out)
}

struct Scene {
    latents: Tensor,
    cam: CameraTrajectory,
}

fn slice_frames(t: &Tensor, frames: &[usize]) -> Tensor {
    let per: usize = t.shape()[1..].iter().product();
    let mut data = Vec::with_capacity(per * frames.len());
    for &f in frames {
        data.extend_from_slice(&t.data()[f * per..(f + 1) * per]);
    }
    let mut shape = t.shape().to_vec();
    shape[0] = frames.len();
    Tensor::new(&shape, data).expect("frame slice")
}

fn view_slice(x0: &Tensor, view: usize) -> Tensor {
    let s = x0.shape();
    let (f, v) = (s[0], s[1]);
    let per: usize = s[2..].iter().product();
    let mut data = Vec::with_capacity(f * per);
    for fi in 0..f {
        let o = (fi * v + view) * per;
        data.extend_from_slice(&x0.data()[o..o + per]);
    }
    Tensor::new(&[f, s[2], s[3], s[4]], data).expect("view slice")
}

fn make_batch(scenes: &[Scene], window: usize, p_mask: f32, rng: &mut Rng, mask_seed: u64) -> Result<ToyBatch> {
    let scene = &scenes[rng.random_range(0..scenes.len())];
    let total = scene.latents.shape()[0];
    let len = window.min(total);
    let start = rng.random_range(0..=total - len);
    let frame_indices: Vec<usize> = (start..start + len).collect();
    let x0 = slice_frames(&scene.latents, &frame_indices);
    let video = view_slice(&x0, 0);
    let first = slice_frames(&scene.latents, &[0]);
    let s = first.shape();
    let reference = ReferenceCondition::present(first.reshape(&[s[1], s[2], s[3], s[4]])?)?;
    let reference = apply_random_ref_masking(&reference, p_mask, mask_seed)?;
    let sigmas = sigma_grid();
    let sigma = sigmas[rng.random_range(0..sigmas.len())];
    let eps = Tensor::randn(x0.shape(), 1.0, rng);
    Ok(ToyBatch {
        x0,
        video,
        cam: scene.cam.clone(),
        frame_indices,
        reference,
        sigma,
        eps,
    })
}

impl ToyDenoiser {
    /// `mean((eps - eps_hat)^2)` for `z = x0 + sigma * eps`.
    pub fn batch_loss<'t>(&self, p: &crate::params::BoundParams<'t>, tape: &'t Tape, b: &ToyBatch) -> Result<crate::tensor::Var<'t>> {
        let mut z = b.x0.clone();
        for (zi, &e) in z.data_mut().iter_mut().zip(b.eps.data()) {
            *zi += b.sigma * e;
        }
        let pred = self.forward(
            p,
            tape.constant(z),
            b.sigma,
            tape.constant(b.video.clone()),
            &b.cam,
            &b.frame_indices,
            &b.reference,
            false,
        )?;
        Ok(pred.sub(tape.constant(b.eps.clone()))?.square().mean())
    }

    pub fn eval_loss(&self, batches: &[ToyBatch]) -> Result<f32> {
        let mut acc = 0.0f64;
        for b in batches {
            let tape = Tape::new();
            let p = self.params.bind_frozen(&tape);
            acc += self.batch_loss(&p, &tape, b)?.item() as f64;
        }
        Ok((acc / batches.len().max(1) as f64) as f32)
    }
}

/// Trains a fresh denoiser on `(matrix, latents)` scenes.
pub fn train_toy(matrices: &[ImageMatrix], config: &ToyTrainConfig) -> Result<(ToyDenoiser, ToyTrainReport)> {
    if matrices.is_empty() {
        return Err(Error::config("toy training needs at least one scene"));
    }
    if config.window_frames < 2 {
        return Err(Error::config("phase-2 window needs at least 2 frames"));
    }
    let mut scenes = Vec::with_capacity(matrices.len());
    for m in matrices {
        scenes.push(Scene {
            latents: toy_latents(m, config.latent_size)?,
            cam: CameraTrajectory::new(m.poses.clone())?,
        });
    }
    let mut model = ToyDenoiser::new(config.denoiser.clone(), config.seed)?;
    let mut eval_rng = substream(config.seed, "toy-eval");
    let eval: Vec<ToyBatch> = (0..config.eval_batches.max(1))
        .map(|i| make_batch(&scenes, config.window_frames, config.p_mask, &mut eval_rng, config.seed ^ (0xE7A1 + i as u64)))
        .collect::<Result<_>>()?;
    let initial_eval_loss = model.eval_loss(&eval)?;

    let mut opt = Adam::new(AdamConfig {
        lr: config.lr,
        eps: 1e-8,
        ..Default::default()
    });
    let mut steps = Vec::with_capacity(config.phase1_steps + config.phase2_steps);
    let mut rng = substream(config.seed, "toy-train");
    model.params.insert("frame.alpha", Tensor::scalar(0.0));
    let mut phase1 = None;
    for step in 0..config.phase1_steps + config.phase2_steps {
        let phase = if step < config.phase1_steps { 1 } else { 2 };
        if phase == 2 && phase1.is_none() {
            phase1 = Some(model.clone());
            model.params.insert("frame.alpha", Tensor::scalar(config.denoiser.alpha_f_init));
        }
        let window = if phase == 1 { 1 } else { config.window_frames };
        let mask_seed = substream_at(config.seed, "toy-mask", step as u64).random();
        let batch = make_batch(&scenes, window, config.p_mask, &mut rng, mask_seed)?;
        let tape = Tape::new();
        let p = model.params.bind(&tape, |n| phase == 1 && n.starts_with("frame."));
        let loss = model.batch_loss(&p, &tape, &batch)?;
        let l = loss.item();
        if !l.is_finite() {
            return Err(Error::Numeric(format!("toy loss became {l} at step {step}")));
        }
        let grads = tape.backward(loss)?;
        opt.step(&mut model.params, &p, &grads)?;
        steps.push(StepLoss { step, phase, loss: l });
    }
    let phase1 = phase1.unwrap_or_else(|| model.clone());
    let final_eval_loss = model.eval_loss(&eval)?;
    Ok((
        model,
        ToyTrainReport {
            steps,
            initial_eval_loss,
            final_eval_loss,
            phase1,
        },
    ))
}
