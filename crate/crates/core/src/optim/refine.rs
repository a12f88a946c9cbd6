use crate::diffusion::{sigma_grid, toy_latents, CameraTrajectory, LatentBlock, ReferenceCondition, ToyDenoiser};
use crate::error::{Error, Result};
use crate::matrix::ImageMatrix;
use crate::rng::substream_at;
use crate::tensor::Tensor;

/// Turns stage-1 renders into stage-2 targets. Implementations must return
/// a matrix of the same shape and be deterministic.
pub trait Refiner {
    fn name(&self) -> &str;
    fn refine(&self, rendered: &ImageMatrix, noise_step: usize) -> Result<ImageMatrix>;
}

/// Returns the renders unchanged.
pub struct IdentityRefiner;

impl Refiner for IdentityRefiner {
    fn name(&self) -> &str {
        "identity"
    }

    fn refine(&self, rendered: &ImageMatrix, _: usize) -> Result<ImageMatrix> {
        Ok(rendered.clone())
    }
}

/// Moves every pixel a fixed fraction of the way toward held-out ground
/// truth. The noise step is ignored.
pub struct OracleRefiner {
    pub ground_truth: ImageMatrix,
    pub blend: f32,
}

impl Refiner for OracleRefiner {
    fn name(&self) -> &str {
        "oracle"
    }

    fn refine(&self, rendered: &ImageMatrix, _: usize) -> Result<ImageMatrix> {
        let gt = &self.ground_truth;
        if gt.views != rendered.views || gt.frames != rendered.frames || gt.width() != rendered.width() || gt.height() != rendered.height() {
            return Err(Error::Contract("oracle ground truth does not match the rendered matrix".into()));
        }
        let b = self.blend;
        let mut out = rendered.clone();
        for (cell, target) in out.cells.iter_mut().zip(&gt.cells) {
            if cell.channels != target.channels {
                return Err(Error::Contract("oracle ground truth channel count differs".into()));
            }
            for (p, &t) in cell.data.iter_mut().zip(&target.data) {
                *p = (1.0 - b) * *p + b * t;
            }
        }
        Ok(out)
    }
}

/// Noises the renders' latents to the given grid level and denoises them
/// with a toy denoiser. The latent change is upsampled and added to the
/// renders.
pub struct ToyDenoiserRefiner {
    pub denoiser: ToyDenoiser,
    pub latent_size: usize,
    pub guidance: (f32, f32),
    pub seed: u64,
}

fn view_slice(x: &Tensor, view: usize) -> Result<Tensor> {
    let s = x.shape();
    let per: usize = s[2..].iter().product();
    let mut data = Vec::with_capacity(s[0] * per);
    for f in 0..s[0] {
        let o = (f * s[1] + view) * per;
        data.extend_from_slice(&x.data()[o..o + per]);
    }
    Tensor::new(&[s[0], s[2], s[3], s[4]], data)
}

impl Refiner for ToyDenoiserRefiner {
    fn name(&self) -> &str {
        "toy-denoiser"
    }

    fn refine(&self, rendered: &ImageMatrix, noise_step: usize) -> Result<ImageMatrix> {
        let sigmas = sigma_grid();
        let sigma = *sigmas
            .get(noise_step)
            .ok_or_else(|| Error::config(format!("noise step {noise_step} outside the noise grid")))?;
        let s = self.latent_size;
        let z0 = toy_latents(rendered, s)?;
        let mut rng = substream_at(self.seed, "refine-noise", noise_step as u64);
        let eps = Tensor::randn(z0.shape(), 1.0, &mut rng);
        let mut z = z0.clone();
        for (zi, &e) in z.data_mut().iter_mut().zip(eps.data()) {
            *zi += sigma * e;
        }
        let (f, v) = (rendered.frames, rendered.views);
        let video = view_slice(&z0, 0)?;
        let per = v * s * s * 4;
        let reference = ReferenceCondition::present(Tensor::new(&[v, s, s, 4], z0.data()[..per].to_vec())?)?;
        let cam = CameraTrajectory::new(rendered.poses.clone())?;
        let out = self
            .denoiser
            .sample_from(&LatentBlock::new(z)?, noise_step, &video, &cam, &rendered.frame_indices, &reference, self.guidance)?;

        let mut refined = rendered.clone();
        let (bx, by) = (rendered.width() / s, rendered.height() / s);
        for fi in 0..f {
            for vi in 0..v {
                let cell = refined.cell_mut(vi, fi);
                let ch = cell.channels.min(4);
                let base = (fi * v + vi) * s * s * 4;
                for y in 0..cell.height {
                    for x in 0..cell.width {
                        let l = base + ((y / by) * s + x / bx) * 4;
                        let px = cell.pixel_mut(x, y);
                        for c in 0..ch {
                            // Latents are 2p - 1, so pixel changes are half the latent change.
                            let d = 0.5 * (out.values().data()[l + c] - z0.data()[l + c]);
                            px[c] = (px[c] + d).clamp(0.0, 1.0);
                        }
                    }
                }
            }
        }
        Ok(refined)
    }
}
