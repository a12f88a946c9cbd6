use super::loss::{reconstruction_loss, LossTerms, RenderedPatch, TargetPatch};
use super::refine::Refiner;
use super::sampling::{draw_frames, frame_window, sample_training_frames, sample_training_views};
use super::{OptimConfig, PseudoGroundTruth};
use crate::camera::{CameraPose, OrbitCamera, Ray};
use crate::error::{Error, Result};
use crate::matrix::{Image, ImageMatrix};
use crate::nerf::{render_rays, render_view, DynNerfModel, RenderOptions, DEFORM_PREFIX, TIME_PARAM};
use crate::params::{Adam, AdamConfig};
use crate::rng::substream_at;
use crate::tensor::Tape;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    One,
    Two,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct StageReport {
    /// Total loss per step.
    pub losses: Vec<f32>,
    pub terms: Vec<LossTerms>,
}

/// The optimizer a fit starts with.
pub fn new_optimizer(config: &OptimConfig) -> Adam {
    Adam::new(AdamConfig {
        lr: config.lr,
        ..Default::default()
    })
}

/// Runs one optimization stage in place with a fresh optimizer. Stage 1
/// starts on frame 0 and widens the frame window; stage 2 samples all
/// frames. The deformation and time embedding stay frozen while only one
/// frame is in play.
pub fn optimize_stage(model: &mut DynNerfModel, gt: &PseudoGroundTruth, config: &OptimConfig, stage: Stage) -> Result<StageReport> {
    optimize_stage_with(model, gt, config, stage, &mut new_optimizer(config))
}

/// [`optimize_stage`] continuing from existing optimizer state.
pub fn optimize_stage_with(
    model: &mut DynNerfModel,
    gt: &PseudoGroundTruth,
    config: &OptimConfig,
    stage: Stage,
    adam: &mut Adam,
) -> Result<StageReport> {
    config.validate()?;
    let m = &gt.matrix;
    if model.config.frames < m.frames {
        return Err(Error::config(format!("model has {} frames, targets have {}", model.config.frames, m.frames)));
    }
    let iters = match stage {
        Stage::One => config.stage1_iters,
        Stage::Two => config.stage2_iters,
    };
    // Stage-2 draws continue the step count so they differ from stage 1.
    let offset = match stage {
        Stage::One => 0,
        Stage::Two => config.stage1_iters,
    };
    let (w, h) = (m.width(), m.height());
    let cam = &config.camera;
    adam.config.lr = config.lr;
    let mut report = StageReport::default();
    for step in 0..iters {
        let gstep = (offset + step) as u64;
        let views = sample_training_views(offset + step, &m.poses, config);
        let (frames, single) = match stage {
            Stage::One => (sample_training_frames(step, m.frames, config), frame_window(step, m.frames, config) == 1),
            Stage::Two => {
                let mut rng = substream_at(config.seed, "frame-sample", gstep);
                (draw_frames(&mut rng, m.frames, m.frames, config.frames_per_step), m.frames == 1)
            }
        };
        let cells: Vec<(usize, usize)> = views.iter().flat_map(|&v| frames.iter().map(move |&f| (v, f))).collect();
        let side = ((config.rays_per_step / cells.len()) as f64).sqrt().floor() as usize;
        let side = side.clamp(1, w.min(h));
        let mut rng = substream_at(config.seed, "patch", gstep);
        let mut rays = Vec::with_capacity(cells.len() * side * side);
        let mut times = Vec::with_capacity(rays.capacity());
        let mut targets = Vec::with_capacity(cells.len());
        for &(v, f) in &cells {
            let x0 = rng.random_range(0..=w - side);
            let y0 = rng.random_range(0..=h - side);
            let i = m.index(v, f);
            let normal = gt.normals.as_ref().map(|n| &n[i]);
            targets.push(TargetPatch::crop(&m.cells[i], &gt.visibility[i], normal, x0, y0, side, side)?);
            let frame = cam.frame(&m.poses[v]);
            for y in y0..y0 + side {
                for x in x0..x0 + side {
                    let (o, d) = cam.pixel_ray(&frame, x as f32, y as f32, w, h);
                    rays.push(Ray {
                        origin: o,
                        direction: d,
                        t_near: 0.0,
                        t_far: 2.0 * cam.radius + 2.0,
                    });
                    times.push(f as f32);
                }
            }
        }

        let mut weights = config.weights;
        if single && stage == Stage::One {
            weights.mask *= config.static_mask_boost;
        }
        let tape = Tape::new();
        let bound = model.bind(&tape, |n| single && (n.starts_with(DEFORM_PREFIX) || n == TIME_PARAM));
        let opts = RenderOptions {
            samples: config.samples_per_ray,
            normals: weights.needs_normals(),
        };
        let mut jitter = substream_at(config.seed, "sample-jitter", gstep);
        let batch = render_rays(&bound, &tape, &rays, &times, opts, config.jitter_samples.then_some(&mut jitter))?;
        let rgb = batch.rgb_on_white()?;
        let per = side * side;
        let scale = 1.0 / cells.len() as f32;
        let mut total = None;
        let mut terms = LossTerms::default();
        for (k, target) in targets.iter().enumerate() {
            let patch = RenderedPatch {
                width: side,
                height: side,
                rgb: rgb.slice(0, k * per, per)?,
                alpha: batch.alpha.slice(0, k * per, per)?,
                depth: batch.depth.slice(0, k * per, per)?,
                normal: batch.normal.map(|n| n.slice(0, k * per, per)).transpose()?,
            };
            let (l, t) = reconstruction_loss(&patch, target, &weights)?;
            terms.add_scaled(&t, scale);
            let l = l.scale(scale);
            total = Some(match total {
                None => l,
                Some(acc) => l.add(acc)?,
            });
        }
        let total = total.expect("at least one cell");
        if let Some((name, v)) = terms.non_finite() {
            return Err(Error::Numeric(format!("{name} loss is {v} at stage {stage:?} step {step}")));
        }
        let params = bound.params;
        if total.is_tracked() {
            let grads = tape.backward(total)?;
            adam.step(&mut model.params, &params, &grads)?;
        }
        report.losses.push(terms.total);
        report.terms.push(terms);
    }
    Ok(report)
}

/// Loss over every full cell with midpoint samples, averaged over cells.
pub fn evaluate_loss(model: &DynNerfModel, gt: &PseudoGroundTruth, config: &OptimConfig) -> Result<LossTerms> {
    let m = &gt.matrix;
    let (w, h) = (m.width(), m.height());
    let cam = &config.camera;
    let opts = RenderOptions {
        samples: config.samples_per_ray,
        normals: config.weights.needs_normals(),
    };
    let mut acc = LossTerms::default();
    for v in 0..m.views {
        let rays = crate::nerf::view_rays(cam, &m.poses[v], w, h);
        for f in 0..m.frames {
            let i = m.index(v, f);
            let target = TargetPatch::crop(&m.cells[i], &gt.visibility[i], gt.normals.as_ref().map(|n| &n[i]), 0, 0, w, h)?;
            let tape = Tape::new();
            let bound = model.bind_frozen(&tape);
            let batch = render_rays(&bound, &tape, &rays, &vec![f as f32; rays.len()], opts, None)?;
            let patch = RenderedPatch {
                width: w,
                height: h,
                rgb: batch.rgb_on_white()?,
                alpha: batch.alpha,
                depth: batch.depth,
                normal: batch.normal,
            };
            let (_, t) = reconstruction_loss(&patch, &target, &config.weights)?;
            acc.add_scaled(&t, 1.0 / (m.views * m.frames) as f32);
        }
    }
    Ok(acc)
}

/// Renders every (view, frame) cell, keeping normal and depth maps.
pub fn render_matrix(
    model: &DynNerfModel,
    camera: &OrbitCamera,
    poses: &[CameraPose],
    frames: usize,
    width: usize,
    height: usize,
    samples: usize,
) -> Result<ImageMatrix> {
    if frames > model.config.frames {
        return Err(Error::config(format!("{frames} frames requested from a {}-frame model", model.config.frames)));
    }
    let jobs: Vec<(usize, usize)> = (0..poses.len()).flat_map(|v| (0..frames).map(move |f| (v, f))).collect();
    let render = |&(v, f): &(usize, usize)| render_view(model, camera, &poses[v], f as f32, width, height, samples);
    #[cfg(feature = "parallel")]
    let outs: Vec<_> = jobs.par_iter().map(render).collect::<Result<_>>()?;
    #[cfg(not(feature = "parallel"))]
    let outs: Vec<_> = jobs.iter().map(render).collect::<Result<_>>()?;
    let mut cells = Vec::with_capacity(outs.len());
    let mut normals = Vec::with_capacity(outs.len());
    let mut depths: Vec<Image> = Vec::with_capacity(outs.len());
    for o in outs {
        cells.push(o.rgba());
        normals.push(o.normal);
        depths.push(o.depth);
    }
    let mut m = ImageMatrix::new(cells, poses.len(), frames, poses.to_vec(), (0..frames).collect())?;
    m.normals = Some(normals);
    m.depths = Some(depths);
    Ok(m)
}

/// Renders the stage-1 model at the targets' poses, refines the renders and
/// rebuilds visibility from the rendered normals.
pub fn stage2_refine_targets(
    model: &DynNerfModel,
    gt: &PseudoGroundTruth,
    config: &OptimConfig,
    refiner: &dyn Refiner,
) -> Result<PseudoGroundTruth> {
    let m = &gt.matrix;
    let rendered = render_matrix(model, &config.camera, &m.poses, m.frames, m.width(), m.height(), config.samples_per_ray)?;
    let mut refined = refiner.refine(&rendered, config.stage2_noise_step)?;
    let same = refined.views == rendered.views
        && refined.frames == rendered.frames
        && refined.cells.len() == rendered.cells.len()
        && refined
            .cells
            .iter()
            .zip(&rendered.cells)
            .all(|(a, b)| a.same_size(b) && a.channels == b.channels);
    if !same {
        return Err(Error::Contract(format!("refiner {} changed the matrix shape", refiner.name())));
    }
    refined.poses = m.poses.clone();
    refined.frame_indices = m.frame_indices.clone();
    refined.normals = rendered.normals;
    refined.depths = rendered.depths;
    PseudoGroundTruth::from_matrix(refined, &config.camera)
}

#[derive(Clone, Debug)]
pub struct FitReport {
    pub stage1: StageReport,
    pub stage2: StageReport,
    /// The model as it stood after stage 1.
    pub stage1_model: DynNerfModel,
    pub stage2_targets: PseudoGroundTruth,
}

/// Stage 1, target refinement, stage 2. The optimizer state carries over
/// between the stages.
pub fn fit_two_stage(model: &mut DynNerfModel, gt: &PseudoGroundTruth, config: &OptimConfig, refiner: &dyn Refiner) -> Result<FitReport> {
    let mut adam = new_optimizer(config);
    let stage1 = optimize_stage_with(model, gt, config, Stage::One, &mut adam)?;
    let stage1_model = model.clone();
    let targets = stage2_refine_targets(model, gt, config, refiner)?;
    let stage2 = optimize_stage_with(model, &targets, config, Stage::Two, &mut adam)?;
    Ok(FitReport {
        stage1,
        stage2,
        stage1_model,
        stage2_targets: targets,
    })
}
