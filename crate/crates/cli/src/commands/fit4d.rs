use super::{csv_error, load_matrix};
use crate::checkpoint;
use crate::cli::RefinerKind;
use crate::manifest::{write_json_atomic, RunRecorder, RUN_MANIFEST_NAME};
use dyn4d_core::matrix::ImageMatrix;
use dyn4d_core::metrics::{mse, psnr};
use dyn4d_core::nerf::{DynNerfModel, NerfConfig};
use dyn4d_core::optim::{fit_two_stage, render_matrix, IdentityRefiner, OptimConfig, OracleRefiner, PseudoGroundTruth, Refiner, StageReport, ToyDenoiserRefiner};
use dyn4d_core::Error;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Fit4dConfig {
    /// Drives model initialization and every optimizer draw.
    pub seed: u64,
    pub optim: OptimConfig,
    /// `frames` is taken from the input matrix.
    pub nerf: NerfConfig,
    pub oracle_blend: f32,
    /// Samples per ray for the stage grids and error report.
    pub eval_samples: usize,
    pub toy_latent_size: usize,
    pub toy_guidance: (f32, f32),
}

impl Default for Fit4dConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            optim: OptimConfig::default(),
            nerf: NerfConfig::default(),
            oracle_blend: 0.5,
            eval_samples: 64,
            toy_latent_size: 8,
            toy_guidance: (1.0, 2.5),
        }
    }
}

pub struct Fit4dArgs {
    pub input: PathBuf,
    pub config: Option<PathBuf>,
    pub refiner: RefinerKind,
    pub out: PathBuf,
    pub ground_truth: Option<PathBuf>,
    pub denoiser: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatrixError {
    pub mse: f64,
    pub psnr: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitSummary {
    pub refiner: String,
    pub stage1_final_loss: Option<f32>,
    pub stage2_final_loss: Option<f32>,
    /// Full-matrix error of each stage's renders against the input.
    pub stage1_vs_input: MatrixError,
    pub stage2_vs_input: MatrixError,
    /// Same against `--ground-truth`, when given.
    pub stage1_vs_ground_truth: Option<MatrixError>,
    pub stage2_vs_ground_truth: Option<MatrixError>,
    pub fit_seconds: f64,
}

/// Mean over cells of RGB MSE and PSNR.
pub fn matrix_error(a: &ImageMatrix, b: &ImageMatrix) -> Result<MatrixError, Error> {
    if a.cells.len() != b.cells.len() {
        return Err(Error::Contract(format!("{} cells against {}", a.cells.len(), b.cells.len())));
    }
    let (mut e, mut p) = (0.0, 0.0);
    for (x, y) in a.cells.iter().zip(&b.cells) {
        e += mse(&x.rgb(), &y.rgb())?;
        p += psnr(&x.rgb(), &y.rgb())?;
    }
    let n = a.cells.len() as f64;
    Ok(MatrixError { mse: e / n, psnr: p / n })
}

fn write_losses(path: &Path, stages: [(&str, &StageReport); 2]) -> Result<(), Error> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(["stage", "step", "total", "mse", "lpips", "mask", "normal", "depth_smooth", "normal_smooth"])
        .map_err(csv_error)?;
    for (stage, r) in stages {
        for (i, t) in r.terms.iter().enumerate() {
            let vals = [t.total, t.mse, t.lpips, t.mask, t.normal, t.depth_smooth, t.normal_smooth];
            let mut row = vec![stage.to_string(), i.to_string()];
            row.extend(vals.iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn run(a: &Fit4dArgs) -> Result<FitSummary, Error> {
    let mut cfg: Fit4dConfig = crate::config::load(a.config.as_deref())?;
    cfg.optim.seed = cfg.seed;
    cfg.optim.validate()?;
    if cfg.eval_samples < 2 {
        return Err(Error::Config("eval_samples must be at least 2".into()));
    }
    let mut rec = RunRecorder::start("fit4d");
    rec.input(&a.input);
    let input = load_matrix(&a.input)?;
    cfg.nerf.frames = input.frames;
    let ground_truth = match &a.ground_truth {
        Some(p) => {
            rec.input(p);
            Some(load_matrix(p)?)
        }
        None => None,
    };
    let refiner: Box<dyn Refiner> = match a.refiner {
        RefinerKind::Identity => Box::new(IdentityRefiner),
        RefinerKind::Oracle => {
            let gt = ground_truth
                .clone()
                .ok_or_else(|| Error::Config("the oracle refiner needs --ground-truth".into()))?;
            Box::new(OracleRefiner {
                ground_truth: gt,
                blend: cfg.oracle_blend,
            })
        }
        RefinerKind::ToyDenoiser => {
            let path = a
                .denoiser
                .as_ref()
                .ok_or_else(|| Error::Config("the toy-denoiser refiner needs --denoiser".into()))?;
            rec.input(path);
            let (denoiser, _) = checkpoint::load_denoiser(path)?;
            Box::new(ToyDenoiserRefiner {
                denoiser,
                latent_size: cfg.toy_latent_size,
                guidance: cfg.toy_guidance,
                seed: cfg.seed,
            })
        }
    };

    let pgt = PseudoGroundTruth::from_matrix(input.clone(), &cfg.optim.camera)?;
    let mut model = DynNerfModel::new(cfg.nerf.clone(), cfg.seed)?;
    let started = Instant::now();
    let fit = fit_two_stage(&mut model, &pgt, &cfg.optim, refiner.as_ref())?;
    let fit_seconds = started.elapsed().as_secs_f64();

    std::fs::create_dir_all(&a.out)?;
    let meta = |stage: u8| json!({ "stage": stage, "camera": cfg.optim.camera, "seed": cfg.seed });
    let model_path = a.out.join("model");
    checkpoint::save_nerf(&model_path, &model, meta(2))?;
    checkpoint::save_nerf(&a.out.join("stage1_model"), &fit.stage1_model, meta(1))?;
    rec.output(model_path.with_extension("json"));
    rec.output(a.out.join("stage1_model.json"));

    let losses = a.out.join("losses.csv");
    write_losses(&losses, [("1", &fit.stage1), ("2", &fit.stage2)])?;
    rec.output(&losses);

    let (w, h) = (input.width(), input.height());
    let cam = &cfg.optim.camera;
    let r1 = render_matrix(&fit.stage1_model, cam, &input.poses, input.frames, w, h, cfg.eval_samples)?;
    let r2 = render_matrix(&model, cam, &input.poses, input.frames, w, h, cfg.eval_samples)?;
    for (name, m) in [("stage1_grid.png", &r1), ("stage2_grid.png", &r2)] {
        let p = a.out.join(name);
        super::render::grid(m)?.save_png(&p)?;
        rec.output(p);
    }

    let summary = FitSummary {
        refiner: refiner.name().to_string(),
        stage1_final_loss: fit.stage1.losses.last().copied(),
        stage2_final_loss: fit.stage2.losses.last().copied(),
        stage1_vs_input: matrix_error(&r1, &input)?,
        stage2_vs_input: matrix_error(&r2, &input)?,
        stage1_vs_ground_truth: ground_truth.as_ref().map(|g| matrix_error(&r1, g)).transpose()?,
        stage2_vs_ground_truth: ground_truth.as_ref().map(|g| matrix_error(&r2, g)).transpose()?,
        fit_seconds,
    };
    let report = a.out.join("fit_report.json");
    write_json_atomic(&report, &summary)?;
    rec.output(&report);
    rec.finish(&cfg, cfg.seed, &a.out.join(RUN_MANIFEST_NAME))?;
    Ok(summary)
}
