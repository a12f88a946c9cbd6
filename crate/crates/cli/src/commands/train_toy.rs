use super::{csv_error, load_matrix};
use crate::checkpoint;
use crate::manifest::{write_json_atomic, RunRecorder, RUN_MANIFEST_NAME};
use dyn4d_core::diffusion::{train_toy, ToyTrainConfig};
use dyn4d_core::Error;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ToySummary {
    pub steps: usize,
    pub initial_eval_loss: f32,
    pub final_eval_loss: f32,
    pub checkpoint: String,
    pub phase1_checkpoint: String,
}

pub fn run(data: &[PathBuf], config: Option<&Path>, out: &Path) -> Result<ToySummary, Error> {
    let cfg: ToyTrainConfig = crate::config::load(config)?;
    let mut rec = RunRecorder::start("train-toy");
    let mut scenes = Vec::with_capacity(data.len());
    for d in data {
        rec.input(d);
        scenes.push(load_matrix(d)?);
    }
    let (model, report) = train_toy(&scenes, &cfg)?;

    std::fs::create_dir_all(out)?;
    let ckpt = out.join("denoiser");
    let phase1 = out.join("denoiser_phase1");
    checkpoint::save_denoiser(&ckpt, &model, json!({ "phase": 2, "seed": cfg.seed }))?;
    checkpoint::save_denoiser(&phase1, &report.phase1, json!({ "phase": 1, "seed": cfg.seed }))?;
    rec.output(ckpt.with_extension("json"));
    rec.output(phase1.with_extension("json"));

    let losses = out.join("losses.csv");
    let mut w = csv::Writer::from_path(&losses).map_err(csv_error)?;
    w.write_record(["step", "phase", "loss"]).map_err(csv_error)?;
    for s in &report.steps {
        w.write_record([s.step.to_string(), s.phase.to_string(), s.loss.to_string()]).map_err(csv_error)?;
    }
    w.flush()?;
    rec.output(&losses);

    let summary = ToySummary {
        steps: report.steps.len(),
        initial_eval_loss: report.initial_eval_loss,
        final_eval_loss: report.final_eval_loss,
        checkpoint: ckpt.display().to_string(),
        phase1_checkpoint: phase1.display().to_string(),
    };
    let path = out.join("summary.json");
    write_json_atomic(&path, &summary)?;
    rec.output(&path);
    rec.finish(&cfg, cfg.seed, &out.join(RUN_MANIFEST_NAME))?;
    Ok(summary)
}
