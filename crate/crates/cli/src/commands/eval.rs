use super::load_matrix;
use crate::manifest::{manifest_beside, write_json_atomic, RunRecorder};
use dyn4d_core::metrics::{evaluate, Metric, ProjectionEmbedder};
use dyn4d_core::Error;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub generated: String,
    pub reference: String,
    pub views: usize,
    pub frames: usize,
    pub embedder: ProjectionEmbedder,
    pub metrics: BTreeMap<String, f64>,
}

pub fn parse_metrics(list: &str) -> Result<Vec<Metric>, Error> {
    let ms: Vec<Metric> = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(Metric::parse)
        .collect::<Result<_, _>>()?;
    if ms.is_empty() {
        return Err(Error::Config("no metrics requested".into()));
    }
    Ok(ms)
}

pub fn run(generated: &Path, reference: &Path, metrics: &str, out: &Path) -> Result<EvalReport, Error> {
    let ms = parse_metrics(metrics)?;
    let mut rec = RunRecorder::start("eval");
    rec.input(generated);
    rec.input(reference);
    let g = load_matrix(generated)?;
    let r = load_matrix(reference)?;
    let embedder = ProjectionEmbedder::default();
    let values = evaluate(&g, &r, &ms, &embedder)?;
    let report = EvalReport {
        generated: generated.display().to_string(),
        reference: reference.display().to_string(),
        views: g.views,
        frames: g.frames,
        embedder,
        metrics: values,
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_json_atomic(out, &report)?;
    rec.output(out);
    let names: Vec<&str> = ms.iter().map(Metric::name).collect();
    rec.finish(&serde_json::json!({ "metrics": names, "embedder": embedder }), embedder.seed, &manifest_beside(out))?;
    Ok(report)
}
