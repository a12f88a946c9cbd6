use super::csv_error;
use crate::manifest::{RunRecorder, RUN_MANIFEST_NAME};
use dyn4d_core::curation::{rectify, AnimatedMesh, CurationConfig, CurationReport, MeshManifest};
use dyn4d_core::Error;
use rayon::prelude::*;
use std::path::Path;

/// One report row per manifest object, in manifest order.
pub struct CurateOutcome {
    pub rows: Vec<(String, CurationReport)>,
    pub manifest: Option<std::path::PathBuf>,
}

pub fn run(meshes: &Path, out: &Path, report: &Path, config: Option<&Path>) -> Result<CurateOutcome, Error> {
    let cfg: CurationConfig = crate::config::load(config)?;
    cfg.validate()?;
    let mut rec = RunRecorder::start("curate");
    rec.input(meshes);
    let manifest = MeshManifest::load(meshes)?;
    let base = meshes.parent().unwrap_or(Path::new("."));

    let results: Vec<(String, AnimatedMesh, CurationReport)> = (0..manifest.objects.len())
        .into_par_iter()
        .map(|i| {
            let mesh = manifest.load_object(base, i)?;
            let (rectified, r) = rectify(&mesh, &cfg)?;
            Ok((manifest.objects[i].id.clone(), rectified, r))
        })
        .collect::<Result<_, Error>>()?;

    std::fs::create_dir_all(out)?;
    let accepted: Vec<(String, AnimatedMesh)> = results
        .iter()
        .filter(|(_, _, r)| r.accepted)
        .map(|(id, m, _)| (id.clone(), m.clone()))
        .collect();
    let written = MeshManifest::write_set(out, &accepted)?;
    rec.output(&written);

    if let Some(dir) = report.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(report).map_err(csv_error)?;
    w.write_record(["object_id", "static_fraction", "motion_score", "scale_ratio", "accepted", "reject_reason"])
        .map_err(csv_error)?;
    for (id, _, r) in &results {
        w.write_record([
            id.clone(),
            r.static_fraction.to_string(),
            r.motion_score.to_string(),
            r.scale_ratio.to_string(),
            r.accepted.to_string(),
            r.reject_reason.map(|x| x.as_str().to_string()).unwrap_or_default(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    rec.output(report);
    rec.finish(&cfg, 0, &out.join(RUN_MANIFEST_NAME))?;

    Ok(CurateOutcome {
        rows: results.into_iter().map(|(id, _, r)| (id, r)).collect(),
        manifest: Some(written),
    })
}
