use crate::manifest::{RunRecorder, RUN_MANIFEST_NAME};
use dyn4d_core::camera::{CameraPose, OrbitCamera};
use dyn4d_core::curation::{box_surface, render_pseudo_dataset, waving_arm, AnimatedMesh, MeshManifest, SceneSpec};
use dyn4d_core::Error;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub scene: SceneSpec,
    pub camera: OrbitCamera,
    pub views: usize,
    pub elevation_deg: f32,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            scene: SceneSpec::demo(),
            camera: OrbitCamera::default(),
            views: 4,
            elevation_deg: 10.0,
            frames: 8,
            width: 64,
            height: 64,
        }
    }
}

pub fn run(out: &Path, config: Option<&Path>, mesh_set: Option<&Path>) -> Result<(), Error> {
    let cfg: SynthConfig = crate::config::load(config)?;
    if cfg.views == 0 || cfg.frames == 0 || cfg.width == 0 || cfg.height == 0 {
        return Err(Error::Config("synth needs at least one view, frame and pixel".into()));
    }
    let mut rec = RunRecorder::start("synth");
    let poses = CameraPose::orbit(cfg.views, cfg.elevation_deg);
    let m = render_pseudo_dataset(&cfg.scene, &cfg.camera, &poses, cfg.frames, cfg.width, cfg.height)?;
    m.save_dir(out)?;
    rec.output(out.join("manifest.json"));
    if let Some(dir) = mesh_set {
        rec.output(write_mesh_fixtures(dir)?);
    }
    rec.finish(&cfg, 0, &out.join(RUN_MANIFEST_NAME))?;
    Ok(())
}

/// Three objects covering each curation verdict: a drifting waving arm
/// (accepted), a drifting rigid box (low motion) and a waving arm that
/// inflates over time (scale inconsistent).
pub fn fixture_meshes() -> Result<Vec<(String, AnimatedMesh)>, Error> {
    const FRAMES: usize = 24;
    let arm = waving_arm(FRAMES, [0.01, -0.005, 0.002])?;
    let (verts, faces) = box_surface([0.0, 0.0, 0.0], [0.3, 0.2, 0.1], 3);
    let frames = (0..FRAMES)
        .map(|f| verts.iter().map(|p| [p[0] + 0.02 * f as f32, p[1], p[2]]).collect())
        .collect();
    let rigid = AnimatedMesh::new(frames, faces, 24.0)?;
    let inflating = waving_arm(FRAMES, [0.0; 3])?.map_positions(|f, p| {
        let s = 1.0 + 0.05 * f as f32;
        [p[0] * s, p[1] * s, p[2] * s]
    })?;
    Ok(vec![
        ("waving_arm".to_string(), arm),
        ("rigid_box".to_string(), rigid),
        ("inflating_arm".to_string(), inflating),
    ])
}

pub fn write_mesh_fixtures(dir: &Path) -> Result<std::path::PathBuf, Error> {
    MeshManifest::write_set(dir, &fixture_meshes()?)
}
