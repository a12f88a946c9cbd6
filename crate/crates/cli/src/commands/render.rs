use crate::checkpoint;
use crate::manifest::{RunRecorder, RUN_MANIFEST_NAME};
use dyn4d_core::camera::{CameraPose, OrbitCamera};
use dyn4d_core::matrix::{Image, ImageMatrix};
use dyn4d_core::optim::render_matrix;
use dyn4d_core::Error;
use serde::Serialize;
use std::path::{Path, PathBuf};

pub struct RenderArgs {
    pub checkpoint: PathBuf,
    pub poses: Option<PathBuf>,
    pub views: usize,
    pub elevation: f32,
    pub frames: Option<usize>,
    pub width: usize,
    pub height: usize,
    pub samples: usize,
    pub out: PathBuf,
}

#[derive(Serialize)]
struct RenderEcho<'a> {
    checkpoint: String,
    poses: &'a [CameraPose],
    frames: usize,
    width: usize,
    height: usize,
    samples: usize,
    camera: OrbitCamera,
}

pub fn load_poses(path: &Path) -> Result<Vec<CameraPose>, Error> {
    let raw: Vec<CameraPose> = serde_json::from_slice(&std::fs::read(path)?)?;
    if raw.is_empty() {
        return Err(Error::Config(format!("{} lists no poses", path.display())));
    }
    raw.into_iter().map(|p| CameraPose::new(p.elevation_deg, p.azimuth_deg)).collect()
}

pub fn run(a: &RenderArgs) -> Result<(), Error> {
    if a.width == 0 || a.height == 0 || a.views == 0 {
        return Err(Error::Config("render needs positive width, height and view count".into()));
    }
    let mut rec = RunRecorder::start("render");
    rec.input(&a.checkpoint);
    let (model, meta) = checkpoint::load_nerf(&a.checkpoint)?;
    let camera: OrbitCamera = meta
        .pointer("/extra/camera")
        .cloned()
        .map(serde_json::from_value)
        .transpose()?
        .unwrap_or_default();
    let poses = match &a.poses {
        Some(p) => {
            rec.input(p);
            load_poses(p)?
        }
        None => CameraPose::orbit(a.views, a.elevation),
    };
    let frames = a.frames.unwrap_or(model.config.frames);
    let m = render_matrix(&model, &camera, &poses, frames, a.width, a.height, a.samples)?;
    m.save_dir(&a.out)?;
    rec.output(a.out.join("manifest.json"));
    let echo = RenderEcho {
        checkpoint: a.checkpoint.display().to_string(),
        poses: &poses,
        frames,
        width: a.width,
        height: a.height,
        samples: a.samples,
        camera,
    };
    rec.finish(&echo, 0, &a.out.join(RUN_MANIFEST_NAME))?;
    Ok(())
}

/// Color channels of every cell (already over white), views as rows and
/// frames as columns.
pub fn grid(m: &ImageMatrix) -> Result<Image, Error> {
    let (w, h) = (m.width(), m.height());
    let mut out = Image::filled(w * m.frames, h * m.views, &[1.0, 1.0, 1.0]);
    for v in 0..m.views {
        for f in 0..m.frames {
            let cell = m.cell(v, f);
            for y in 0..h {
                for x in 0..w {
                    let p = cell.pixel(x, y);
                    let rgb = if cell.channels >= 3 { [p[0], p[1], p[2]] } else { [p[0]; 3] };
                    out.pixel_mut(f * w + x, v * h + y).copy_from_slice(&rgb);
                }
            }
        }
    }
    Ok(out)
}
