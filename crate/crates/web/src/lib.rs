//! wasm-bindgen entry points for the static demo page in `www/`.

use dyn4d_core::camera::{CameraPose, OrbitCamera};
use dyn4d_core::curation::{rectify, waving_arm, CurationConfig, SceneSpec};
use dyn4d_core::matrix::Image;
use dyn4d_core::metrics::{scan_order, ScanKind};
use dyn4d_core::optim::visibility_map;
use serde_json::json;
use wasm_bindgen::prelude::*;

fn msg<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Renders one frame of the demo scene as `size x size` RGBA bytes.
/// `mode` is `"rgb"` or `"visibility"`; the latter shows the per-pixel
/// weight a ray from this camera would receive.
#[wasm_bindgen]
pub fn render_frame(azimuth_deg: f32, elevation_deg: f32, frame: f32, size: usize, mode: &str) -> Result<Vec<u8>, String> {
    if !(1..=256).contains(&size) {
        return Err(format!("size {size} outside 1..=256"));
    }
    let pose = CameraPose::new(elevation_deg, azimuth_deg).map_err(msg)?;
    let cam = OrbitCamera::default();
    let scene = SceneSpec::demo();
    let view = cam.frame(&pose);
    let mut rgba = Image::filled(size, size, &[1.0, 1.0, 1.0, 1.0]);
    let mut normals = Image::new(size, size, 3);
    for y in 0..size {
        for x in 0..size {
            let (o, d) = cam.pixel_ray(&view, x as f32, y as f32, size, size);
            if let Some(h) = scene.trace(o, d, 2.0 * cam.radius + 2.0, frame) {
                rgba.pixel_mut(x, y)[..3].copy_from_slice(&h.rgb);
                normals.pixel_mut(x, y).copy_from_slice(&h.normal);
            }
        }
    }
    match mode {
        "rgb" => Ok(rgba.to_rgba8()),
        "visibility" => {
            let vis = visibility_map(&cam, &pose, &normals).map_err(msg)?;
            let mut out = Vec::with_capacity(size * size * 4);
            for (w, px) in vis.data.iter().zip(rgba.data.chunks(4)) {
                let on = px[..3] != [1.0, 1.0, 1.0];
                let g = if on { (w.clamp(0.0, 1.0) * 255.0).round() as u8 } else { 255 };
                out.extend_from_slice(&[g, g, if on { 96 } else { 255 }, 255]);
            }
            Ok(out)
        }
        other => Err(format!("unknown mode {other:?}")),
    }
}

/// Curates a waving-arm mesh with a per-frame drift along x and a per-frame
/// uniform inflation. Returns the curation report as JSON.
#[wasm_bindgen]
pub fn curate_arm(drift: f32, inflation: f32, min_motion: f32, max_scale_ratio: f32) -> Result<String, String> {
    let mesh = waving_arm(24, [drift, 0.0, 0.0])
        .and_then(|m| {
            m.map_positions(|f, p| {
                let s = 1.0 + inflation * f as f32;
                [p[0] * s, p[1] * s, p[2] * s]
            })
        })
        .map_err(msg)?;
    let cfg = CurationConfig {
        min_motion,
        max_scale_ratio,
        ..Default::default()
    };
    let (_, report) = rectify(&mesh, &cfg).map_err(msg)?;
    let recovered: Vec<f32> = report.global_offsets.iter().map(|o| o[0]).collect();
    Ok(json!({
        "accepted": report.accepted,
        "reject_reason": report.reject_reason.map(|r| r.as_str()),
        "motion_score": report.motion_score,
        "scale_ratio": report.scale_ratio,
        "static_fraction": report.static_fraction,
        "recovered_drift_x": recovered,
    })
    .to_string())
}

/// The `(view, frame)` sequences a metric reads from a `views x frames`
/// matrix, as JSON. `kind` is one of `fvd-f`, `fvd-v`, `fvd-diag`, `fv4d`.
#[wasm_bindgen]
pub fn scan(kind: &str, views: usize, frames: usize) -> Result<String, String> {
    let k = ScanKind::ALL
        .into_iter()
        .find(|k| k.name() == kind)
        .ok_or_else(|| format!("unknown scan {kind:?}"))?;
    if views == 0 || frames == 0 || views > 16 || frames > 16 {
        return Err("views and frames must lie in 1..=16".into());
    }
    Ok(serde_json::to_string(&scan_order(k, views, frames)).map_err(msg)?)
}
