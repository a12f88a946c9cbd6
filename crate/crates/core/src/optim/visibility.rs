use crate::camera::{CameraPose, OrbitCamera};
use crate::error::{Error, Result};
use crate::matrix::Image;

/// Weights are clipped to `[VISIBILITY_EPS, 1 - VISIBILITY_EPS]` on the foreground.
pub const VISIBILITY_EPS: f32 = 1e-3;

/// Per-pixel `clamp(v . n)` where `v` points from the surface back along the
/// pixel ray. Normals are renormalized; zero normals mark background and get
/// weight 0.
pub fn visibility_map(camera: &OrbitCamera, pose: &CameraPose, normals: &Image) -> Result<Image> {
    if normals.channels != 3 {
        return Err(Error::dim(format!("normal map with {} channels", normals.channels)));
    }
    let (w, h) = (normals.width, normals.height);
    let frame = camera.frame(pose);
    let mut out = Image::new(w, h, 1);
    for y in 0..h {
        for x in 0..w {
            let n = normals.pixel(x, y);
            let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            if !(len > 0.0) {
                continue;
            }
            let (_, d) = camera.pixel_ray(&frame, x as f32, y as f32, w, h);
            let dot = -(d.x * n[0] + d.y * n[1] + d.z * n[2]) / len;
            out.data[y * w + x] = dot.clamp(VISIBILITY_EPS, 1.0 - VISIBILITY_EPS);
        }
    }
    Ok(out)
}

/// Uniform weight on pixels with alpha above one half, zero elsewhere.
pub fn foreground_weights(rgba: &Image) -> Image {
    let mut out = Image::new(rgba.width, rgba.height, 1);
    for (o, px) in out.data.iter_mut().zip(rgba.data.chunks(rgba.channels)) {
        if px[rgba.channels - 1] > 0.5 {
            *o = 1.0 - VISIBILITY_EPS;
        }
    }
    out
}
