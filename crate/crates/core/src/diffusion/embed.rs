//! Sinusoidal encodings for camera pose, frame index and noise level.

use crate::camera::CameraPose;

const FREQS: usize = 8;

/// Elevation (16) + sin/cos azimuth each through 8 frequency pairs (32).
pub const CAMERA_ENCODING_DIM: usize = 6 * FREQS;
pub const FRAME_ENCODING_DIM: usize = 2 * FREQS;

fn push_octaves(out: &mut Vec<f32>, x: f64) {
    for k in 0..FREQS {
        let a = x * (1u32 << k) as f64;
        out.push(a.sin() as f32);
        out.push(a.cos() as f32);
    }
}

/// Azimuth enters only through `(sin a, cos a)`, so `a` and `a + 360`
/// encode identically.
pub fn camera_encoding(pose: &CameraPose) -> Vec<f32> {
    let e = (pose.elevation_deg as f64).to_radians();
    let a = (pose.azimuth_wrapped() as f64).to_radians();
    let mut out = Vec::with_capacity(CAMERA_ENCODING_DIM);
    push_octaves(&mut out, e);
    push_octaves(&mut out, a.sin());
    push_octaves(&mut out, a.cos());
    out
}

/// Transformer-style timestep encoding of an integer frame index.
pub fn frame_encoding(index: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(FRAME_ENCODING_DIM);
    for k in 0..FREQS {
        let w = 1.0 / 10_000f64.powf(k as f64 / FREQS as f64);
        let a = index as f64 * w;
        out.push(a.sin() as f32);
        out.push(a.cos() as f32);
    }
    out
}

/// Encoding of `ln(sigma) / 4`.
pub fn noise_encoding(sigma: f32) -> Vec<f32> {
    let mut out = Vec::with_capacity(FRAME_ENCODING_DIM);
    push_octaves(&mut out, (sigma.max(1e-8) as f64).ln() / 4.0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn azimuth_wraps() {
        let a = camera_encoding(&CameraPose { elevation_deg: 5.0, azimuth_deg: 30.0 });
        let b = camera_encoding(&CameraPose { elevation_deg: 5.0, azimuth_deg: 390.0 });
        assert_eq!(a.len(), CAMERA_ENCODING_DIM);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn frame_codes_differ() {
        assert_eq!(frame_encoding(0).len(), FRAME_ENCODING_DIM);
        assert_ne!(frame_encoding(0), frame_encoding(1));
    }
}
