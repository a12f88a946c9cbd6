use super::ReferenceCondition;
use crate::error::{Error, Result};
use crate::rng::substream_at;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

pub const NUM_NOISE_LEVELS: usize = 50;
const SIGMA_MIN: f32 = 0.02;
const SIGMA_MAX: f32 = 2.0;

/// Linear noise grid, increasing with the level index.
pub fn sigma_grid() -> Vec<f32> {
    (0..NUM_NOISE_LEVELS)
        .map(|n| SIGMA_MIN + (SIGMA_MAX - SIGMA_MIN) * n as f32 / (NUM_NOISE_LEVELS - 1) as f32)
        .collect()
}

/// Sets the mask flag with probability `p_mask`; an already masked
/// reference stays masked.
pub fn apply_random_ref_masking(reference: &ReferenceCondition, p_mask: f32, seed: u64) -> Result<ReferenceCondition> {
    if !(0.0..=1.0).contains(&p_mask) {
        return Err(Error::config(format!("mask probability {p_mask} outside [0, 1]")));
    }
    let draw: f32 = substream_at(seed, "ref-mask", 0).random();
    let mut out = reference.clone();
    out.mask_flag |= draw < p_mask;
    Ok(out)
}

fn ratio(i: usize, n: usize) -> f32 {
    if n <= 1 {
        0.0
    } else {
        i as f32 / (n - 1) as f32
    }
}

/// Guidance scale ramping from `s_min` at the anchor cell to `s_max` at the
/// last view or last frame.
pub fn cfg_scale_schedule(s_min: f32, s_max: f32, view_idx: usize, views: usize, frame_idx: usize, frames: usize) -> Result<f32> {
    if views == 0 || frames == 0 {
        return Err(Error::config("guidance schedule needs at least one view and frame"));
    }
    if !(s_min <= s_max) {
        return Err(Error::config(format!("guidance bounds {s_min} > {s_max}")));
    }
    if view_idx >= views || frame_idx >= frames {
        return Err(Error::config(format!(
            "cell ({view_idx}, {frame_idx}) outside {views} views x {frames} frames"
        )));
    }
    let t = ratio(view_idx, views).max(ratio(frame_idx, frames));
    Ok(s_min + (s_max - s_min) * t)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtensionWindow {
    pub start: usize,
    /// Exclusive.
    pub end: usize,
    /// Frame whose generated views condition this window; `None` means the
    /// reference is masked.
    pub anchor: Option<usize>,
}

/// Windows of `window_f` frames overlapping by one, the last one clipped.
pub fn autoregressive_extension_plan(total_frames: usize, window_f: usize) -> Result<Vec<ExtensionWindow>> {
    if window_f < 2 {
        return Err(Error::config(format!("window of {window_f} frames; need at least 2")));
    }
    if total_frames == 0 {
        return Err(Error::config("no frames to generate"));
    }
    let mut out = vec![ExtensionWindow {
        start: 0,
        end: window_f.min(total_frames),
        anchor: None,
    }];
    while out.last().expect("non-empty").end < total_frames {
        let start = out.last().expect("non-empty").end - 1;
        out.push(ExtensionWindow {
            start,
            end: (start + window_f).min(total_frames),
            anchor: Some(start),
        });
    }
    Ok(out)
}
