use super::OptimConfig;
use crate::camera::CameraPose;
use crate::rng::{substream_at, Rng};
use rand::seq::index::sample;
use rand::Rng as _;

const TARGET_AZIMUTHS: [f32; 4] = [0.0, 90.0, 180.0, 270.0];

fn angular_distance(a: f32, b: f32) -> f32 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// The views nearest to azimuths 0, 90, 180 and 270, in that order, each
/// view used at most once. With fewer than 4 views, all of them. When
/// `view_jitter_deg` is positive, one slot per step may move to another
/// unused view within that many degrees of its target.
pub fn sample_training_views(step: usize, poses: &[CameraPose], config: &OptimConfig) -> Vec<usize> {
    if poses.len() <= TARGET_AZIMUTHS.len() {
        return (0..poses.len()).collect();
    }
    let az: Vec<f32> = poses.iter().map(|p| p.azimuth_wrapped()).collect();
    let mut chosen: Vec<usize> = Vec::with_capacity(4);
    for &t in &TARGET_AZIMUTHS {
        let best = (0..az.len())
            .filter(|i| !chosen.contains(i))
            .min_by(|&i, &j| angular_distance(az[i], t).total_cmp(&angular_distance(az[j], t)).then(i.cmp(&j)))
            .expect("more than 4 views");
        chosen.push(best);
    }
    if config.view_jitter_deg > 0.0 {
        let mut rng = substream_at(config.seed, "view-jitter", step as u64);
        let slot = step % TARGET_AZIMUTHS.len();
        let t = TARGET_AZIMUTHS[slot];
        let mut candidates: Vec<usize> = (0..az.len())
            .filter(|i| !chosen.contains(i) && angular_distance(az[*i], t) <= config.view_jitter_deg)
            .collect();
        candidates.push(chosen[slot]);
        chosen[slot] = candidates[rng.random_range(0..candidates.len())];
    }
    chosen
}

/// Width of the frame window at `step` of stage 1.
pub fn frame_window(step: usize, frames: usize, config: &OptimConfig) -> usize {
    let frames = frames.max(1);
    let w = match &config.frame_window_schedule {
        Some(s) => s.iter().take_while(|(at, _)| *at <= step).last().map_or(1, |p| p.1),
        None => {
            let ramp = (config.stage1_iters / 2).max(1);
            if step >= ramp {
                frames
            } else {
                (frames * step).div_ceil(ramp)
            }
        }
    };
    w.clamp(1, frames)
}

pub(crate) fn draw_frames(rng: &mut Rng, window: usize, frames: usize, count: usize) -> Vec<usize> {
    let k = count.min(window).max(1);
    let mut out = sample(rng, window, k).into_vec();
    if window < frames && !out.contains(&0) {
        out[0] = 0;
    }
    out.sort_unstable();
    out
}

/// Distinct frames drawn uniformly from the current window; frame 0 is
/// always among them until the window spans every frame.
pub fn sample_training_frames(step: usize, frames: usize, config: &OptimConfig) -> Vec<usize> {
    let window = frame_window(step, frames, config);
    let mut rng = substream_at(config.seed, "frame-sample", step as u64);
    draw_frames(&mut rng, window, frames, config.frames_per_step)
}
