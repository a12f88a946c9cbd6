use super::mesh::AnimatedMesh;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Cells per axis of the partition searched for the most static box.
pub const BOX_GRID: usize = 3;

/// Translations, centre shifts and scale changes smaller than this
/// (relative to the frame-0 extent) are treated as exact identities, so an
/// already rectified mesh passes through bit for bit.
pub const SNAP: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurationConfig {
    /// Offsets at or below this quantile count as static.
    pub static_quantile: f32,
    /// Minimum motion score, in units of the normalized extent.
    pub min_motion: f32,
    /// Bounding-box diagonals must stay within `[1/r, r]` of frame 0's.
    pub max_scale_ratio: f32,
}

impl Default for CurationConfig {
    fn default() -> Self {
        Self {
            static_quantile: 0.25,
            min_motion: 0.02,
            max_scale_ratio: 1.5,
        }
    }
}

impl CurationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.static_quantile > 0.0 && self.static_quantile < 1.0) {
            return Err(Error::config(format!("static quantile {} must lie in (0, 1)", self.static_quantile)));
        }
        if !(self.min_motion.is_finite() && self.min_motion >= 0.0) || !(self.max_scale_ratio >= 1.0 && self.max_scale_ratio.is_finite()) {
            return Err(Error::config("motion threshold must be >= 0 and scale ratio >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    LowMotion,
    ScaleInconsistent,
    Nonfinite,
}

impl RejectReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            RejectReason::LowMotion => "low_motion",
            RejectReason::ScaleInconsistent => "scale_inconsistent",
            RejectReason::Nonfinite => "nonfinite",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurationReport {
    /// Translation subtracted from each frame, in input units.
    pub global_offsets: Vec<[f32; 3]>,
    pub static_fraction: f32,
    pub motion_score: f32,
    /// Bounding-box diagonal relative to frame 0, at the frame furthest from 1.
    pub scale_ratio: f32,
    pub accepted: bool,
    pub reject_reason: Option<RejectReason>,
}

impl CurationReport {
    fn rejected(frames: usize, reason: RejectReason) -> Self {
        Self {
            global_offsets: vec![[0.0; 3]; frames],
            static_fraction: 0.0,
            motion_score: 0.0,
            scale_ratio: f32::NAN,
            accepted: false,
            reject_reason: Some(reason),
        }
    }
}

fn sub(a: [f32; 3], b: [f32; 3]) -> [f64; 3] {
    [a[0] as f64 - b[0] as f64, a[1] as f64 - b[1] as f64, a[2] as f64 - b[2] as f64]
}

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn offsets_f64(mesh: &AnimatedMesh) -> Vec<f64> {
    let base = mesh.frame(0);
    let mut d = vec![0.0f64; mesh.vertex_count()];
    for f in 1..mesh.frame_count() {
        for (di, (&p, &p0)) in d.iter_mut().zip(mesh.frame(f).iter().zip(base)) {
            *di += norm(sub(p, p0));
        }
    }
    let k = (mesh.frame_count() - 1) as f64;
    d.iter_mut().for_each(|v| *v /= k);
    d
}

/// Mean distance of each vertex from its frame-0 position over frames 1..F.
pub fn mean_temporal_offset(mesh: &AnimatedMesh) -> Result<Vec<f32>> {
    if mesh.frame_count() < 2 {
        return Err(Error::Curation("temporal offsets need at least 2 frames".into()));
    }
    Ok(offsets_f64(mesh).into_iter().map(|v| v as f32).collect())
}

/// Marks vertices whose offset is at most the `quantile` order statistic,
/// the `ceil(q N)`-th smallest offset. Ties are all included, so identical
/// offsets mark the whole mesh.
pub fn detect_static_region(offsets: &[f32], quantile: f32) -> Result<Vec<bool>> {
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(Error::config(format!("static quantile {quantile} must lie in (0, 1)")));
    }
    if offsets.is_empty() {
        return Err(Error::Curation("no offsets".into()));
    }
    let mut sorted = offsets.to_vec();
    sorted.sort_by(f32::total_cmp);
    let k = ((quantile as f64 * offsets.len() as f64).ceil() as usize).clamp(1, offsets.len()) - 1;
    let cut = sorted[k];
    Ok(offsets.iter().map(|&d| d.total_cmp(&cut).is_le()).collect())
}

/// Static vertices inside the cell of a 3x3x3 partition of the frame-0
/// bounds holding the most static vertices (lowest cell index on ties).
pub fn static_box(mesh: &AnimatedMesh, static_mask: &[bool]) -> Result<Vec<usize>> {
    if static_mask.len() != mesh.vertex_count() {
        return Err(Error::Curation(format!("mask has {} entries for {} vertices", static_mask.len(), mesh.vertex_count())));
    }
    if !static_mask.contains(&true) {
        return Err(Error::Curation("static mask is empty".into()));
    }
    let (lo, hi) = mesh.bounds(0);
    let cell_of = |p: &[f32; 3]| -> usize {
        let mut idx = 0;
        for k in 0..3 {
            let ext = hi[k] as f64 - lo[k] as f64;
            let c = if ext > 0.0 {
                ((BOX_GRID as f64 * (p[k] as f64 - lo[k] as f64) / ext).floor() as usize).min(BOX_GRID - 1)
            } else {
                0
            };
            idx = idx * BOX_GRID + c;
        }
        idx
    };
    let cells: Vec<usize> = mesh.frame(0).iter().map(cell_of).collect();
    let mut counts = [0usize; BOX_GRID * BOX_GRID * BOX_GRID];
    for (c, &s) in cells.iter().zip(static_mask) {
        if s {
            counts[*c] += 1;
        }
    }
    let best = (0..counts.len()).max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a))).expect("non-empty grid");
    let chosen: Vec<usize> = (0..cells.len()).filter(|&i| static_mask[i] && cells[i] == best).collect();
    if chosen.is_empty() {
        Ok((0..cells.len()).filter(|&i| static_mask[i]).collect())
    } else {
        Ok(chosen)
    }
}

fn translation_f64(mesh: &AnimatedMesh, chosen: &[usize]) -> Vec<[f64; 3]> {
    let base = mesh.frame(0);
    (0..mesh.frame_count())
        .map(|f| {
            if f == 0 {
                return [0.0; 3];
            }
            let mut acc = [0.0f64; 3];
            for &i in chosen {
                let d = sub(mesh.frame(f)[i], base[i]);
                (0..3).for_each(|k| acc[k] += d[k]);
            }
            acc.map(|v| v / chosen.len() as f64)
        })
        .collect()
}

/// Per-frame mean displacement of the most static box; zero at frame 0.
pub fn global_translation(mesh: &AnimatedMesh, static_mask: &[bool]) -> Result<Vec<[f32; 3]>> {
    let chosen = static_box(mesh, static_mask)?;
    Ok(translation_f64(mesh, &chosen).into_iter().map(|t| t.map(|v| v as f32)).collect())
}

/// Subtracts `offsets[f]` from every vertex of frame `f`.
pub fn subtract_translation(mesh: &AnimatedMesh, offsets: &[[f32; 3]]) -> Result<AnimatedMesh> {
    if offsets.len() != mesh.frame_count() {
        return Err(Error::Curation(format!("{} offsets for {} frames", offsets.len(), mesh.frame_count())));
    }
    mesh.map_positions(|f, p| [p[0] - offsets[f][0], p[1] - offsets[f][1], p[2] - offsets[f][2]])
}

/// Removes the global translation, recentres frame 0's bounding box on the
/// origin and scales its largest extent to 1, then scores the result with
/// [`filter`]. A mesh with a degenerate frame-0 extent comes back unchanged
/// and rejected as non-finite.
pub fn rectify(mesh: &AnimatedMesh, config: &CurationConfig) -> Result<(AnimatedMesh, CurationReport)> {
    config.validate()?;
    let frames = mesh.frame_count();
    let (lo, hi) = mesh.bounds(0);
    let extent = (0..3).map(|k| hi[k] as f64 - lo[k] as f64).fold(0.0, f64::max);
    if !(extent.is_finite() && extent > 0.0) {
        return Ok((mesh.clone(), CurationReport::rejected(frames, RejectReason::Nonfinite)));
    }

    let (mut t, static_fraction) = if frames >= 2 {
        let offsets: Vec<f32> = offsets_f64(mesh).into_iter().map(|v| v as f32).collect();
        let mask = detect_static_region(&offsets, config.static_quantile)?;
        let frac = mask.iter().filter(|&&m| m).count() as f32 / mask.len() as f32;
        (translation_f64(mesh, &static_box(mesh, &mask)?), frac)
    } else {
        (vec![[0.0; 3]], 1.0)
    };
    for tf in &mut t {
        if norm(*tf) <= SNAP * extent {
            *tf = [0.0; 3];
        }
    }
    let mut centre = [0.0f64; 3];
    (0..3).for_each(|k| centre[k] = 0.5 * (lo[k] as f64 + hi[k] as f64));
    if norm(centre) <= SNAP * extent {
        centre = [0.0; 3];
    }
    let mut scale = 1.0 / extent;
    if (scale - 1.0).abs() <= SNAP {
        scale = 1.0;
    }

    let out = mesh.map_positions(|f, p| {
        let mut q = [0f32; 3];
        for k in 0..3 {
            q[k] = ((p[k] as f64 - t[f][k] - centre[k]) * scale) as f32;
        }
        q
    })?;
    let mut report = filter(&out, config)?;
    report.global_offsets = t.iter().map(|v| v.map(|x| x as f32)).collect();
    report.static_fraction = static_fraction;
    Ok((out, report))
}

fn diagonal(mesh: &AnimatedMesh, f: usize) -> f64 {
    let (lo, hi) = mesh.bounds(f);
    norm(sub(hi, lo))
}

/// Scores a rectified mesh and accepts or rejects it. Non-finite scores are
/// checked first, then low motion, then scale drift.
pub fn filter(mesh: &AnimatedMesh, config: &CurationConfig) -> Result<CurationReport> {
    config.validate()?;
    let frames = mesh.frame_count();
    let d0 = diagonal(mesh, 0);
    if !(d0.is_finite() && d0 > 0.0) {
        return Ok(CurationReport::rejected(frames, RejectReason::Nonfinite));
    }
    let (motion, static_fraction) = if frames >= 2 {
        let offsets = mean_temporal_offset(mesh)?;
        let mask = detect_static_region(&offsets, config.static_quantile)?;
        let frac = mask.iter().filter(|&&m| m).count() as f32 / mask.len() as f32;
        (offsets.iter().copied().fold(0.0f32, f32::max), frac)
    } else {
        (0.0, 1.0)
    };
    let scale_ratio = (0..frames)
        .map(|f| diagonal(mesh, f) / d0)
        .max_by(|a, b| a.ln().abs().total_cmp(&b.ln().abs()))
        .expect("at least one frame") as f32;
    let reason = if !(motion.is_finite() && scale_ratio.is_finite() && scale_ratio > 0.0) {
        Some(RejectReason::Nonfinite)
    } else if motion < config.min_motion {
        Some(RejectReason::LowMotion)
    } else if scale_ratio > config.max_scale_ratio || scale_ratio < 1.0 / config.max_scale_ratio {
        Some(RejectReason::ScaleInconsistent)
    } else {
        None
    };
    Ok(CurationReport {
        global_offsets: vec![[0.0; 3]; frames],
        static_fraction,
        motion_score: motion,
        scale_ratio,
        accepted: reason.is_none(),
        reject_reason: reason,
    })
}
