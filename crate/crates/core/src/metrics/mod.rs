//! Image and video metrics over image matrices: per-cell pixel metrics and
//! Fréchet distances between sequence features read from the matrix in
//! different scan orders.

mod embed;
mod frechet;
mod pixel;
mod scan;

pub use embed::{ProjectionEmbedder, SequenceEmbedder, SequenceFeature};
pub use frechet::{frechet_distance, GaussianStats, SHRINKAGE};
pub use pixel::{mse, psnr, ssim, PSNR_CAP, SSIM_SIGMA, SSIM_WINDOW};
pub use scan::{scan_order, ScanKind};

use crate::error::{Error, Result};
use crate::matrix::{Image, ImageMatrix};
use std::collections::BTreeMap;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Embeds every sequence `kind` reads from `m`.
pub fn embed_matrix(kind: ScanKind, m: &ImageMatrix, embedder: &dyn SequenceEmbedder) -> Result<Vec<SequenceFeature>> {
    let seqs = scan_order(kind, m.views, m.frames);
    if seqs.iter().any(|s| s.len() < 2) {
        return Err(Error::Metric(format!(
            "{} needs {}, matrix has {} views x {} frames",
            kind.name(),
            kind.minimum(),
            m.views,
            m.frames
        )));
    }
    let run = |s: &Vec<(usize, usize)>| {
        let imgs: Vec<&Image> = s.iter().map(|&(v, f)| m.cell(v, f)).collect();
        embedder.embed(&imgs)
    };
    #[cfg(feature = "parallel")]
    let out = seqs.par_iter().map(run).collect();
    #[cfg(not(feature = "parallel"))]
    let out = seqs.iter().map(run).collect();
    out
}

/// Fréchet distance between sequence statistics pooled over all generated
/// and all reference matrices.
pub fn fvd(kind: ScanKind, generated: &[ImageMatrix], reference: &[ImageMatrix], embedder: &dyn SequenceEmbedder) -> Result<f64> {
    if generated.is_empty() || generated.len() != reference.len() {
        return Err(Error::Metric(format!("{} generated vs {} reference matrices", generated.len(), reference.len())));
    }
    let mut fg = Vec::new();
    let mut fr = Vec::new();
    for (g, r) in generated.iter().zip(reference) {
        if g.views != r.views || g.frames != r.frames {
            return Err(Error::dim(format!("matrices {}x{} and {}x{}", g.views, g.frames, r.views, r.frames)));
        }
        fg.extend(embed_matrix(kind, g, embedder)?);
        fr.extend(embed_matrix(kind, r, embedder)?);
    }
    frechet_distance(&GaussianStats::fit(&fg, SHRINKAGE)?, &GaussianStats::fit(&fr, SHRINKAGE)?)
}

pub fn fvd_variant(kind: ScanKind, generated: &ImageMatrix, reference: &ImageMatrix, embedder: &dyn SequenceEmbedder) -> Result<f64> {
    fvd(kind, std::slice::from_ref(generated), std::slice::from_ref(reference), embedder)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Metric {
    Psnr,
    Ssim,
    Mse,
    Fvd(ScanKind),
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::Psnr,
        Metric::Ssim,
        Metric::Mse,
        Metric::Fvd(ScanKind::F),
        Metric::Fvd(ScanKind::V),
        Metric::Fvd(ScanKind::Diag),
        Metric::Fvd(ScanKind::Fv4d),
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Psnr => "psnr",
            Metric::Ssim => "ssim",
            Metric::Mse => "mse",
            Metric::Fvd(k) => k.name(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::config(format!("unknown metric {s:?}")))
    }
}

fn color(img: &Image) -> Image {
    if img.channels >= 3 {
        img.rgb()
    } else {
        img.clone()
    }
}

/// Requested metrics by name. Pixel metrics use the color channels and are
/// averaged over cells.
pub fn evaluate(generated: &ImageMatrix, reference: &ImageMatrix, metrics: &[Metric], embedder: &dyn SequenceEmbedder) -> Result<BTreeMap<String, f64>> {
    if generated.views != reference.views || generated.frames != reference.frames {
        return Err(Error::dim(format!(
            "matrices {}x{} and {}x{}",
            generated.views, generated.frames, reference.views, reference.frames
        )));
    }
    let mut out = BTreeMap::new();
    for m in metrics {
        let value = match m {
            Metric::Fvd(k) => fvd_variant(*k, generated, reference, embedder)?,
            _ => {
                let f = match m {
                    Metric::Psnr => psnr,
                    Metric::Ssim => ssim,
                    _ => mse,
                };
                let mut acc = 0.0;
                for (g, r) in generated.cells.iter().zip(&reference.cells) {
                    acc += f(&color(g), &color(r))?;
                }
                acc / generated.cells.len() as f64
            }
        };
        out.insert(m.name().to_string(), value);
    }
    Ok(out)
}
