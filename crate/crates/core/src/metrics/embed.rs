use crate::error::{Error, Result};
use crate::matrix::Image;
use crate::rng::{substream, substream_at};
use rand_distr::{Distribution, StandardNormal};

/// Fixed-length summary of an ordered image sequence.
pub type SequenceFeature = Vec<f64>;

/// Maps an ordered image sequence to a feature vector.
pub trait SequenceEmbedder: Sync {
    fn dim(&self) -> usize;
    fn embed(&self, images: &[&Image]) -> Result<SequenceFeature>;
}

/// Seeded random projections of 16x16 grayscale thumbnails. The first half
/// of the feature projects the concatenated frame-to-frame differences
/// (step `t` has its own projection block), the second half projects the
/// mean frame.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ProjectionEmbedder {
    pub dim: usize,
    pub size: usize,
    pub seed: u64,
}

impl Default for ProjectionEmbedder {
    fn default() -> Self {
        Self { dim: 64, size: 16, seed: 0 }
    }
}

fn gray_thumbnail(img: &Image, s: usize) -> Vec<f64> {
    let (w, h) = (img.width, img.height);
    let span = |i: usize, n: usize| {
        let a = i * n / s;
        (a, ((i + 1) * n / s).max(a + 1))
    };
    let ch = img.channels.min(3);
    let mut out = Vec::with_capacity(s * s);
    for oy in 0..s {
        let (y0, y1) = span(oy, h);
        for ox in 0..s {
            let (x0, x1) = span(ox, w);
            let mut acc = 0.0;
            for y in y0..y1 {
                for x in x0..x1 {
                    acc += img.pixel(x, y)[..ch].iter().map(|&v| v as f64).sum::<f64>() / ch as f64;
                }
            }
            out.push(acc / ((y1 - y0) * (x1 - x0)) as f64);
        }
    }
    out
}

impl ProjectionEmbedder {
    fn projection(&self, mut rng: crate::rng::Rng) -> Vec<f64> {
        let n = self.size * self.size;
        let std = 1.0 / (n as f64).sqrt();
        (0..self.dim / 2 * n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * std
            })
            .collect()
    }

    fn project(&self, p: &[f64], x: &[f64], out: &mut [f64]) {
        let n = x.len();
        for (o, row) in out.iter_mut().zip(p.chunks_exact(n)) {
            *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}

impl SequenceEmbedder for ProjectionEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, images: &[&Image]) -> Result<SequenceFeature> {
        if images.len() < 2 {
            return Err(Error::Sequence(format!("need at least 2 images to embed a sequence, got {}", images.len())));
        }
        if self.dim < 2 || self.dim % 2 != 0 || self.size == 0 {
            return Err(Error::config(format!("embedder dim {} must be even and >= 2", self.dim)));
        }
        let thumbs: Vec<Vec<f64>> = images.iter().map(|im| gray_thumbnail(im, self.size)).collect();
        let half = self.dim / 2;
        let mut feat = vec![0.0; self.dim];
        for (t, pair) in thumbs.windows(2).enumerate() {
            let diff: Vec<f64> = pair[1].iter().zip(&pair[0]).map(|(a, b)| a - b).collect();
            if diff.iter().any(|&d| d != 0.0) {
                let p = self.projection(substream_at(self.seed, "embed-motion", t as u64));
                self.project(&p, &diff, &mut feat[..half]);
            }
        }
        let n = thumbs.len() as f64;
        let mean: Vec<f64> = (0..thumbs[0].len()).map(|i| thumbs.iter().map(|t| t[i]).sum::<f64>() / n).collect();
        let p = self.projection(substream(self.seed, "embed-appearance"));
        self.project(&p, &mean, &mut feat[half..]);
        if feat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite sequence feature".into()));
        }
        Ok(feat)
    }
}
