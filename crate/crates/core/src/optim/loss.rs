use crate::error::{Error, Result};
use crate::matrix::Image;
use crate::rng::substream;
use crate::tensor::{Tape, Tensor, Var};
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub mse: f32,
    pub lpips: f32,
    pub mask: f32,
    pub normal: f32,
    pub depth_smooth: f32,
    pub normal_smooth: f32,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            mse: 1.0,
            lpips: 0.1,
            mask: 1.0,
            normal: 0.05,
            depth_smooth: 0.05,
            normal_smooth: 0.01,
        }
    }
}

impl LossWeights {
    pub fn zero() -> Self {
        Self {
            mse: 0.0,
            lpips: 0.0,
            mask: 0.0,
            normal: 0.0,
            depth_smooth: 0.0,
            normal_smooth: 0.0,
        }
    }

    /// Whether any active term reads rendered normals.
    pub fn needs_normals(&self) -> bool {
        self.normal > 0.0 || self.normal_smooth > 0.0
    }
}

/// Unweighted term values; inactive terms stay 0. `total` is the weighted sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub mse: f32,
    pub lpips: f32,
    pub mask: f32,
    pub normal: f32,
    pub depth_smooth: f32,
    pub normal_smooth: f32,
    pub total: f32,
}

impl LossTerms {
    fn named(&self) -> [(&'static str, f32); 7] {
        [
            ("mse", self.mse),
            ("lpips", self.lpips),
            ("mask", self.mask),
            ("normal", self.normal),
            ("depth_smooth", self.depth_smooth),
            ("normal_smooth", self.normal_smooth),
            ("total", self.total),
        ]
    }

    /// Name of the first non-finite term, if any.
    pub fn non_finite(&self) -> Option<(&'static str, f32)> {
        self.named().into_iter().find(|(_, v)| !v.is_finite())
    }

    pub fn add_scaled(&mut self, other: &LossTerms, s: f32) {
        self.mse += s * other.mse;
        self.lpips += s * other.lpips;
        self.mask += s * other.mask;
        self.normal += s * other.normal;
        self.depth_smooth += s * other.depth_smooth;
        self.normal_smooth += s * other.normal_smooth;
        self.total += s * other.total;
    }
}

/// A rendered `width x height` patch, pixels row-major.
pub struct RenderedPatch<'t> {
    pub width: usize,
    pub height: usize,
    /// `[N, 3]` over white.
    pub rgb: Var<'t>,
    /// `[N, 1]`.
    pub alpha: Var<'t>,
    /// `[N, 1]`.
    pub depth: Var<'t>,
    /// `[N, 3]`.
    pub normal: Option<Var<'t>>,
}

/// Target values for a patch, pixels row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetPatch {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<f32>,
    pub alpha: Vec<f32>,
    pub weight: Vec<f32>,
    pub normal: Option<Vec<f32>>,
}

impl TargetPatch {
    /// Crops `[x0, x0 + w) x [y0, y0 + h)` from an RGBA cell, its weight map
    /// and optional normals.
    pub fn crop(rgba: &Image, weight: &Image, normal: Option<&Image>, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if rgba.channels != 4 || weight.channels != 1 || !rgba.same_size(weight) {
            return Err(Error::dim("target patch needs an RGBA cell and a matching weight map"));
        }
        if x0 + w > rgba.width || y0 + h > rgba.height || w == 0 || h == 0 {
            return Err(Error::dim(format!("patch {w}x{h} at ({x0}, {y0}) outside {}x{}", rgba.width, rgba.height)));
        }
        let mut t = Self {
            width: w,
            height: h,
            rgb: Vec::with_capacity(3 * w * h),
            alpha: Vec::with_capacity(w * h),
            weight: Vec::with_capacity(w * h),
            normal: normal.map(|_| Vec::with_capacity(3 * w * h)),
        };
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                let p = rgba.pixel(x, y);
                t.rgb.extend_from_slice(&p[..3]);
                t.alpha.push(p[3]);
                t.weight.push(weight.pixel(x, y)[0]);
                if let (Some(n), Some(dst)) = (normal, t.normal.as_mut()) {
                    dst.extend_from_slice(n.pixel(x, y));
                }
            }
        }
        Ok(t)
    }

    fn foreground(&self, i: usize) -> bool {
        self.alpha[i] > 0.5
    }
}

/// Image-gradient damping of the normal smoothness term.
const BILATERAL_GAMMA: f32 = 10.0;

/// Weighted sum of the reconstruction terms and geometry regularizers.
/// Terms with zero weight are not evaluated.
pub fn reconstruction_loss<'t>(render: &RenderedPatch<'t>, target: &TargetPatch, w: &LossWeights) -> Result<(Var<'t>, LossTerms)> {
    let n = target.width * target.height;
    if render.width != target.width || render.height != target.height {
        return Err(Error::dim(format!(
            "render patch {}x{} against target {}x{}",
            render.width, render.height, target.width, target.height
        )));
    }
    let expect = |v: &Var<'t>, c: usize, what: &str| -> Result<()> {
        if v.shape() != [n, c] {
            return Err(Error::dim(format!("rendered {what} {:?}, expected [{n}, {c}]", v.shape())));
        }
        Ok(())
    };
    expect(&render.rgb, 3, "rgb")?;
    expect(&render.alpha, 1, "alpha")?;
    expect(&render.depth, 1, "depth")?;
    if let Some(nv) = &render.normal {
        expect(nv, 3, "normal")?;
    }
    if target.rgb.len() != 3 * n || target.alpha.len() != n || target.weight.len() != n {
        return Err(Error::dim("target patch buffers do not match its size"));
    }
    let tape = render.rgb.tape();
    let mut terms = LossTerms::default();
    let mut parts: Vec<Var<'t>> = Vec::new();
    let mut add = |v: Var<'t>, lambda: f32, slot: &mut f32| {
        *slot = v.item();
        parts.push(v.scale(lambda));
    };

    if w.mse > 0.0 {
        let gt = tape.constant(Tensor::new(&[n, 3], target.rgb.clone())?);
        let wt = tape.constant(Tensor::new(&[n, 1], target.weight.clone())?);
        let v = render.rgb.sub(gt)?.mul(wt)?.square().mean();
        add(v, w.mse, &mut terms.mse);
    }
    if w.lpips > 0.0 {
        let gt = tape.constant(Tensor::new(&[n, 3], target.rgb.clone())?);
        let v = feature_distance(
            render.rgb.reshape(&[target.height, target.width, 3])?,
            gt.reshape(&[target.height, target.width, 3])?,
        )?;
        add(v, w.lpips, &mut terms.lpips);
    }
    if w.mask > 0.0 {
        let gt = tape.constant(Tensor::new(&[n, 1], target.alpha.clone())?);
        let v = render.alpha.sub(gt)?.square().mean();
        add(v, w.mask, &mut terms.mask);
    }
    if w.normal > 0.0 {
        if let (Some(nv), Some(tn)) = (&render.normal, &target.normal) {
            let mut idx = Vec::new();
            let mut unit = Vec::new();
            for i in 0..n {
                let p = &tn[3 * i..3 * i + 3];
                let len = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
                if target.foreground(i) && len > 0.0 {
                    idx.push(i);
                    unit.extend(p.iter().map(|c| c / len));
                }
            }
            if !idx.is_empty() {
                let k = idx.len();
                let gt = tape.constant(Tensor::new(&[k, 3], unit)?);
                let v = nv.gather(0, &idx)?.mul(gt)?.sum_axis(1, false)?.neg().add_scalar(1.0).mean();
                add(v, w.normal, &mut terms.normal);
            }
        }
    }
    if w.depth_smooth > 0.0 {
        if let Some(v) = depth_laplacian(render.depth, target)? {
            add(v, w.depth_smooth, &mut terms.depth_smooth);
        }
    }
    if w.normal_smooth > 0.0 {
        if let Some(nv) = render.normal {
            if let Some(v) = bilateral_normal_smoothness(nv, target)? {
                add(v, w.normal_smooth, &mut terms.normal_smooth);
            }
        }
    }

    let total = match parts.split_first() {
        None => tape.scalar(0.0),
        Some((first, rest)) => rest.iter().try_fold(*first, |acc, p| acc.add(*p))?,
    };
    terms.total = total.item();
    Ok((total, terms))
}

/// Mean squared 4-neighbour Laplacian of depth over interior pixels whose
/// whole stencil is foreground.
fn depth_laplacian<'t>(depth: Var<'t>, target: &TargetPatch) -> Result<Option<Var<'t>>> {
    let (w, h) = (target.width, target.height);
    let mut sets: [Vec<usize>; 5] = Default::default();
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let c = y * w + x;
            let stencil = [c, c - 1, c + 1, c - w, c + w];
            if stencil.iter().all(|&i| target.foreground(i)) {
                for (s, i) in sets.iter_mut().zip(stencil) {
                    s.push(i);
                }
            }
        }
    }
    if sets[0].is_empty() {
        return Ok(None);
    }
    let mut lap = depth.gather(0, &sets[0])?.scale(-4.0);
    for s in &sets[1..] {
        lap = lap.add(depth.gather(0, s)?)?;
    }
    Ok(Some(lap.square().mean()))
}

/// Mean over adjacent foreground pairs of `exp(-gamma |dI|) |n_i - n_j|^2`,
/// with `|dI|` the mean absolute target color difference.
fn bilateral_normal_smoothness<'t>(normal: Var<'t>, target: &TargetPatch) -> Result<Option<Var<'t>>> {
    let (w, h) = (target.width, target.height);
    let (mut a, mut b, mut wt) = (Vec::new(), Vec::new(), Vec::new());
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            for j in [(x + 1 < w).then_some(i + 1), (y + 1 < h).then_some(i + w)].into_iter().flatten() {
                if target.foreground(i) && target.foreground(j) {
                    let di: f32 = (0..3).map(|c| (target.rgb[3 * i + c] - target.rgb[3 * j + c]).abs()).sum::<f32>() / 3.0;
                    a.push(i);
                    b.push(j);
                    wt.push((-BILATERAL_GAMMA * di).exp());
                }
            }
        }
    }
    if a.is_empty() {
        return Ok(None);
    }
    let k = a.len();
    let tape = normal.tape();
    let d = normal.gather(0, &a)?.sub(normal.gather(0, &b)?)?.square().sum_axis(1, true)?;
    Ok(Some(d.mul(tape.constant(Tensor::new(&[k, 1], wt)?))?.mean()))
}

const PYRAMID_SCALES: usize = 3;
const PYRAMID_CHANNELS: usize = 16;

fn pyramid_weights() -> &'static [Tensor] {
    static W: OnceLock<Vec<Tensor>> = OnceLock::new();
    W.get_or_init(|| {
        let mut rng = substream(0x5eed, "feature-pyramid");
        (0..PYRAMID_SCALES)
            .map(|_| Tensor::randn(&[PYRAMID_CHANNELS, 3, 3, 3], 1.0 / 27f32.sqrt(), &mut rng))
            .collect()
    })
}

/// Perceptual stand-in: squared feature differences of a fixed random
/// convolutional pyramid, summed over scales. `a` and `b` are `[H, W, 3]`.
pub fn feature_distance<'t>(a: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
    let s = a.shape();
    if s.len() != 3 || s[2] != 3 || b.shape() != s {
        return Err(Error::dim(format!("feature distance of {:?} and {:?}", s, b.shape())));
    }
    let tape = a.tape();
    let mut xa = a.permute(&[2, 0, 1])?;
    let mut xb = b.permute(&[2, 0, 1])?;
    let bias = tape.constant(Tensor::zeros(&[PYRAMID_CHANNELS]));
    let mut total: Option<Var<'t>> = None;
    for (level, w) in pyramid_weights().iter().enumerate() {
        if level > 0 {
            let hw = xa.shape();
            if hw[1] < 2 || hw[2] < 2 {
                break;
            }
            xa = xa.avg_pool2()?;
            xb = xb.avg_pool2()?;
        }
        let w = tape.constant(w.clone());
        let fa = xa.conv3x3(w, bias)?.relu();
        let fb = xb.conv3x3(w, bias)?.relu();
        let d = fa.sub(fb)?.square().mean();
        total = Some(match total {
            None => d,
            Some(t) => t.add(d)?,
        });
    }
    Ok(total.expect("at least one scale"))
}

/// [`feature_distance`] on the RGB channels of two images.
pub fn image_feature_distance(a: &Image, b: &Image) -> Result<f32> {
    if !a.same_size(b) || a.channels < 3 || b.channels < 3 {
        return Err(Error::dim("feature distance needs two same-size color images"));
    }
    let tape = Tape::new();
    let to = |img: &Image| tape.constant(img.rgb().to_tensor());
    Ok(feature_distance(to(a), to(b))?.item())
}
