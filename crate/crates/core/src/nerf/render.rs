//! Emission-absorption volume rendering.

use super::model::{DynNerfModel, Field};
use crate::camera::{intersect_cube, CameraPose, OrbitCamera, Ray, Vec3};
use crate::error::{Error, Result};
use crate::matrix::Image;
use crate::rng::Rng;
use crate::tensor::{Tape, Tensor, Var};
use rand::Rng as _;

/// Floor for the accumulated opacity when normalizing depth.
pub const DEPTH_EPS: f32 = 1e-6;
/// Step of the density probe used for normals.
pub const NORMAL_PROBE: f32 = 1e-3;
/// Density-gradient magnitude below which probed normals shrink toward
/// zero instead of being normalized.
pub const NORMAL_GRAD_FLOOR: f32 = 10.0;
/// Half extent of the scene cube.
pub const SCENE_HALF: f32 = 0.5;

impl<'t> Field<'t> for DynNerfModel {
    fn query(&self, x: Var<'t>, times: &[f32]) -> Result<(Var<'t>, Var<'t>)> {
        self.bind_frozen(x.tape()).query(x, times)
    }
}

/// Composites `sigma: [R, S]` and premultiplication-free colors
/// `rgb: [R, S, 3]` at sample distances `t` with bin widths `delta`
/// (both `R * S`). Returns `[R, 5]`: accumulated color, opacity, and depth
/// normalized by `max(opacity, DEPTH_EPS)`.
pub fn composite<'t>(sigma: Var<'t>, rgb: Var<'t>, t: &[f32], delta: &[f32]) -> Result<Var<'t>> {
    let ss = sigma.shape();
    if ss.len() != 2 || rgb.shape() != [ss[0], ss[1], 3] || t.len() != ss[0] * ss[1] || delta.len() != t.len() {
        return Err(Error::dim(format!(
            "composite of sigma {:?}, rgb {:?}, {} distances",
            ss,
            rgb.shape(),
            t.len()
        )));
    }
    let (r, s) = (ss[0], ss[1]);
    let (sv, cv) = (sigma.value(), rgb.value());
    let mut out = vec![0f32; r * 5];
    for ray in 0..r {
        let (mut tr, mut c, mut dn) = (1f32, [0f32; 3], 0f32);
        for i in 0..s {
            let k = ray * s + i;
            let od = sv.data()[k] * delta[k];
            let w = tr * -(-od).exp_m1();
            for ch in 0..3 {
                c[ch] += w * cv.data()[3 * k + ch];
            }
            dn += w * t[k];
            tr *= (-od).exp();
        }
        // Equal to the summed weights, but exactly monotone in density.
        let a = 1.0 - tr;
        out[ray * 5..ray * 5 + 3].copy_from_slice(&c);
        out[ray * 5 + 3] = a;
        out[ray * 5 + 4] = dn / a.max(DEPTH_EPS);
    }
    let (t, delta) = (t.to_vec(), delta.to_vec());
    Ok(sigma.tape().record(&[sigma, rgb], Tensor::new(&[r, 5], out)?, move |ins: &[&Tensor], out: &Tensor, g: &[f32]| {
        let (sd, cd) = (ins[0].data(), ins[1].data());
        let mut gs = vec![0f32; r * s];
        let mut gc = vec![0f32; r * s * 3];
        let mut trans = vec![0f32; s + 1];
        let mut w = vec![0f32; s];
        let mut h = vec![0f32; s];
        for ray in 0..r {
            let gr = &g[ray * 5..ray * 5 + 5];
            let a = out.data()[ray * 5 + 3];
            let depth = out.data()[ray * 5 + 4];
            let ah = a.max(DEPTH_EPS);
            // d(depth)/d(opacity) through the normalization.
            let gda = if a > DEPTH_EPS { -gr[4] * depth / ah } else { 0.0 };
            trans[0] = 1.0;
            for i in 0..s {
                let k = ray * s + i;
                let od = sd[k] * delta[k];
                w[i] = trans[i] * -(-od).exp_m1();
                trans[i + 1] = trans[i] * (-od).exp();
                let c = &cd[3 * k..3 * k + 3];
                h[i] = gr[0] * c[0] + gr[1] * c[1] + gr[2] * c[2] + gr[3] + gda + gr[4] * t[k] / ah;
                for ch in 0..3 {
                    gc[3 * k + ch] = w[i] * gr[ch];
                }
            }
            let mut tail = 0f32;
            for i in (0..s).rev() {
                let k = ray * s + i;
                gs[k] = delta[k] * (trans[i + 1] * h[i] - tail);
                tail += w[i] * h[i];
            }
        }
        vec![Some(gs), Some(gc)]
    }))
}

/// Rendered quantities for a batch of rays, all differentiable.
pub struct RayBatch<'t> {
    /// `[R, 3]`, not composited onto a background.
    pub rgb: Var<'t>,
    /// `[R, 1]`.
    pub alpha: Var<'t>,
    /// `[R, 1]`.
    pub depth: Var<'t>,
    /// `[R, 3]` unit normals (zero on rays that miss the scene cube).
    pub normal: Option<Var<'t>>,
}

impl<'t> RayBatch<'t> {
    /// Color over a white background.
    pub fn rgb_on_white(&self) -> Result<Var<'t>> {
        self.rgb.add(self.alpha.neg().add_scalar(1.0))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RenderOptions {
    pub samples: usize,
    pub normals: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            samples: 32,
            normals: true,
        }
    }
}

/// Renders rays at per-ray frame times. Samples are bin midpoints, or
/// uniformly jittered within their bins when `jitter` is given. Each ray is
/// clipped to the scene cube; rays that miss it render empty.
pub fn render_rays<'t, F: Field<'t> + ?Sized>(
    field: &F,
    tape: &'t Tape,
    rays: &[Ray],
    times: &[f32],
    opts: RenderOptions,
    mut jitter: Option<&mut Rng>,
) -> Result<RayBatch<'t>> {
    if opts.samples < 2 {
        return Err(Error::config(format!("{} samples per ray; need at least 2", opts.samples)));
    }
    if times.len() != rays.len() || rays.is_empty() {
        return Err(Error::dim(format!("{} times for {} rays", times.len(), rays.len())));
    }
    let s = opts.samples;
    let mut hit = Vec::new();
    let mut miss = Vec::new();
    let mut pts = Vec::new();
    let mut ts = Vec::new();
    let mut deltas = Vec::new();
    let mut ptimes = Vec::new();
    for (i, ray) in rays.iter().enumerate() {
        ray.validate()?;
        let span = intersect_cube(&ray.origin, &ray.direction, SCENE_HALF)
            .map(|(a, b)| (a.max(ray.t_near), b.min(ray.t_far)))
            .filter(|(a, b)| b > a);
        let Some((t0, t1)) = span else {
            miss.push(i);
            continue;
        };
        hit.push(i);
        let step = (t1 - t0) / s as f32;
        for k in 0..s {
            let u = match jitter.as_deref_mut() {
                Some(rng) => rng.random::<f32>(),
                None => 0.5,
            };
            let t = t0 + (k as f32 + u) * step;
            let p = ray.at(t);
            pts.extend([p.x, p.y, p.z]);
            ts.push(t);
            deltas.push(step);
            ptimes.push(times[i]);
        }
    }
    let r = rays.len();
    let mut packed = Vec::new();
    let mut normals = Vec::new();
    if !hit.is_empty() {
        let rh = hit.len();
        let x = tape.constant(Tensor::new(&[rh * s, 3], pts)?);
        let (sigma, rgb) = field.query(x, &ptimes)?;
        let out = composite(sigma.reshape(&[rh, s])?, rgb.reshape(&[rh, s, 3])?, &ts, &deltas)?;
        packed.push(out);
        if opts.normals {
            let hit_rays: Vec<Ray> = hit.iter().map(|&i| rays[i]).collect();
            let hit_times: Vec<f32> = hit.iter().map(|&i| times[i]).collect();
            let depth: Vec<f32> = out.value().data().chunks(5).map(|c| c[4]).collect();
            normals.push(probe_normals(field, tape, &hit_rays, &depth, &hit_times)?);
        }
    }
    if !miss.is_empty() {
        packed.push(tape.constant(Tensor::zeros(&[miss.len(), 5])));
        if opts.normals {
            normals.push(tape.constant(Tensor::zeros(&[miss.len(), 3])));
        }
    }
    let mut order = vec![0usize; r];
    for (pos, &i) in hit.iter().chain(&miss).enumerate() {
        order[i] = pos;
    }
    let identity = order.iter().enumerate().all(|(i, &p)| i == p);
    let arrange = |parts: &[Var<'t>]| -> Result<Var<'t>> {
        let all = if parts.len() == 1 { parts[0] } else { Var::concat(parts, 0)? };
        if identity {
            Ok(all)
        } else {
            all.gather(0, &order)
        }
    };
    let packed = arrange(&packed)?;
    let normal = if opts.normals { Some(arrange(&normals)?) } else { None };
    Ok(RayBatch {
        rgb: packed.slice(1, 0, 3)?,
        alpha: packed.slice(1, 3, 1)?,
        depth: packed.slice(1, 4, 1)?,
        normal,
    })
}

/// Negative density gradient at each ray's depth point, by central
/// differences of step [`NORMAL_PROBE`], divided by
/// `sqrt(|g|^2 + NORMAL_GRAD_FLOOR^2)`. Unit length on surfaces, shorter in
/// nearly empty space where the direction is noise. Differentiable in the field
/// parameters; the probe location is held fixed.
pub fn probe_normals<'t, F: Field<'t> + ?Sized>(
    field: &F,
    tape: &'t Tape,
    rays: &[Ray],
    depth: &[f32],
    times: &[f32],
) -> Result<Var<'t>> {
    let n = rays.len();
    let h = NORMAL_PROBE;
    let mut pts = Vec::with_capacity(n * 18);
    let mut ptimes = Vec::with_capacity(n * 6);
    for ((ray, &d), &t) in rays.iter().zip(depth).zip(times) {
        let p = ray.at(d);
        for axis in 0..3 {
            for sign in [1.0f32, -1.0] {
                let mut q = p;
                q[axis] += sign * h;
                pts.extend([q.x, q.y, q.z]);
                ptimes.push(t);
            }
        }
    }
    let (sigma, _) = field.query(tape.constant(Tensor::new(&[n * 6, 3], pts)?), &ptimes)?;
    let s = sigma.reshape(&[n, 3, 2])?;
    let grad = s.slice(2, 0, 1)?.sub(s.slice(2, 1, 1)?)?.reshape(&[n, 3])?.scale(-0.5 / h);
    let norm = grad.square().sum_axis(1, true)?.add_scalar(NORMAL_GRAD_FLOOR * NORMAL_GRAD_FLOOR).sqrt();
    grad.div(norm)
}

/// Rendered view: color over white, silhouette, depth and normals.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderOutput {
    pub rgb: Image,
    pub silhouette: Image,
    pub depth: Image,
    pub normal: Image,
}

impl RenderOutput {
    /// RGBA with the silhouette as alpha.
    pub fn rgba(&self) -> Image {
        let mut out = Image::new(self.rgb.width, self.rgb.height, 4);
        for ((o, c), a) in out.data.chunks_mut(4).zip(self.rgb.data.chunks(3)).zip(&self.silhouette.data) {
            o[..3].copy_from_slice(c);
            o[3] = *a;
        }
        out
    }
}

/// Rays through every pixel centre, row-major.
pub fn view_rays(camera: &OrbitCamera, pose: &CameraPose, width: usize, height: usize) -> Vec<Ray> {
    let frame = camera.frame(pose);
    let mut rays = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let (o, d) = camera.pixel_ray(&frame, x as f32, y as f32, width, height);
            rays.push(Ray {
                origin: o,
                direction: d,
                t_near: 0.0,
                t_far: 2.0 * camera.radius + 2.0,
            });
        }
    }
    rays
}

const CHUNK: usize = 2048;

/// Renders a full view at frame time `frame`.
pub fn render_view<F>(field: &F, camera: &OrbitCamera, pose: &CameraPose, frame: f32, width: usize, height: usize, samples: usize) -> Result<RenderOutput>
where
    F: for<'t> Field<'t> + ?Sized,
{
    let rays = view_rays(camera, pose, width, height);
    let n = rays.len();
    let mut rgb = Vec::with_capacity(3 * n);
    let mut sil = Vec::with_capacity(n);
    let mut depth = Vec::with_capacity(n);
    let mut normal = Vec::with_capacity(3 * n);
    for chunk in rays.chunks(CHUNK) {
        let tape = Tape::new();
        let times = vec![frame; chunk.len()];
        let b = render_rays(field, &tape, chunk, &times, RenderOptions { samples, normals: true }, None)?;
        rgb.extend_from_slice(b.rgb_on_white()?.value().data());
        sil.extend_from_slice(b.alpha.value().data());
        depth.extend_from_slice(b.depth.value().data());
        let nv = b.normal.expect("normals requested").value();
        for (nrm, a) in nv.data().chunks(3).zip(b.alpha.value().data()) {
            // Normals are only meaningful on the foreground.
            if *a > 0.5 {
                normal.extend_from_slice(nrm);
            } else {
                normal.extend([0.0; 3]);
            }
        }
    }
    Ok(RenderOutput {
        rgb: Image::from_data(width, height, 3, rgb)?,
        silhouette: Image::from_data(width, height, 1, sil)?,
        depth: Image::from_data(width, height, 1, depth)?,
        normal: Image::from_data(width, height, 3, normal)?,
    })
}

/// Renders one ray without background compositing.
pub fn render_ray<F>(field: &F, ray: &Ray, frame: f32, samples: usize) -> Result<([f32; 3], f32, f32)>
where
    F: for<'t> Field<'t> + ?Sized,
{
    let tape = Tape::new();
    let b = render_rays(field, &tape, &[*ray], &[frame], RenderOptions { samples, normals: false }, None)?;
    let c = b.rgb.value();
    Ok(([c.data()[0], c.data()[1], c.data()[2]], b.alpha.item(), b.depth.item()))
}

/// Unit vector from a world point toward the camera at `pose`.
pub fn toward_camera(camera: &OrbitCamera, pose: &CameraPose, p: &Vec3) -> Vec3 {
    (camera.frame(pose).position - p).normalize()
}
