use crate::camera::{CameraPose, OrbitCamera, Vec3};
use crate::error::{Error, Result};
use crate::matrix::{Image, ImageMatrix};
use nalgebra::{Rotation3, Unit};
use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Primitive shapes in their local frame. Capsules run from the local
/// origin along +Z, so the origin is a natural pivot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    Sphere { radius: f32 },
    Box { half_extents: [f32; 3] },
    Capsule { length: f32, radius: f32 },
}

/// Rigid motion over frame time `f`: translation
/// `position + velocity f + amplitude sin(2 pi f / period)` and rotation
/// about `axis` by `spin_deg f + swing_deg sin(2 pi f / period)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Motion {
    pub position: [f32; 3],
    pub velocity: [f32; 3],
    pub amplitude: [f32; 3],
    pub period: f32,
    pub axis: [f32; 3],
    pub spin_deg: f32,
    pub swing_deg: f32,
}

impl Default for Motion {
    fn default() -> Self {
        Self {
            position: [0.0; 3],
            velocity: [0.0; 3],
            amplitude: [0.0; 3],
            period: 8.0,
            axis: [0.0, 0.0, 1.0],
            spin_deg: 0.0,
            swing_deg: 0.0,
        }
    }
}

impl Motion {
    fn at(&self, f: f32) -> (Vec3, Rotation3<f32>) {
        let s = (std::f32::consts::TAU * f / self.period).sin();
        let p = Vec3::from(self.position) + Vec3::from(self.velocity) * f + Vec3::from(self.amplitude) * s;
        let angle = (self.spin_deg * f + self.swing_deg * s).to_radians();
        let axis = Unit::new_normalize(Vec3::from(self.axis));
        (p, Rotation3::from_axis_angle(&axis, angle))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    #[serde(flatten)]
    pub shape: Shape,
    pub albedo: [f32; 3],
    /// Albedo of the local `x < 0` half; the whole shape uses `albedo` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub back_albedo: Option<[f32; 3]>,
    #[serde(default)]
    pub motion: Motion,
}

/// Animated analytic scene used to synthesise ground-truth image matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub primitives: Vec<Primitive>,
}

/// Lambert term `AMBIENT + (1 - AMBIENT) max(0, n . LIGHT)`, independent of view.
pub const AMBIENT: f32 = 0.5;
pub const LIGHT: [f32; 3] = [0.2, 0.3, 1.0];

const MAX_STEPS: usize = 256;
const HIT_EPS: f32 = 1e-5;

fn local_sdf(shape: &Shape, p: &Vec3) -> (f32, Vec3) {
    match *shape {
        Shape::Sphere { radius } => {
            let n = p.norm();
            (n - radius, if n > 0.0 { p / n } else { Vec3::z() })
        }
        Shape::Capsule { length, radius } => {
            let q = Vec3::new(p.x, p.y, p.z - p.z.clamp(0.0, length));
            let n = q.norm();
            (n - radius, if n > 0.0 { q / n } else { Vec3::x() })
        }
        Shape::Box { half_extents } => {
            let b = Vec3::from(half_extents);
            let q = p.abs() - b;
            let outside = q.map(|v| v.max(0.0));
            let on = outside.norm();
            let inside = q.max().min(0.0);
            let normal = if on > 0.0 {
                outside.component_mul(&p.map(|v| if v < 0.0 { -1.0 } else { 1.0 })) / on
            } else {
                let k = q.imax();
                let mut n = Vec3::zeros();
                n[k] = if p[k] < 0.0 { -1.0 } else { 1.0 };
                n
            };
            (on + inside, normal)
        }
    }
}

struct Placed<'a> {
    prim: &'a Primitive,
    position: Vec3,
    rotation: Rotation3<f32>,
}

impl Placed<'_> {
    fn sdf(&self, p: &Vec3) -> (f32, Vec3, Vec3) {
        let local = self.rotation.inverse() * (p - self.position);
        let (d, n) = local_sdf(&self.prim.shape, &local);
        (d, self.rotation * n, local)
    }
}

/// One shaded hit: color, unit world normal and ray distance.
pub struct Hit {
    pub rgb: [f32; 3],
    pub normal: [f32; 3],
    pub depth: f32,
}

impl SceneSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("scene: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.primitives.is_empty() {
            return Err(Error::config("scene has no primitives"));
        }
        for (i, p) in self.primitives.iter().enumerate() {
            let ok = match p.shape {
                Shape::Sphere { radius } => radius > 0.0,
                Shape::Box { half_extents } => half_extents.iter().all(|&h| h > 0.0),
                Shape::Capsule { length, radius } => length >= 0.0 && radius > 0.0,
            };
            let m = &p.motion;
            let finite = m.position.iter().chain(&m.velocity).chain(&m.amplitude).chain(&m.axis).all(|v| v.is_finite());
            if !ok || !finite || !(m.period > 0.0) || Vec3::from(m.axis).norm() == 0.0 {
                return Err(Error::config(format!("primitive {i} has invalid size or motion")));
            }
        }
        Ok(())
    }

    fn placed(&self, frame: f32) -> Vec<Placed<'_>> {
        self.primitives
            .iter()
            .map(|prim| {
                let (position, rotation) = prim.motion.at(frame);
                Placed { prim, position, rotation }
            })
            .collect()
    }

    /// Signed distance to the scene at frame time `frame`.
    pub fn sdf(&self, p: [f32; 3], frame: f32) -> f32 {
        let p = Vec3::from(p);
        self.placed(frame).iter().map(|q| q.sdf(&p).0).fold(f32::INFINITY, f32::min)
    }

    /// Sphere-traces one ray.
    pub fn trace(&self, origin: Vec3, dir: Vec3, t_max: f32, frame: f32) -> Option<Hit> {
        self.trace_placed(&self.placed(frame), origin, dir, t_max)
    }

    fn trace_placed(&self, placed: &[Placed<'_>], origin: Vec3, dir: Vec3, t_max: f32) -> Option<Hit> {
        let mut t = 0.0;
        for _ in 0..MAX_STEPS {
            let p = origin + dir * t;
            let (k, (d, n, local)) = placed
                .iter()
                .map(|q| q.sdf(&p))
                .enumerate()
                .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
                .expect("non-empty scene");
            if d < HIT_EPS {
                let prim = placed[k].prim;
                let albedo = match prim.back_albedo {
                    Some(b) if local.x < 0.0 => b,
                    _ => prim.albedo,
                };
                let shade = AMBIENT + (1.0 - AMBIENT) * n.dot(&Vec3::from(LIGHT).normalize()).max(0.0);
                return Some(Hit {
                    rgb: albedo.map(|a| (a * shade).clamp(0.0, 1.0)),
                    normal: [n.x, n.y, n.z],
                    depth: t,
                });
            }
            t += d;
            if t > t_max {
                return None;
            }
        }
        None
    }
}

/// Renders every (view, frame) cell of `scene`: RGBA over white with a
/// binary silhouette, plus normal and ray-distance maps (zero on background).
pub fn render_pseudo_dataset(
    scene: &SceneSpec,
    camera: &OrbitCamera,
    poses: &[CameraPose],
    frames: usize,
    width: usize,
    height: usize,
) -> Result<ImageMatrix> {
    scene.validate()?;
    if poses.is_empty() || frames == 0 || width == 0 || height == 0 {
        return Err(Error::config("pseudo dataset needs views, frames and a non-empty image size"));
    }
    let jobs: Vec<(usize, usize)> = (0..poses.len()).flat_map(|v| (0..frames).map(move |f| (v, f))).collect();
    let render = |&(v, f): &(usize, usize)| {
        let placed = scene.placed(f as f32);
        let cam = camera.frame(&poses[v]);
        let mut rgba = Image::new(width, height, 4);
        let mut normal = Image::new(width, height, 3);
        let mut depth = Image::new(width, height, 1);
        for y in 0..height {
            for x in 0..width {
                let (o, d) = camera.pixel_ray(&cam, x as f32, y as f32, width, height);
                match scene.trace_placed(&placed, o, d, 2.0 * camera.radius + 2.0) {
                    Some(h) => {
                        rgba.pixel_mut(x, y).copy_from_slice(&[h.rgb[0], h.rgb[1], h.rgb[2], 1.0]);
                        normal.pixel_mut(x, y).copy_from_slice(&h.normal);
                        depth.pixel_mut(x, y)[0] = h.depth;
                    }
                    None => rgba.pixel_mut(x, y).copy_from_slice(&[1.0, 1.0, 1.0, 0.0]),
                }
            }
        }
        (rgba, normal, depth)
    };
    #[cfg(feature = "parallel")]
    let outs: Vec<_> = jobs.par_iter().map(render).collect();
    #[cfg(not(feature = "parallel"))]
    let outs: Vec<_> = jobs.iter().map(render).collect();
    let mut cells = Vec::with_capacity(outs.len());
    let mut normals = Vec::with_capacity(outs.len());
    let mut depths = Vec::with_capacity(outs.len());
    for (c, n, d) in outs {
        cells.push(c);
        normals.push(n);
        depths.push(d);
    }
    let mut m = ImageMatrix::new(cells, poses.len(), frames, poses.to_vec(), (0..frames).collect())?;
    m.normals = Some(normals);
    m.depths = Some(depths);
    Ok(m)
}

impl SceneSpec {
    /// A two-tone body with a waving arm and a slow bob, inside the unit cube.
    pub fn demo() -> Self {
        Self {
            primitives: vec![
                Primitive {
                    shape: Shape::Sphere { radius: 0.22 },
                    albedo: [0.85, 0.35, 0.2],
                    back_albedo: Some([0.2, 0.45, 0.85]),
                    motion: Motion {
                        position: [0.0, 0.0, -0.1],
                        amplitude: [0.0, 0.0, 0.03],
                        ..Default::default()
                    },
                },
                Primitive {
                    shape: Shape::Capsule { length: 0.22, radius: 0.05 },
                    albedo: [0.9, 0.8, 0.25],
                    back_albedo: None,
                    motion: Motion {
                        position: [0.0, 0.12, 0.02],
                        axis: [1.0, 0.0, 0.0],
                        swing_deg: 35.0,
                        ..Default::default()
                    },
                },
            ],
        }
    }
}
