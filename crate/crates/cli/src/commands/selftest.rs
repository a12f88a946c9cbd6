//! Built-in invariant suite. The gradient section probes every
//! differentiable op with central differences over several seeds; the other
//! sections pin structural identities and closed forms.

use dyn4d_core::camera::{CameraPose, OrbitCamera, Ray, Vec3};
use dyn4d_core::curation::{rectify, waving_arm, CurationConfig};
use dyn4d_core::diffusion::{
    blended_3d_attention, blended_frame_attention, cfg_scale_schedule, from_3d_layout, from_frame_layout, from_view_layout, init_attention,
    init_blended, reshape_for_3d_attention, reshape_for_frame_attention, reshape_for_view_attention, CameraTrajectory, LatentBlock,
    ReferenceCondition, CAMERA_ENCODING_DIM, FRAME_ENCODING_DIM,
};
use dyn4d_core::matrix::Image;
use dyn4d_core::metrics::{frechet_distance, psnr, scan_order, ssim, GaussianStats, ScanKind, PSNR_CAP};
use dyn4d_core::nerf::{composite, hashgrid_lookup, render_ray, render_view, ConstantField, DynNerfModel, HashGridConfig, NerfConfig, SphereField};
use dyn4d_core::optim::{visibility_map, VISIBILITY_EPS};
use dyn4d_core::params::ParamStore;
use dyn4d_core::rng::substream;
use dyn4d_core::tensor::check_gradients;
use dyn4d_core::{Result, Tape, Tensor, Var};
use nalgebra::{DMatrix, DVector};
use std::fmt::Write as _;

/// Relative finite-difference tolerance for the gradient section.
pub const GRAD_TOL: f32 = 1e-3;
pub const GRAD_STEP: f32 = 1e-3;

pub struct Options {
    pub seeds: u64,
    /// Swaps in a sigmoid with a wrong backward rule (negative control).
    pub corrupt_gradient: bool,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            seeds: 20,
            corrupt_gradient: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Check {
    pub section: &'static str,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn section_passed(&self, section: &str) -> bool {
        self.checks.iter().filter(|c| c.section == section).all(|c| c.passed)
    }

    pub fn table(&self) -> String {
        let w = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(5).max(5);
        let mut s = String::new();
        let _ = writeln!(s, "{:<12} {:<w$} {:<6} detail", "section", "check", "result");
        for c in &self.checks {
            let verdict = if c.passed { "pass" } else { "FAIL" };
            let _ = writeln!(s, "{:<12} {:<w$} {:<6} {}", c.section, c.name, verdict, c.detail);
        }
        let _ = writeln!(s, "{} checks, {} failed", self.checks.len(), self.failures().len());
        s
    }

    fn push(&mut self, section: &'static str, name: impl Into<String>, outcome: Result<(bool, String)>) {
        let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
        self.checks.push(Check {
            section,
            name: name.into(),
            passed,
            detail,
        });
    }
}

pub fn run(opts: &Options) -> Report {
    let mut r = Report::default();
    gradient_section(&mut r, opts);
    architecture_section(&mut r);
    rendering_section(&mut r);
    visibility_section(&mut r);
    curation_section(&mut r);
    metrics_section(&mut r);
    r
}

// ---------------------------------------------------------------- gradients

type Loss = Box<dyn for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>>>;
type Build = Box<dyn Fn(u64) -> (Tensor, Loss)>;
type Unary = for<'t> fn(Var<'t>) -> Result<Var<'t>>;
type Binary = for<'t> fn(Var<'t>, Var<'t>) -> Result<Var<'t>>;

/// Uniform on `[-1, 1]`.
fn random(shape: &[usize], seed: u64, name: &str) -> Tensor {
    Tensor::uniform(shape, -1.0, 1.0, &mut substream(seed, name))
}

fn id(t: Tensor) -> Tensor {
    t
}

/// `|x| + 0.5`, inside the domain of ln, sqrt and division.
fn positive(t: Tensor) -> Tensor {
    t.map(|v| v.abs() + 0.5)
}

/// Moves values at least 0.05 away from each kink.
fn away(t: Tensor, kinks: &'static [f32]) -> Tensor {
    t.map(|mut v| {
        for &k in kinks {
            if (v - k).abs() < 0.05 {
                v = if v >= k { k + 0.05 } else { k - 0.05 };
            }
        }
        v
    })
}

fn off_relu(t: Tensor) -> Tensor {
    away(t, &[0.0])
}

fn off_clamp(t: Tensor) -> Tensor {
    away(t, &[-0.5, 0.5])
}

/// `sum(y * r)` for a fixed random `r`, so every output coordinate is probed.
fn project<'t>(tape: &'t Tape, y: Var<'t>, seed: u64) -> Result<Var<'t>> {
    let r = random(&y.shape(), seed, "selftest-projection");
    Ok(y.mul(tape.constant(r))?.sum())
}

fn unary(shape: &'static [usize], prep: fn(Tensor) -> Tensor, op: Unary) -> Build {
    Box::new(move |seed| {
        let x = prep(random(shape, seed, "selftest-x"));
        let loss: Loss = Box::new(move |tape, x| project(tape, op(x)?, seed));
        (x, loss)
    })
}

/// `op(x, c)` with `c` a fixed random tensor of shape `other`.
fn binary(shape: &'static [usize], other: &'static [usize], prep_x: fn(Tensor) -> Tensor, prep_c: fn(Tensor) -> Tensor, op: Binary) -> Build {
    Box::new(move |seed| {
        let x = prep_x(random(shape, seed, "selftest-x"));
        let c = prep_c(random(other, seed, "selftest-c"));
        let loss: Loss = Box::new(move |tape, x| project(tape, op(x, tape.constant(c.clone()))?, seed));
        (x, loss)
    })
}

/// Sigmoid whose backward rule drops the `(1 - s)` factor.
fn corrupt_sigmoid(x: Var<'_>) -> Var<'_> {
    let s = x.value().map(|v| 1.0 / (1.0 + (-v).exp()));
    x.tape().record(&[x], s, |_: &[&Tensor], out: &Tensor, g: &[f32]| {
        vec![Some(g.iter().zip(out.data()).map(|(g, s)| g * s).collect())]
    })
}

fn small_grid() -> HashGridConfig {
    HashGridConfig {
        levels: 2,
        features_per_level: 2,
        table_size_log2: 6,
        base_resolution: 4,
        per_level_scale: 2.0,
    }
}

fn grid_tables(cfg: &HashGridConfig, seed: u64) -> Vec<Tensor> {
    let mut rng = substream(seed, "selftest-tables");
    (0..cfg.levels)
        .map(|_| Tensor::uniform(&[cfg.table_size(), cfg.features_per_level], -1.0, 1.0, &mut rng))
        .collect()
}

/// Points at fractional offsets 0.2..0.8 inside cells of the finest level.
/// Levels double, so they also sit clear of coarse cell walls and the
/// difference stencil stays inside one trilinear cell.
fn interior_points(n: usize, res: usize, seed: u64) -> Tensor {
    let frac = Tensor::uniform(&[n, 3], 0.2, 0.8, &mut substream(seed, "selftest-frac"));
    let cell = Tensor::uniform(&[n, 3], 0.0, res as f32, &mut substream(seed, "selftest-cell"));
    let data = frac
        .data()
        .iter()
        .zip(cell.data())
        .map(|(f, c)| (c.floor().min(res as f32 - 1.0) + f) / res as f32 - 0.5)
        .collect();
    Tensor::new(&[n, 3], data).expect("point buffer")
}

struct CompositeInputs {
    sigma: Tensor,
    rgb: Tensor,
    t: Vec<f32>,
    delta: Vec<f32>,
}

fn composite_inputs(seed: u64) -> CompositeInputs {
    let (r, s) = (2, 5);
    CompositeInputs {
        sigma: positive(random(&[r, s], seed, "selftest-sigma")),
        rgb: random(&[r, s, 3], seed, "selftest-rgb"),
        t: (0..r * s).map(|i| 0.1 + 0.2 * (i % s) as f32).collect(),
        delta: vec![0.2; r * s],
    }
}

fn attention_blocks(c: usize, seed: u64) -> ParamStore {
    let mut rng = substream(seed, "selftest-blocks");
    let mut s = ParamStore::new();
    init_attention(&mut s, "sp", c, &mut rng);
    init_blended(&mut s, "a3", c, CAMERA_ENCODING_DIM, 0.5, &mut rng);
    init_blended(&mut s, "fr", c, FRAME_ENCODING_DIM, 0.6, &mut rng);
    s
}

/// Blended 3D or frame attention on a `(2, 2, 2, 1, 4)` block, probed at
/// the input or at the blend weight.
fn attention_case(frame: bool, wrt_alpha: bool) -> Build {
    Box::new(move |seed| {
        let ps = attention_blocks(4, seed);
        let input = random(&[2, 2, 2, 1, 4], seed, "selftest-latent");
        let reference = ReferenceCondition::present(random(&[2, 2, 1, 4], seed, "selftest-ref")).expect("rank-4 reference");
        let cam = CameraTrajectory::orbit(2);
        let prefix = if frame { "fr" } else { "a3" };
        let alpha = format!("{prefix}.alpha");
        let x = if wrt_alpha { ps.tensor(&alpha).clone() } else { input.clone() };
        let loss: Loss = Box::new(move |tape, v| {
            let mut p = ps.bind_frozen(tape);
            let l = if wrt_alpha {
                p.replace(&alpha, v);
                tape.constant(input.clone())
            } else {
                v
            };
            let y = if frame {
                blended_frame_attention(l, &p, prefix, &[0, 3], &reference)?
            } else {
                blended_3d_attention(l, &p, prefix, &cam)?
            };
            project(tape, y, seed)
        });
        (x, loss)
    })
}

fn hashgrid_case(wrt_points: bool) -> Build {
    Box::new(move |seed| {
        let cfg = small_grid();
        let tables = grid_tables(&cfg, seed);
        let pts = interior_points(4, cfg.resolution(cfg.levels - 1), seed);
        let x = if wrt_points { pts.clone() } else { tables[1].clone() };
        let loss: Loss = Box::new(move |tape, v| {
            let mut vars: Vec<Var> = tables.iter().map(|t| tape.constant(t.clone())).collect();
            let p = if wrt_points {
                v
            } else {
                vars[1] = v;
                tape.constant(pts.clone())
            };
            project(tape, hashgrid_lookup(p, &vars, &cfg)?, seed)
        });
        (x, loss)
    })
}

fn composite_case(wrt_rgb: bool) -> Build {
    Box::new(move |seed| {
        let c = composite_inputs(seed);
        let x = if wrt_rgb { c.rgb.clone() } else { c.sigma.clone() };
        let loss: Loss = Box::new(move |tape, v| {
            let (s, rgb) = if wrt_rgb {
                (tape.constant(c.sigma.clone()), v)
            } else {
                (v, tape.constant(c.rgb.clone()))
            };
            project(tape, composite(s, rgb, &c.t, &c.delta)?, seed)
        });
        (x, loss)
    })
}

fn gradient_cases(corrupt: bool) -> Vec<(&'static str, Build)> {
    let sigmoid: Unary = if corrupt { |x| Ok(corrupt_sigmoid(x)) } else { |x| Ok(x.sigmoid()) };
    vec![
        ("add", binary(&[3, 4], &[4], id, id, |x, c| x.add(c))),
        ("add.broadcast", binary(&[4], &[3, 4], id, id, |x, c| c.add(x))),
        ("sub", binary(&[3, 4], &[3, 4], id, id, |x, c| c.sub(x))),
        ("mul", binary(&[3, 4], &[3, 1], id, id, |x, c| x.mul(c))),
        ("mul.broadcast", binary(&[3, 1], &[3, 4], id, id, |x, c| c.mul(x))),
        ("div.numerator", binary(&[3, 4], &[4], id, positive, |x, c| x.div(c))),
        ("div.denominator", binary(&[3, 4], &[3, 4], positive, id, |x, c| c.div(x))),
        ("neg", unary(&[3, 4], id, |x| Ok(x.neg()))),
        ("scale", unary(&[3, 4], id, |x| Ok(x.scale(1.7)))),
        ("add_scalar", unary(&[3, 4], id, |x| Ok(x.add_scalar(0.3).square()))),
        ("exp", unary(&[3, 4], id, |x| Ok(x.exp()))),
        ("ln", unary(&[3, 4], positive, |x| Ok(x.ln()))),
        ("sqrt", unary(&[3, 4], positive, |x| Ok(x.sqrt()))),
        ("square", unary(&[3, 4], id, |x| Ok(x.square()))),
        ("relu", unary(&[3, 4], off_relu, |x| Ok(x.relu()))),
        ("sigmoid", unary(&[3, 4], id, sigmoid)),
        ("softplus", unary(&[3, 4], id, |x| Ok(x.softplus()))),
        ("tanh", unary(&[3, 4], id, |x| Ok(x.tanh()))),
        ("clamp", unary(&[3, 4], off_clamp, |x| Ok(x.clamp(-0.5, 0.5)))),
        ("sum", unary(&[3, 4], id, |x| Ok(x.sum().square()))),
        ("mean", unary(&[3, 4], id, |x| Ok(x.mean().square()))),
        ("sum_axis", unary(&[3, 4, 2], id, |x| x.sum_axis(1, false))),
        ("mean_axis", unary(&[3, 4, 2], id, |x| x.mean_axis(2, true))),
        ("reshape", unary(&[3, 4], id, |x| x.reshape(&[2, 6]))),
        ("permute", unary(&[2, 3, 4], id, |x| x.permute(&[2, 0, 1]))),
        ("transpose", unary(&[3, 4], id, |x| x.transpose(0, 1))),
        ("broadcast_to", unary(&[1, 4], id, |x| x.broadcast_to(&[3, 4]))),
        ("matmul.lhs", binary(&[3, 4], &[4, 2], id, id, |x, c| x.matmul(c))),
        ("matmul.rhs", binary(&[4, 2], &[3, 4], id, id, |x, c| c.matmul(x))),
        ("matmul.batched", binary(&[4, 2], &[2, 3, 4], id, id, |x, c| c.matmul(x))),
        ("softmax", unary(&[3, 4], id, |x| x.softmax(1))),
        ("layer_norm", unary(&[3, 5], id, |x| Ok(x.layer_norm(1e-5)))),
        ("slice", unary(&[4, 3], id, |x| x.slice(0, 1, 2))),
        ("gather", unary(&[4, 3], id, |x| x.gather(0, &[2, 0, 2, 3]))),
        ("concat", binary(&[3, 2], &[3, 3], id, id, |x, c| Var::concat(&[x, c], 1))),
        ("conv3x3.input", binary(&[2, 4, 4], &[3, 2, 3, 3], id, id, |x, w| x.conv3x3(w, x.tape().constant(Tensor::zeros(&[3]))))),
        ("conv3x3.weight", binary(&[3, 2, 3, 3], &[2, 4, 4], id, id, |w, x| x.conv3x3(w, x.tape().constant(Tensor::ones(&[3]))))),
        ("avg_pool2", unary(&[2, 4, 4], id, |x| x.avg_pool2())),
        ("hashgrid.table", hashgrid_case(false)),
        ("hashgrid.points", hashgrid_case(true)),
        ("composite.sigma", composite_case(false)),
        ("composite.rgb", composite_case(true)),
        ("attention_3d.input", attention_case(false, false)),
        ("attention_3d.alpha", attention_case(false, true)),
        ("frame_attention.input", attention_case(true, false)),
        ("frame_attention.alpha", attention_case(true, true)),
    ]
}

fn gradient_section(r: &mut Report, opts: &Options) {
    let seeds = opts.seeds.max(1);
    for (name, build) in gradient_cases(opts.corrupt_gradient) {
        let outcome = (|| {
            let (mut worst, mut at) = (0.0f32, 0);
            for seed in 0..seeds {
                let (x, loss) = build(seed);
                let e = check_gradients(|tape, v| loss(tape, v), &x, GRAD_STEP)?;
                if !(e <= worst) {
                    worst = e;
                    at = seed;
                }
            }
            Ok((worst < GRAD_TOL, format!("max rel err {worst:.2e} (seed {at}) over {seeds} seeds")))
        })();
        r.push("gradient", name, outcome);
    }
}

// ------------------------------------------------------------- architecture

fn architecture_section(r: &mut Report) {
    let dims = [2usize, 3, 2, 2, 4];
    let x = random(&dims, 1, "selftest-arch");
    let reference = || ReferenceCondition::present(random(&[3, 2, 2, 4], 2, "selftest-arch-ref"));

    r.push("architecture", "alpha_3d=0 is identity", (|| {
        let mut ps = attention_blocks(4, 3);
        ps.insert("a3.alpha", Tensor::scalar(0.0));
        let tape = Tape::new();
        let out = blended_3d_attention(tape.constant(x.clone()), &ps.bind_frozen(&tape), "a3", &CameraTrajectory::orbit(3))?;
        Ok((out.value().bitwise_eq(&x), "bitwise".into()))
    })());

    r.push("architecture", "alpha_f=0 is identity", (|| {
        let mut ps = attention_blocks(4, 4);
        ps.insert("fr.alpha", Tensor::scalar(0.0));
        let tape = Tape::new();
        let out = blended_frame_attention(tape.constant(x.clone()), &ps.bind_frozen(&tape), "fr", &[0, 1], &reference()?)?;
        Ok((out.value().bitwise_eq(&x), "bitwise".into()))
    })());

    r.push("architecture", "masked reference = absent", (|| {
        let ps = attention_blocks(4, 5);
        let tape = Tape::new();
        let p = ps.bind_frozen(&tape);
        let a = blended_frame_attention(tape.constant(x.clone()), &p, "fr", &[0, 1], &reference()?.masked())?.value();
        let b = blended_frame_attention(tape.constant(x.clone()), &p, "fr", &[0, 1], &ReferenceCondition::absent())?.value();
        Ok((a.bitwise_eq(&b), "bitwise".into()))
    })());

    r.push("architecture", "view permutation equivariance", (|| {
        let ps = attention_blocks(4, 6);
        let poses = vec![CameraPose::new(0.0, 0.0)?, CameraPose::new(10.0, 120.0)?, CameraPose::new(-5.0, 240.0)?];
        let perm = [2usize, 0, 1];
        let cell = dims[2] * dims[3] * dims[4];
        let permute = |t: &Tensor| -> Result<Tensor> {
            let mut out = Vec::with_capacity(t.numel());
            for f in 0..dims[0] {
                for &v in &perm {
                    let o = (f * dims[1] + v) * cell;
                    out.extend_from_slice(&t.data()[o..o + cell]);
                }
            }
            Tensor::new(t.shape(), out)
        };
        let tape = Tape::new();
        let p = ps.bind_frozen(&tape);
        let a = blended_3d_attention(tape.constant(x.clone()), &p, "a3", &CameraTrajectory::new(poses.clone())?)?.value();
        let pposes = perm.iter().map(|&i| poses[i]).collect();
        let b = blended_3d_attention(tape.constant(permute(&x)?), &p, "a3", &CameraTrajectory::new(pposes)?)?.value();
        let err = permute(&a)?.max_abs_diff(&b);
        Ok((err < 1e-5, format!("max diff {err:.1e}")))
    })());

    r.push("architecture", "frame permutation equivariance", (|| {
        let ps = attention_blocks(4, 7);
        let per = dims[1] * dims[2] * dims[3] * dims[4];
        let swap = |t: &Tensor| -> Result<Tensor> {
            let mut out = t.data()[per..].to_vec();
            out.extend_from_slice(&t.data()[..per]);
            Tensor::new(t.shape(), out)
        };
        let refc = reference()?.masked();
        let tape = Tape::new();
        let p = ps.bind_frozen(&tape);
        let a = blended_frame_attention(tape.constant(x.clone()), &p, "fr", &[2, 7], &refc)?.value();
        let b = blended_frame_attention(tape.constant(swap(&x)?), &p, "fr", &[7, 2], &refc)?.value();
        let err = swap(&a)?.max_abs_diff(&b);
        Ok((err < 1e-5, format!("max diff {err:.1e}")))
    })());

    r.push("architecture", "layout round trips", (|| {
        let block = LatentBlock::new(x.clone())?;
        let ok = from_view_layout(&reshape_for_view_attention(&block), dims)? == block
            && from_3d_layout(&reshape_for_3d_attention(&block), dims)? == block
            && from_frame_layout(&reshape_for_frame_attention(&block), dims)? == block;
        Ok((ok, "view, 3d and frame layouts".into()))
    })());

    r.push("architecture", "guidance ramp endpoints", (|| {
        let lo = cfg_scale_schedule(1.0, 2.5, 0, 4, 0, 8)?;
        let hi = cfg_scale_schedule(1.0, 2.5, 3, 4, 7, 8)?;
        let mid = cfg_scale_schedule(1.0, 2.5, 1, 4, 2, 8)?;
        Ok((lo == 1.0 && hi == 2.5 && (lo..=hi).contains(&mid), format!("{lo} .. {mid} .. {hi}")))
    })());
}

// ---------------------------------------------------------------- rendering

fn light_gray(_: [f32; 3]) -> [f32; 3] {
    [0.8; 3]
}

fn rendering_section(r: &mut Report) {
    r.push("rendering", "constant density transmittance", (|| {
        let ray = Ray::new(Vec3::new(2.0, 0.0, 0.0), -Vec3::x(), 0.0, 4.0)?;
        let mut worst = 0.0f32;
        for sigma in [0.5f32, 2.0, 5.0] {
            let (_, alpha, _) = render_ray(&ConstantField { sigma, rgb: [0.2, 0.4, 0.6] }, &ray, 0.0, 256)?;
            worst = worst.max((alpha - (1.0 - (-sigma).exp())).abs());
        }
        Ok((worst < 1e-2, format!("max |alpha - (1 - e^-sigma)| {worst:.1e}")))
    })());

    r.push("rendering", "sphere silhouette radius", (|| {
        let cam = OrbitCamera::default();
        let radius = 0.3f32;
        let f = SphereField {
            center: [0.0; 3],
            radius,
            sigma: 1e3,
            color: light_gray,
        };
        let size = 64;
        let out = render_view(&f, &cam, &CameraPose::new(15.0, 40.0)?, 0.0, size, size, 96)?;
        let area: f32 = out.silhouette.data.iter().sum();
        let measured = (area / std::f32::consts::PI).sqrt();
        let predicted = (radius / cam.radius).asin().tan() / (cam.fov_y_deg.to_radians() / 2.0).tan() * size as f32 / 2.0;
        Ok(((measured - predicted).abs() < 1.0, format!("{measured:.2} px vs {predicted:.2} px")))
    })());

    r.push("rendering", "fresh model is frame invariant", (|| {
        let m = DynNerfModel::new(NerfConfig { frames: 4, ..Default::default() }, 5)?;
        let cam = OrbitCamera::default();
        let pose = CameraPose::new(20.0, 70.0)?;
        let a = render_view(&m, &cam, &pose, 0.0, 8, 8, 16)?;
        let mut same = true;
        for f in 1..4 {
            same &= render_view(&m, &cam, &pose, f as f32, 8, 8, 16)? == a;
        }
        Ok((same, "frames 1..3 equal frame 0".into()))
    })());
}

// --------------------------------------------------------------- visibility

fn normal_map(cam: &OrbitCamera, pose: &CameraPose, n: usize, f: &dyn Fn(Vec3, Vec3) -> Vec3) -> Image {
    let frame = cam.frame(pose);
    let mut img = Image::new(n, n, 3);
    for y in 0..n {
        for x in 0..n {
            let (_, d) = cam.pixel_ray(&frame, x as f32, y as f32, n, n);
            let toward = -d;
            let side = toward.cross(&Vec3::z()).normalize();
            let v = f(toward, side);
            img.pixel_mut(x, y).copy_from_slice(&[v.x, v.y, v.z]);
        }
    }
    img
}

fn visibility_section(r: &mut Report) {
    let cam = OrbitCamera::default();
    let pose = CameraPose {
        elevation_deg: 20.0,
        azimuth_deg: 30.0,
    };
    let eps = VISIBILITY_EPS;
    let c = 60f32.to_radians();
    let cases: [(&str, Box<dyn Fn(Vec3, Vec3) -> Vec3>, f32); 3] = [
        ("head-on normal", Box::new(|t, _| t), 1.0 - eps),
        ("grazing normal", Box::new(|_, s| s), eps),
        ("60 degree normal", Box::new(move |t, s| t * c.cos() + s * c.sin()), 0.5),
    ];
    for (name, f, want) in cases {
        r.push("visibility", name, (|| {
            let v = visibility_map(&cam, &pose, &normal_map(&cam, &pose, 6, f.as_ref()))?;
            let err = v.data.iter().map(|w| (w - want).abs()).fold(0.0f32, f32::max);
            Ok((err < 1e-6, format!("expected {want}, max err {err:.1e}")))
        })());
    }
    r.push("visibility", "resolution independence", (|| {
        let a = visibility_map(&cam, &pose, &normal_map(&cam, &pose, 4, &|t, _| t))?;
        let b = visibility_map(&cam, &pose, &normal_map(&cam, &pose, 8, &|t, _| t))?;
        let same = b.data.len() == 4 * a.data.len() && a.data.iter().chain(&b.data).all(|&w| w == 1.0 - eps);
        Ok((same, "4x4 and 8x8 head-on maps agree".into()))
    })());
}

// ----------------------------------------------------------------- curation

fn curation_section(r: &mut Report) {
    let drift = 0.013f32;
    r.push("curation", "drift recovery", (|| {
        let m = waving_arm(8, [drift, 0.0, 0.0])?;
        let (_, report) = rectify(&m, &CurationConfig::default())?;
        let err = report
            .global_offsets
            .iter()
            .enumerate()
            .map(|(f, o)| (o[0] - drift * f as f32).abs().max(o[1].abs()).max(o[2].abs()))
            .fold(0.0f32, f32::max);
        Ok((err < 1e-6, format!("max offset error {err:.1e}")))
    })());
    r.push("curation", "rectify idempotence", (|| {
        let m = waving_arm(8, [0.02, 0.0, 0.0])?.map_positions(|_, p| [p[0] * 1.7 + 0.3, p[1] * 1.7 - 0.2, p[2] * 1.7])?;
        let cfg = CurationConfig::default();
        let (once, _) = rectify(&m, &cfg)?;
        let (twice, report) = rectify(&once, &cfg)?;
        Ok((once == twice && report.global_offsets.iter().all(|o| *o == [0.0; 3]), "second pass is a no-op".into()))
    })());
}

// ------------------------------------------------------------------ metrics

fn metrics_section(r: &mut Report) {
    r.push("metrics", "fv4d scan order 2x3", (|| {
        let got = scan_order(ScanKind::Fv4d, 2, 3);
        let want = vec![vec![(0, 0), (0, 1), (0, 2), (1, 2), (1, 1), (1, 0)]];
        Ok((got == want, format!("{got:?}")))
    })());
    r.push("metrics", "frechet 1-d closed form", (|| {
        // (m1 - m2)^2 + v1 + v2 - 2 sqrt(v1 v2)
        let (m1, v1, m2, v2) = (0.5f64, 4.0f64, -1.0f64, 9.0f64);
        let p = GaussianStats::new(DVector::from_element(1, m1), DMatrix::from_element(1, 1, v1))?;
        let q = GaussianStats::new(DVector::from_element(1, m2), DMatrix::from_element(1, 1, v2))?;
        let want = (m1 - m2).powi(2) + v1 + v2 - 2.0 * (v1 * v2).sqrt();
        let got = frechet_distance(&p, &q)?;
        let zero = frechet_distance(&p, &p)?;
        Ok(((got - want).abs() < 1e-9 && zero.abs() < 1e-9, format!("{got:.6} vs {want:.6}, self {zero:.1e}")))
    })());
    r.push("metrics", "identical images hit the caps", (|| {
        let img = Image::from_data(12, 12, 3, (0..432).map(|i| (i % 17) as f32 / 16.0).collect())?;
        let (p, s) = (psnr(&img, &img)?, ssim(&img, &img)?);
        Ok((p == PSNR_CAP && (s - 1.0).abs() < 1e-12, format!("psnr {p}, ssim {s}")))
    })());
}
