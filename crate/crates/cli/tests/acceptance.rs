//! Acceptance criteria 1 to 9. Prints one pass/fail line per criterion and
//! fails if any criterion fails. Criteria 5 and 9 share one run of
//! `scripts/pipeline.sh` (about six minutes on one core).

use dyn4d_cli::commands::{selftest, synth};
use dyn4d_core::camera::{CameraPose, OrbitCamera};
use dyn4d_core::curation::{rectify, render_pseudo_dataset, AnimatedMesh, CurationConfig, Motion, Primitive, RejectReason, SceneSpec, Shape};
use dyn4d_core::diffusion::{train_toy, ToyTrainConfig};
use dyn4d_core::matrix::ImageMatrix;
use dyn4d_core::metrics::{frechet_distance, fvd_variant, GaussianStats, ProjectionEmbedder, ScanKind};
use dyn4d_core::optim::{reconstruction_loss, LossWeights, RenderedPatch, TargetPatch};
use dyn4d_core::rng::substream;
use dyn4d_core::{Tape, Tensor};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

type Outcome = Result<(bool, String), String>;

fn check(cond: bool, detail: String) -> Outcome {
    Ok((cond, detail))
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// -------------------------------------------------------------- shared runs

struct SelftestRun {
    report: selftest::Report,
    elapsed: Duration,
}

fn selftest_run() -> &'static SelftestRun {
    static R: OnceLock<SelftestRun> = OnceLock::new();
    R.get_or_init(|| {
        let t = Instant::now();
        let report = selftest::run(&selftest::Options::default());
        SelftestRun {
            report,
            elapsed: t.elapsed(),
        }
    })
}

fn section_summary(section: &str) -> Outcome {
    let r = &selftest_run().report;
    let checks: Vec<_> = r.checks.iter().filter(|c| c.section == section).collect();
    let failed: Vec<String> = checks.iter().filter(|c| !c.passed).map(|c| format!("{} ({})", c.name, c.detail)).collect();
    if failed.is_empty() {
        check(!checks.is_empty(), format!("{} {section} checks", checks.len()))
    } else {
        check(false, format!("failed: {}", failed.join("; ")))
    }
}

struct PipelineRun {
    out: PathBuf,
    elapsed: Duration,
    status: Result<(), String>,
}

fn pipeline() -> &'static PipelineRun {
    static R: OnceLock<PipelineRun> = OnceLock::new();
    R.get_or_init(|| {
        let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
        let out = std::env::temp_dir().join(format!("dyn4d-acceptance-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&out);
        let t = Instant::now();
        let status = Command::new("bash")
            .arg(root.join("scripts/pipeline.sh"))
            .arg(&out)
            .env("DYN4D", env!("CARGO_BIN_EXE_dyn4d"))
            .output()
            .map_err(err)
            .and_then(|o| {
                if o.status.success() {
                    Ok(())
                } else {
                    Err(format!("pipeline failed: {}", String::from_utf8_lossy(&o.stderr).trim()))
                }
            });
        PipelineRun {
            out,
            elapsed: t.elapsed(),
            status,
        }
    })
}

fn read_json(p: &Path) -> Result<Value, String> {
    let bytes = std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()))?;
    serde_json::from_slice(&bytes).map_err(err)
}

// ---------------------------------------------------------------- criteria

/// Every differentiable op and both blended attention blocks, 20 seeds,
/// relative error < 1e-3, under a minute.
fn c1_gradients() -> Outcome {
    let run = selftest_run();
    let grads: Vec<_> = run.report.checks.iter().filter(|c| c.section == "gradient").collect();
    let covers_attention = ["attention_3d.input", "attention_3d.alpha", "frame_attention.input", "frame_attention.alpha"]
        .iter()
        .all(|n| grads.iter().any(|c| c.name == *n));
    let failed: Vec<&str> = grads.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    let secs = run.elapsed.as_secs_f64();
    check(
        failed.is_empty() && covers_attention && selftest::Options::default().seeds >= 20 && selftest::GRAD_TOL <= 1e-3 && secs < 60.0,
        format!("{} ops x 20 seeds, tol {:e}, {secs:.1} s, failed {failed:?}", grads.len(), selftest::GRAD_TOL),
    )
}

fn c2_architecture() -> Outcome {
    section_summary("architecture")
}

fn c3_rendering() -> Outcome {
    section_summary("rendering")
}

/// Mean distance of each vertex from its frame-0 position, maximised over
/// vertices, with a plain loop.
fn motion_oracle(m: &AnimatedMesh) -> f64 {
    let base = m.frame(0);
    let mut best = 0.0f64;
    for v in 0..m.vertex_count() {
        let mut d = 0.0f64;
        for f in 1..m.frame_count() {
            let (p, q) = (m.frame(f)[v], base[v]);
            d += ((p[0] - q[0]) as f64).hypot((p[1] - q[1]) as f64).hypot((p[2] - q[2]) as f64);
        }
        best = best.max(d / (m.frame_count() - 1) as f64);
    }
    best
}

/// Bounding-box diagonal ratio against frame 0 furthest from 1 in log
/// space, from the raw vertices.
fn scale_oracle(m: &AnimatedMesh) -> f64 {
    let diag = |f: usize| {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in m.frame(f) {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k] as f64);
                hi[k] = hi[k].max(p[k] as f64);
            }
        }
        (0..3).map(|k| (hi[k] - lo[k]).powi(2)).sum::<f64>().sqrt()
    };
    let d0 = diag(0);
    (0..m.frame_count()).map(|f| diag(f) / d0).fold(1.0, |a, r| if r.ln().abs() > a.ln().abs() { r } else { a })
}

/// Drift recovery and idempotence from the invariant suite, plus the
/// verdicts and scores on the three-object fixture.
fn c4_curation() -> Outcome {
    let (ok, detail) = section_summary("curation")?;
    let cfg = CurationConfig::default();
    let mut notes = vec![detail];
    let mut pass = ok;
    for (id, mesh) in synth::fixture_meshes().map_err(err)? {
        let (r, report) = rectify(&mesh, &cfg).map_err(err)?;
        let motion = motion_oracle(&r);
        let frames = mesh.frame_count();
        let scale = scale_oracle(&r);
        // The inflating arm grows by 5% per frame; waving moves its box a
        // little on top of that.
        let (want_reason, range_ok) = match id.as_str() {
            "waving_arm" => (None, true),
            "rigid_box" => (Some(RejectReason::LowMotion), motion < 1e-5 && (scale - 1.0).abs() < 1e-5),
            _ => (Some(RejectReason::ScaleInconsistent), (scale / (1.0 + 0.05 * (frames - 1) as f64) - 1.0).abs() < 0.05),
        };
        let score_ok = (report.motion_score as f64 - motion).abs() < 1e-5;
        let scale_ok = (report.scale_ratio as f64 - scale).abs() < 1e-5;
        pass &= report.reject_reason == want_reason && score_ok && scale_ok && range_ok;
        notes.push(format!(
            "{id}: {} motion {:.4} (oracle {motion:.4}) scale {:.4} (oracle {scale:.4})",
            report.reject_reason.map_or("accepted", |r| r.as_str()),
            report.motion_score,
            report.scale_ratio
        ));
    }
    check(pass, notes.join(", "))
}

/// Stage 2 beats stage 1 against ground truth with the oracle refiner.
fn c5_two_stage() -> Outcome {
    let run = pipeline();
    run.status.clone()?;
    let fit = read_json(&run.out.join("fit/fit_report.json"))?;
    let cfg = read_json(&run.out.join("fit/run_manifest.json"))?;
    let mse = |stage: &str| fit[format!("{stage}_vs_ground_truth")]["mse"].as_f64().ok_or("missing ground-truth error");
    let (m1, m2) = (mse("stage1")?, mse("stage2")?);
    let fit_s = fit["fit_seconds"].as_f64().unwrap_or(f64::NAN);
    let c = &cfg["config"];
    let setup_ok = fit["refiner"] == "oracle" && c["oracle_blend"] == 0.5 && c["optim"]["stage2_noise_step"] == 25;
    check(
        setup_ok && m2 < m1 && fit_s < 900.0,
        format!("stage1 mse {m1:.5}, stage2 mse {m2:.5}, fit {fit_s:.0} s (oracle blend 0.5, noise step 25)"),
    )
}

fn c6_visibility() -> Outcome {
    let (ok, detail) = section_summary("visibility")?;
    let n = 6;
    let mut rng = substream(4, "acceptance-k2");
    let rgb = Tensor::uniform(&[n * n * 3], 0.0, 1.0, &mut rng).data().to_vec();
    let gt = Tensor::uniform(&[n * n * 3], 0.0, 1.0, &mut rng).data().to_vec();
    let w0 = Tensor::uniform(&[n * n], 0.0, 1.0, &mut rng).data().to_vec();
    let mse = |k: f32| -> Result<f64, String> {
        let t = TargetPatch {
            width: n,
            height: n,
            rgb: gt.clone(),
            alpha: vec![1.0; n * n],
            weight: w0.iter().map(|w| w * k).collect(),
            normal: None,
        };
        let tape = Tape::new();
        let leaf = |v: Vec<f32>, ch: usize| Tensor::new(&[n * n, ch], v).map(|t| tape.leaf(t)).map_err(err);
        let r = RenderedPatch {
            width: n,
            height: n,
            rgb: leaf(rgb.clone(), 3)?,
            alpha: leaf(vec![1.0; n * n], 1)?,
            depth: leaf(vec![1.0; n * n], 1)?,
            normal: None,
        };
        let w = LossWeights { mse: 1.0, ..LossWeights::zero() };
        Ok(reconstruction_loss(&r, &t, &w).map_err(err)?.1.mse as f64)
    };
    let base = mse(1.0)?;
    let mut worst = 0.0f64;
    for k in [0.9f32, 0.5, 0.25, 0.1] {
        let want = (k as f64).powi(2) * base;
        worst = worst.max((mse(k)? - want).abs() / want);
    }
    check(ok && worst <= 1e-6, format!("{detail}; k^2 scaling rel err {worst:.1e}"))
}

fn scene_matrix() -> Result<ImageMatrix, String> {
    render_pseudo_dataset(&SceneSpec::demo(), &OrbitCamera::default(), &CameraPose::orbit(4, 10.0), 8, 32, 32).map_err(err)
}

fn reorder(m: &ImageMatrix, cell: impl Fn(usize, usize) -> (usize, usize)) -> ImageMatrix {
    let mut out = m.clone();
    for v in 0..m.views {
        for f in 0..m.frames {
            let (sv, sf) = cell(v, f);
            *out.cell_mut(v, f) = m.cell(sv, sf).clone();
        }
    }
    out
}

fn c7_metrics() -> Outcome {
    let (ok, detail) = section_summary("metrics")?;
    // d-dimensional closed forms: identity covariances reduce to the squared
    // mean distance; diagonal covariances to a per-axis sum.
    let mu = DVector::from_vec(vec![1.0, -2.0, 0.5, 0.0, 3.0]);
    let eye = DMatrix::<f64>::identity(5, 5);
    let p = GaussianStats::new(mu.clone(), eye.clone()).map_err(err)?;
    let q = GaussianStats::new(DVector::zeros(5), eye).map_err(err)?;
    let e1 = (frechet_distance(&p, &q).map_err(err)? - mu.norm_squared()).abs();
    let a = [0.5, 1.0, 2.0, 4.0, 9.0];
    let b = [2.0, 1.0, 0.5, 1.0, 4.0];
    let pa = GaussianStats::new(DVector::zeros(5), DMatrix::from_diagonal(&DVector::from_row_slice(&a))).map_err(err)?;
    let pb = GaussianStats::new(DVector::zeros(5), DMatrix::from_diagonal(&DVector::from_row_slice(&b))).map_err(err)?;
    let want: f64 = a.iter().zip(&b).map(|(x, y)| (x.sqrt() - y.sqrt()).powi(2)).sum();
    let e2 = (frechet_distance(&pa, &pb).map_err(err)? - want).abs();

    let m = scene_matrix()?;
    let e = ProjectionEmbedder::default();
    let mut g = m.clone();
    let mut rng = substream(9, "acceptance-noise");
    for c in &mut g.cells {
        c.data.iter_mut().for_each(|v| *v = (*v + 0.02 * (rng.random::<f32>() - 0.5)).clamp(0.0, 1.0));
    }
    let fperm = [0, 5, 2, 7, 1, 4, 6, 3];
    let vperm = [2, 0, 3, 1];
    let fvd = |k, x: &ImageMatrix| fvd_variant(k, x, &m, &e).map_err(err);
    let (f0, f1) = (fvd(ScanKind::F, &g)?, fvd(ScanKind::F, &reorder(&g, |v, f| (v, fperm[f])))?);
    let (v0, v1) = (fvd(ScanKind::V, &g)?, fvd(ScanKind::V, &reorder(&g, |v, f| (vperm[v], f)))?);
    check(
        ok && e1 < 1e-6 && e2 < 1e-6 && f1 > f0 && v1 > v0,
        format!("{detail}; closed-form err {e1:.1e}/{e2:.1e}; fvd-f {f0:.3} -> {f1:.3} shuffled; fvd-v {v0:.3} -> {v1:.3} shuffled"),
    )
}

/// A spinning box beside a bobbing sphere; the second fixture scene.
fn second_scene() -> SceneSpec {
    SceneSpec {
        primitives: vec![
            Primitive {
                shape: Shape::Box { half_extents: [0.12, 0.08, 0.16] },
                albedo: [0.3, 0.7, 0.35],
                back_albedo: Some([0.8, 0.8, 0.3]),
                motion: Motion {
                    position: [0.0, -0.12, 0.0],
                    spin_deg: 12.0,
                    ..Default::default()
                },
            },
            Primitive {
                shape: Shape::Sphere { radius: 0.1 },
                albedo: [0.75, 0.2, 0.6],
                back_albedo: None,
                motion: Motion {
                    position: [0.0, 0.2, 0.0],
                    amplitude: [0.0, 0.0, 0.12],
                    ..Default::default()
                },
            },
        ],
    }
}

fn c8_toy_training() -> Outcome {
    let cam = OrbitCamera::default();
    let poses = CameraPose::orbit(4, 10.0);
    let data = [SceneSpec::demo(), second_scene()]
        .iter()
        .map(|s| render_pseudo_dataset(s, &cam, &poses, 8, 32, 32))
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?;
    let cfg = ToyTrainConfig::default();
    let (a, ra) = train_toy(&data, &cfg).map_err(err)?;
    let (b, rb) = train_toy(&data, &cfg).map_err(err)?;
    let steps = ra.steps.len();
    let reduction = 1.0 - ra.final_eval_loss / ra.initial_eval_loss;
    let same = a.params.bitwise_eq(&b.params) && ra.steps.iter().zip(&rb.steps).all(|(x, y)| x.loss.to_bits() == y.loss.to_bits());
    let alpha_f = ra.phase1.params.tensor("frame.alpha").item();
    check(
        steps == 400 && reduction >= 0.3 && same && alpha_f == 0.0,
        format!(
            "{steps} steps on 2 scenes, eval loss {:.4} -> {:.4} ({:.1}% lower), rerun bitwise {same}, phase-1 alpha_f {alpha_f}",
            ra.initial_eval_loss,
            ra.final_eval_loss,
            100.0 * reduction
        ),
    )
}

/// Frozen after the first oracle run measured 23.6 dB.
const PSNR_THRESHOLD_DB: f64 = 22.0;

fn c9_end_to_end() -> Outcome {
    let run = pipeline();
    run.status.clone()?;
    let report = read_json(&run.out.join("report.json"))?;
    let psnr = report["metrics"]["psnr"].as_f64().ok_or("report.json has no psnr")?;
    let fv4d = report["metrics"]["fv4d"].as_f64().unwrap_or(f64::NAN);
    check(
        psnr > PSNR_THRESHOLD_DB,
        format!("psnr {psnr:.2} dB (> {PSNR_THRESHOLD_DB}), fv4d {fv4d:.3}, script {:.0} s", run.elapsed.as_secs_f64()),
    )
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("gradient suite", c1_gradients),
        ("architecture invariants", c2_architecture),
        ("rendering analytics", c3_rendering),
        ("curation oracle", c4_curation),
        ("two-stage refinement", c5_two_stage),
        ("visibility weighting", c6_visibility),
        ("metrics", c7_metrics),
        ("toy training", c8_toy_training),
        ("end to end", c9_end_to_end),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (pass, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
        println!("criterion {} {name}: {} | {detail}", i + 1, if pass { "PASS" } else { "FAIL" });
        if !pass {
            failed.push(i + 1);
        }
    }
    let _ = std::fs::remove_dir_all(&pipeline().out);
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
