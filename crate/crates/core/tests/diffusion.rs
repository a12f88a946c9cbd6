use dyn4d_core::camera::CameraPose;
use dyn4d_core::diffusion::*;
use dyn4d_core::params::{Adam, AdamConfig, ParamStore};
use dyn4d_core::rng::substream;
use dyn4d_core::tensor::check_gradients_at;
use dyn4d_core::{Tape, Tensor};
use proptest::prelude::*;

fn randn(shape: &[usize], seed: u64) -> Tensor {
    Tensor::randn(shape, 1.0, &mut substream(seed, "diffusion-it"))
}

fn blocks(c: usize, seed: u64) -> ParamStore {
    let mut rng = substream(seed, "blocks");
    let mut s = ParamStore::new();
    init_attention(&mut s, "sp", c, &mut rng);
    init_blended(&mut s, "a3", c, CAMERA_ENCODING_DIM, 0.5, &mut rng);
    init_blended(&mut s, "fr", c, FRAME_ENCODING_DIM, 0.01, &mut rng);
    s
}

#[test]
fn alpha_3d_zero_is_bitwise_identity() {
    let mut ps = blocks(6, 1);
    ps.insert("a3.alpha", Tensor::scalar(0.0));
    let x = randn(&[2, 3, 2, 2, 6], 2);
    let tape = Tape::new();
    let p = ps.bind_frozen(&tape);
    let out = blended_3d_attention(tape.constant(x.clone()), &p, "a3", &CameraTrajectory::orbit(3)).unwrap();
    assert!(out.value().bitwise_eq(&x));
}

#[test]
fn alpha_3d_one_single_view_is_spatial_attention() {
    let mut ps = blocks(6, 3);
    ps.insert("a3.alpha", Tensor::scalar(1.0));
    ps.insert("a3.embed", Tensor::zeros(&[CAMERA_ENCODING_DIM, 6]));
    let x = randn(&[2, 1, 3, 3, 6], 4);
    let tape = Tape::new();
    let p = ps.bind_frozen(&tape);
    let xv = tape.constant(x.clone());
    let out = blended_3d_attention(xv, &p, "a3", &CameraTrajectory::orbit(1)).unwrap().value();
    // Per-frame spatial attention over H*W with the same weights.
    let seq = xv.reshape(&[2, 9, 6]).unwrap().layer_norm(1e-5);
    let spatial = attention(seq, &p, "a3", None).unwrap().value();
    assert!(out.reshape(&[2, 9, 6]).unwrap().max_abs_diff(&spatial) < 1e-6);
}

#[test]
fn alpha_3d_gradient_matches_finite_differences() {
    let ps = blocks(4, 5);
    let x = randn(&[1, 2, 2, 2, 4], 6);
    let target = randn(&[1, 2, 2, 2, 4], 7);
    let cam = CameraTrajectory::orbit(2);
    let err = check_gradients_at(
        |tape, a| {
            let mut p = ps.bind_frozen(tape);
            p.replace("a3.alpha", a);
            let y = blended_3d_attention(tape.constant(x.clone()), &p, "a3", &cam)?;
            Ok(y.sub(tape.constant(target.clone()))?.square().sum())
        },
        ps.tensor("a3.alpha"),
        1e-3,
        &[0],
    )
    .unwrap();
    assert!(err < 1e-3, "{err}");
}

#[test]
fn alpha_f_zero_is_bitwise_identity() {
    let mut ps = blocks(5, 8);
    ps.insert("fr.alpha", Tensor::scalar(0.0));
    let x = randn(&[3, 2, 2, 2, 5], 9);
    let tape = Tape::new();
    let p = ps.bind_frozen(&tape);
    let refc = ReferenceCondition::present(randn(&[2, 2, 2, 5], 10)).unwrap();
    let out = blended_frame_attention(tape.constant(x.clone()), &p, "fr", &[0, 1, 2], &refc).unwrap();
    assert!(out.value().bitwise_eq(&x));
}

#[test]
fn single_frame_is_value_then_output_projection() {
    let c = 5;
    let mut ps = blocks(c, 11);
    ps.insert("fr.alpha", Tensor::scalar(1.0));
    ps.insert("fr.embed", Tensor::zeros(&[FRAME_ENCODING_DIM, c]));
    let x = randn(&[1, 2, 3, 2, c], 12);
    let tape = Tape::new();
    let p = ps.bind_frozen(&tape);
    let xv = tape.constant(x.clone());
    let out = blended_frame_attention(xv, &p, "fr", &[4], &ReferenceCondition::absent()).unwrap().value();
    let want = xv
        .layer_norm(1e-5)
        .matmul(p.get("fr.wv"))
        .unwrap()
        .matmul(p.get("fr.wo"))
        .unwrap()
        .value();
    assert!(out.max_abs_diff(&want) < 1e-5);
}

#[test]
fn uniform_sequence_repeats_single_position_output() {
    let ps = blocks(4, 13);
    let row = randn(&[1, 1, 4], 14);
    let rep = Tensor::from_fn(&[1, 5, 4], |i| row.data()[i % 4]);
    let tape = Tape::new();
    let p = ps.bind_frozen(&tape);
    let one = attention(tape.constant(row), &p, "sp", None).unwrap().value();
    let many = attention(tape.constant(rep), &p, "sp", None).unwrap().value();
    for s in 0..5 {
        for c in 0..4 {
            assert!((many.data()[s * 4 + c] - one.data()[c]).abs() < 1e-6);
        }
    }
}

#[test]
fn view_permutation_equivariance() {
    let ps = blocks(4, 15);
    let (f, v, h, w, c) = (2, 3, 2, 2, 4);
    let x = randn(&[f, v, h, w, c], 16);
    let poses = vec![
        CameraPose::new(0.0, 0.0).unwrap(),
        CameraPose::new(10.0, 120.0).unwrap(),
        CameraPose::new(-5.0, 240.0).unwrap(),
    ];
    let perm = [2usize, 0, 1];
    let permute = |t: &Tensor| {
        let cell = h * w * c;
        let mut out = Vec::with_capacity(t.numel());
        for fi in 0..f {
            for &vi in &perm {
                let o = (fi * v + vi) * cell;
                out.extend_from_slice(&t.data()[o..o + cell]);
            }
        }
        Tensor::new(t.shape(), out).unwrap()
    };
    let tape = Tape::new();
    let p = ps.bind_frozen(&tape);
    let a = blended_3d_attention(tape.constant(x.clone()), &p, "a3", &CameraTrajectory::new(poses.clone()).unwrap())
        .unwrap()
        .value();
    let pposes = perm.iter().map(|&i| poses[i]).collect();
    let b = blended_3d_attention(tape.constant(permute(&x)), &p, "a3", &CameraTrajectory::new(pposes).unwrap())
        .unwrap()
        .value();
    assert!(permute(&a).max_abs_diff(&b) < 1e-5);
}

#[test]
fn frame_permutation_equivariance_with_masked_reference() {
    let mut ps = blocks(4, 17);
    ps.insert("fr.alpha", Tensor::scalar(0.7));
    let (f, v, h, w, c) = (3, 2, 2, 1, 4);
    let x = randn(&[f, v, h, w, c], 18);
    let idx = [0usize, 5, 9];
    let perm = [1usize, 2, 0];
    let permute = |t: &Tensor| {
        let per = v * h * w * c;
        let mut out = Vec::new();
        for &fi in &perm {
            out.extend_from_slice(&t.data()[fi * per..(fi + 1) * per]);
        }
        Tensor::new(t.shape(), out).unwrap()
    };
    let refc = ReferenceCondition::present(randn(&[v, h, w, c], 19)).unwrap().masked();
    let tape = Tape::new();
    let p = ps.bind_frozen(&tape);
    let a = blended_frame_attention(tape.constant(x.clone()), &p, "fr", &idx, &refc).unwrap().value();
    let pidx: Vec<usize> = perm.iter().map(|&i| idx[i]).collect();
    let b = blended_frame_attention(tape.constant(permute(&x)), &p, "fr", &pidx, &refc).unwrap().value();
    assert!(permute(&a).max_abs_diff(&b) < 1e-5);
}

fn denoiser_inputs(dims: [usize; 5], seed: u64) -> (Tensor, Tensor, ReferenceCondition) {
    let [f, v, h, w, c] = dims;
    (
        randn(&dims, seed),
        randn(&[f, h, w, c], seed + 1),
        ReferenceCondition::present(randn(&[v, h, w, c], seed + 2)).unwrap(),
    )
}

#[test]
fn zero_alphas_reduce_to_spatial_only_path() {
    let mut m = ToyDenoiser::new(DenoiserConfig::default(), 20).unwrap();
    m.params.insert("conv_out.w", randn(&[16, 4], 21));
    m.params.insert("attn3d.alpha", Tensor::scalar(0.0));
    m.params.insert("frame.alpha", Tensor::scalar(0.0));
    let dims = [2, 2, 3, 3, 4];
    let (z, j, r) = denoiser_inputs(dims, 22);
    let tape = Tape::new();
    let p = m.params.bind_frozen(&tape);
    let cam = CameraTrajectory::orbit(2);
    let run = |spatial_only| {
        m.forward(&p, tape.constant(z.clone()), 0.7, tape.constant(j.clone()), &cam, &[0, 1], &r, spatial_only)
            .unwrap()
            .value()
    };
    let full = run(false);
    let spatial = run(true);
    assert!(full.bitwise_eq(&spatial));
    assert!(full.data().iter().any(|&v| v != 0.0));
}

#[test]
fn masked_reference_forward_is_bitwise_absent_forward() {
    let mut m = ToyDenoiser::new(DenoiserConfig::default(), 23).unwrap();
    m.params.insert("conv_out.w", randn(&[16, 4], 24));
    m.params.insert("frame.alpha", Tensor::scalar(0.6));
    let dims = [2, 2, 2, 2, 4];
    let (z, j, r) = denoiser_inputs(dims, 25);
    let cam = CameraTrajectory::orbit(2);
    let lb = LatentBlock::new(z).unwrap();
    let masked = m.predict(&lb, 0.3, &j, &cam, &[0, 1], &r.clone().masked()).unwrap();
    let absent = m.predict(&lb, 0.3, &j, &cam, &[0, 1], &ReferenceCondition::absent()).unwrap();
    let live = m.predict(&lb, 0.3, &j, &cam, &[0, 1], &r).unwrap();
    assert!(masked.values().bitwise_eq(absent.values()));
    assert!(masked.values().max_abs_diff(live.values()) > 1e-6);
}

#[test]
fn every_denoiser_parameter_gets_a_validated_gradient() {
    let mut m = ToyDenoiser::new(DenoiserConfig { latent_channels: 2, hidden: 4, ..Default::default() }, 26).unwrap();
    m.params.insert("conv_out.w", randn(&[4, 2], 27));
    m.params.insert("frame.alpha", Tensor::scalar(0.4));
    let dims = [2, 2, 2, 1, 2];
    let (z, j, r) = denoiser_inputs(dims, 28);
    let target = randn(&dims, 31);
    let cam = CameraTrajectory::orbit(2);
    let names: Vec<String> = m.params.names().map(String::from).collect();
    assert!(names.iter().any(|n| n == "attn3d.alpha") && names.iter().any(|n| n == "frame.alpha"));
    for name in names {
        let t = m.params.tensor(&name).clone();
        let coords: Vec<usize> = (0..t.numel()).step_by((t.numel() / 6).max(1)).collect();
        let err = check_gradients_at(
            |tape, x| {
                let mut p = m.params.bind_frozen(tape);
                p.replace(&name, x);
                let y = m.forward(&p, tape.constant(z.clone()), 0.5, tape.constant(j.clone()), &cam, &[0, 3], &r, false)?;
                Ok(y.sub(tape.constant(target.clone()))?.square().sum())
            },
            &t,
            1e-3,
            &coords,
        )
        .unwrap();
        assert!(err < 5e-3, "{name}: {err}");
    }
}

#[test]
fn ten_adam_steps_reduce_loss_on_a_fixed_batch() {
    let mut m = ToyDenoiser::new(DenoiserConfig { latent_channels: 4, hidden: 8, ..Default::default() }, 32).unwrap();
    let dims = [2, 2, 4, 4, 4];
    let (x0, j, r) = denoiser_inputs(dims, 33);
    let batch = ToyBatch {
        x0,
        video: j,
        cam: CameraTrajectory::orbit(2),
        frame_indices: vec![0, 1],
        reference: r,
        sigma: 0.8,
        eps: randn(&dims, 34),
    };
    let mut opt = Adam::new(AdamConfig { lr: 1e-3, eps: 1e-8, ..Default::default() });
    let mut losses = Vec::new();
    for _ in 0..10 {
        let tape = Tape::new();
        let p = m.params.bind(&tape, |_| false);
        let loss = m.batch_loss(&p, &tape, &batch).unwrap();
        losses.push(loss.item());
        let g = tape.backward(loss).unwrap();
        opt.step(&mut m.params, &p, &g).unwrap();
    }
    assert!(losses[9] < losses[0], "{losses:?}");
    let head: f32 = losses[..3].iter().sum();
    let tail: f32 = losses[7..].iter().sum();
    assert!(tail < head, "{losses:?}");
}

#[test]
fn masking_rate_is_binomially_plausible() {
    let r = ReferenceCondition::present(Tensor::zeros(&[1, 1, 1, 1])).unwrap();
    let masked = (0..10_000u64).filter(|&s| apply_random_ref_masking(&r, 0.3, s).unwrap().mask_flag).count();
    let frac = masked as f32 / 10_000.0;
    assert!((0.27..=0.33).contains(&frac), "{frac}");
    let a = apply_random_ref_masking(&r, 0.5, 42).unwrap();
    let b = apply_random_ref_masking(&r, 0.5, 42).unwrap();
    assert_eq!(a, b);
}

#[test]
fn extension_plan_of_34_frames() {
    let plan = autoregressive_extension_plan(34, 12).unwrap();
    assert_eq!(plan.len(), 3);
    check_plan(&plan, 34, 12);
}

fn check_plan(plan: &[ExtensionWindow], total: usize, window: usize) {
    assert_eq!(plan[0].start, 0);
    assert_eq!(plan[0].anchor, None);
    assert_eq!(plan.last().unwrap().end, total);
    for w in plan {
        assert!(w.end > w.start && w.end - w.start <= window);
    }
    for pair in plan.windows(2) {
        assert_eq!(pair[1].start, pair[0].end - 1);
        assert_eq!(pair[1].anchor, Some(pair[0].end - 1));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn layouts_round_trip(f in 1usize..4, v in 1usize..4, h in 1usize..4, w in 1usize..4, c in 1usize..5, seed in 0u64..1000) {
        let dims = [f, v, h, w, c];
        let l = LatentBlock::new(randn(&dims, seed)).unwrap();
        prop_assert!(from_view_layout(&reshape_for_view_attention(&l), dims).unwrap().values().bitwise_eq(l.values()));
        prop_assert!(from_3d_layout(&reshape_for_3d_attention(&l), dims).unwrap().values().bitwise_eq(l.values()));
        prop_assert!(from_frame_layout(&reshape_for_frame_attention(&l), dims).unwrap().values().bitwise_eq(l.values()));
    }

    #[test]
    fn guidance_is_monotone(v in 1usize..10, f in 1usize..20, vi in 0usize..10, fi in 0usize..20, lo in 0.0f32..3.0, span in 0.0f32..3.0) {
        prop_assume!(vi < v && fi < f);
        let s = cfg_scale_schedule(lo, lo + span, vi, v, fi, f).unwrap();
        if vi + 1 < v {
            prop_assert!(cfg_scale_schedule(lo, lo + span, vi + 1, v, fi, f).unwrap() >= s);
        }
        if fi + 1 < f {
            prop_assert!(cfg_scale_schedule(lo, lo + span, vi, v, fi + 1, f).unwrap() >= s);
        }
        prop_assert!(s >= lo && s <= lo + span + 1e-6);
    }

    #[test]
    fn extension_plans_cover_with_single_overlap(total in 1usize..80, window in 2usize..16) {
        let plan = autoregressive_extension_plan(total, window).unwrap();
        check_plan(&plan, total, window);
    }
}

fn fixture_matrices() -> Vec<dyn4d_core::matrix::ImageMatrix> {
    use dyn4d_core::camera::OrbitCamera;
    use dyn4d_core::curation::{render_pseudo_dataset, SceneSpec};
    vec![render_pseudo_dataset(&SceneSpec::demo(), &OrbitCamera::default(), &CameraPose::orbit(4, 10.0), 8, 32, 32).unwrap()]
}

#[test]
fn progressive_toy_training_reduces_loss_and_is_deterministic() {
    let data = fixture_matrices();
    let cfg = ToyTrainConfig::default();
    assert_eq!(cfg.phase1_steps + cfg.phase2_steps, 400);
    let (model, report) = train_toy(&data, &cfg).unwrap();
    assert_eq!(report.steps.len(), 400);
    let reduction = 1.0 - report.final_eval_loss / report.initial_eval_loss;
    assert!(reduction >= 0.3, "eval loss {} -> {} ({:.1}%)", report.initial_eval_loss, report.final_eval_loss, 100.0 * reduction);

    assert_eq!(report.phase1.params.tensor("frame.alpha").item(), 0.0);
    assert!(report.steps.iter().take(cfg.phase1_steps).all(|s| s.phase == 1));
    assert!(report.steps.iter().skip(cfg.phase1_steps).all(|s| s.phase == 2));

    let (again, rerun) = train_toy(&data, &cfg).unwrap();
    assert!(model.params.bitwise_eq(&again.params));
    let bits = |r: &ToyTrainReport| r.steps.iter().map(|s| s.loss.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&report), bits(&rerun));
}
