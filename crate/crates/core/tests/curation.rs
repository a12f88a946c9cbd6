use dyn4d_core::camera::{CameraPose, OrbitCamera};
use dyn4d_core::curation::*;
use dyn4d_core::Error;
use proptest::prelude::*;

fn tri_faces(n: usize) -> Vec<[u32; 3]> {
    (0..n as u32 - 2).map(|i| [0, i + 1, i + 2]).collect()
}

fn mesh(frames: Vec<Vec<[f32; 3]>>) -> AnimatedMesh {
    let n = frames[0].len();
    AnimatedMesh::new(frames, tri_faces(n), 24.0).unwrap()
}

fn unit_cube() -> Vec<[f32; 3]> {
    box_surface([0.0; 3], [0.5; 3], 2).0
}

fn translated(base: &[[f32; 3]], t: &[[f32; 3]]) -> AnimatedMesh {
    let (_, faces) = box_surface([0.0; 3], [0.5; 3], 2);
    let frames = t.iter().map(|d| base.iter().map(|p| [p[0] + d[0], p[1] + d[1], p[2] + d[2]]).collect()).collect();
    AnimatedMesh::new(frames, faces, 24.0).unwrap()
}

fn max_extent(m: &AnimatedMesh, f: usize) -> f32 {
    let (lo, hi) = m.bounds(f);
    (0..3).map(|k| hi[k] - lo[k]).fold(0.0, f32::max)
}

#[test]
fn static_mesh_has_zero_offsets() {
    let m = mesh(vec![unit_cube(); 4]);
    assert!(mean_temporal_offset(&m).unwrap().iter().all(|&d| d == 0.0));
}

#[test]
fn oscillating_vertex_has_unit_offset() {
    let frames = (0..6)
        .map(|f| {
            let x = if f == 0 { 0.0 } else if f % 2 == 1 { 1.0 } else { -1.0 };
            vec![[x, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
        })
        .collect();
    let d = mean_temporal_offset(&mesh(frames)).unwrap();
    assert_eq!(d, vec![1.0, 0.0, 0.0]);
}

#[test]
fn rigid_translation_offsets_match_direct_loop() {
    let t = [[0.0, 0.0, 0.0], [0.1, -0.2, 0.05], [0.3, 0.1, -0.4], [-0.2, 0.25, 0.1]];
    let m = translated(&unit_cube(), &t);
    let d = mean_temporal_offset(&m).unwrap();
    let want: f64 = t[1..].iter().map(|v| v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt()).sum::<f64>() / 3.0;
    for (i, &di) in d.iter().enumerate() {
        // Direct per-vertex loop over the stored positions.
        let mut acc = 0.0f64;
        for f in 1..4 {
            let (p, p0) = (m.frame(f)[i], m.frame(0)[i]);
            acc += (0..3).map(|k| (p[k] as f64 - p0[k] as f64).powi(2)).sum::<f64>().sqrt();
        }
        assert!((di as f64 - acc / 3.0).abs() < 1e-7);
        assert!((di as f64 - want).abs() < 1e-6, "{di} vs {want}");
    }
}

#[test]
fn offsets_need_two_frames() {
    assert!(matches!(mean_temporal_offset(&mesh(vec![unit_cube()])), Err(Error::Curation(_))));
}

#[test]
fn bimodal_offsets_split_at_the_median() {
    let d: Vec<f32> = (0..10).map(|i| if i % 2 == 0 { 0.0 } else { 1.0 + i as f32 }).collect();
    let mask = detect_static_region(&d, 0.5).unwrap();
    assert_eq!(mask, (0..10).map(|i| i % 2 == 0).collect::<Vec<_>>());
}

#[test]
fn identical_offsets_mark_everything() {
    assert!(detect_static_region(&[0.0; 7], 0.25).unwrap().iter().all(|&m| m));
    assert!(detect_static_region(&[0.3; 7], 0.25).unwrap().iter().all(|&m| m));
    assert!(detect_static_region(&[0.3; 7], 0.0).is_err());
    assert!(detect_static_region(&[0.3; 7], 1.0).is_err());
}

#[test]
fn lowest_quartile_matches_sort_and_cut() {
    // A shuffled gradient of distinct offsets.
    let d: Vec<f32> = (0..40).map(|i| ((i * 17) % 40) as f32 * 0.01).collect();
    let mask = detect_static_region(&d, 0.25).unwrap();
    let mut idx: Vec<usize> = (0..40).collect();
    idx.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let mut want = vec![false; 40];
    idx[..10].iter().for_each(|&i| want[i] = true);
    assert_eq!(mask, want);
}

#[test]
fn rigid_translation_is_recovered_exactly() {
    // Dyadic values keep every subtraction exact.
    let t = [[0.0, 0.0, 0.0], [0.125, -0.25, 0.0625], [0.375, 0.5, -0.25]];
    let m = translated(&unit_cube(), &t);
    let mask = detect_static_region(&mean_temporal_offset(&m).unwrap(), 0.25).unwrap();
    assert_eq!(global_translation(&m, &mask).unwrap(), t.to_vec());
}

#[test]
fn static_mesh_has_zero_translation() {
    let m = mesh(vec![unit_cube(); 3]);
    let mask = vec![true; m.vertex_count()];
    assert_eq!(global_translation(&m, &mask).unwrap(), vec![[0.0; 3]; 3]);
    assert!(global_translation(&m, &vec![false; m.vertex_count()]).is_err());
}

#[test]
fn waving_arm_base_is_pinned_after_subtraction() {
    let m = waving_arm(8, [0.013, 0.0, 0.0]).unwrap();
    let mask = detect_static_region(&mean_temporal_offset(&m).unwrap(), 0.25).unwrap();
    let t = global_translation(&m, &mask).unwrap();
    let r = subtract_translation(&m, &t).unwrap();
    let nb = waving_arm_base_len();
    let d = mean_temporal_offset(&r).unwrap();
    assert!(d[..nb].iter().all(|&v| v < 1e-6), "max base residual {}", d[..nb].iter().fold(0.0f32, |a, &b| a.max(b)));
    assert!(d[nb..].iter().any(|&v| v > 0.05));
}

#[test]
fn drifting_cube_is_frozen_and_unit_sized() {
    let t: Vec<[f32; 3]> = (0..5).map(|f| [0.07 * f as f32, -0.03 * f as f32, 0.011 * f as f32]).collect();
    let base: Vec<[f32; 3]> = unit_cube().iter().map(|p| [p[0] * 0.6 + 0.2, p[1] * 0.3, p[2] * 0.45 - 0.1]).collect();
    let (r, report) = rectify(&translated(&base, &t), &CurationConfig::default()).unwrap();
    for f in 1..5 {
        for (p, q) in r.frame(f).iter().zip(r.frame(0)) {
            assert!((0..3).all(|k| (p[k] - q[k]).abs() < 1e-6));
        }
    }
    assert!((max_extent(&r, 0) - 1.0).abs() < 1e-6);
    for (got, want) in report.global_offsets.iter().zip(&t) {
        assert!((0..3).all(|k| (got[k] - want[k]).abs() < 1e-6));
    }
    assert_eq!(report.reject_reason, Some(RejectReason::LowMotion));
}

#[test]
fn centred_unit_mesh_is_unchanged() {
    let m = mesh(vec![unit_cube(); 3]);
    let (r, report) = rectify(&m, &CurationConfig::default()).unwrap();
    assert_eq!(r, m);
    assert_eq!(report.global_offsets, vec![[0.0; 3]; 3]);
}

#[test]
fn rectify_is_idempotent() {
    let m = waving_arm(8, [0.02, 0.0, 0.0]).unwrap().map_positions(|_, p| [p[0] * 1.7 + 0.3, p[1] * 1.7 - 0.2, p[2] * 1.7]).unwrap();
    let cfg = CurationConfig::default();
    let (once, _) = rectify(&m, &cfg).unwrap();
    let (twice, report) = rectify(&once, &cfg).unwrap();
    assert_eq!(once, twice);
    assert_eq!(report.global_offsets, vec![[0.0; 3]; 8]);
}

#[test]
fn degenerate_mesh_is_rejected_as_nonfinite() {
    let m = mesh(vec![vec![[0.1, 0.2, 0.3]; 4]; 3]);
    let (r, report) = rectify(&m, &CurationConfig::default()).unwrap();
    assert_eq!(r, m);
    assert!(!report.accepted);
    assert_eq!(report.reject_reason, Some(RejectReason::Nonfinite));
}

#[test]
fn static_mesh_is_rejected_for_low_motion() {
    let r = filter(&mesh(vec![unit_cube(); 4]), &CurationConfig::default()).unwrap();
    assert!(!r.accepted);
    assert_eq!(r.reject_reason, Some(RejectReason::LowMotion));
}

#[test]
fn doubling_bbox_is_rejected_for_scale() {
    let s = [1.0f32, 1.5, 2.0, 1.5, 1.0];
    let frames = s.iter().map(|&k| unit_cube().iter().map(|p| p.map(|v| v * k)).collect()).collect();
    let r = filter(&mesh(frames), &CurationConfig::default()).unwrap();
    assert!((r.scale_ratio - 2.0).abs() < 1e-6);
    assert_eq!(r.reject_reason, Some(RejectReason::ScaleInconsistent));
    // Shrinking by half is just as inconsistent.
    let frames = s.iter().map(|&k| unit_cube().iter().map(|p| p.map(|v| v / k)).collect()).collect();
    let r = filter(&mesh(frames), &CurationConfig::default()).unwrap();
    assert!((r.scale_ratio - 0.5).abs() < 1e-6);
    assert_eq!(r.reject_reason, Some(RejectReason::ScaleInconsistent));
}

#[test]
fn waving_arm_is_accepted() {
    let cfg = CurationConfig::default();
    let (r, report) = rectify(&waving_arm(8, [0.013, 0.0, 0.0]).unwrap(), &cfg).unwrap();
    // Independent scores: arm tip swing and diagonal drift on the output.
    let d = mean_temporal_offset(&r).unwrap();
    let motion = d.iter().fold(0.0f32, |a, &b| a.max(b));
    assert!((report.motion_score - motion).abs() < 1e-7);
    assert!(motion > cfg.min_motion);
    assert!(report.scale_ratio > 1.0 / cfg.max_scale_ratio && report.scale_ratio < cfg.max_scale_ratio);
    assert!(report.accepted, "{report:?}");
    assert!(report.reject_reason.is_none());
    let nb = waving_arm_base_len() as f32;
    assert!(report.static_fraction >= 0.25 && report.static_fraction <= nb / r.vertex_count() as f32 + 1e-6);
}

#[test]
fn obj_sequence_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let m = waving_arm(3, [0.01, 0.0, 0.0]).unwrap();
    let manifest = MeshManifest::write_set(dir.path(), &[("arm".into(), m.clone())]).unwrap();
    let loaded = MeshManifest::load(&manifest).unwrap();
    assert_eq!(loaded.objects[0].frames.len(), 3);
    assert_eq!(loaded.load_object(dir.path(), 0).unwrap(), m);

    let other = mesh(vec![unit_cube(); 1]);
    let p = other.save_obj_sequence(dir.path(), "tri").unwrap();
    let err = AnimatedMesh::load_obj_sequence(&[manifest.parent().unwrap().join(&loaded.objects[0].frames[0]), p[0].clone()], 24.0);
    assert!(matches!(err, Err(Error::Curation(_))));
    assert!(AnimatedMesh::load_obj_sequence(&[dir.path().join("missing.obj")], 24.0).unwrap_err().is_io());
}

#[test]
fn mesh_invariants_are_enforced() {
    assert!(AnimatedMesh::new(vec![vec![[0.0; 3]; 2]], vec![], 24.0).is_err());
    assert!(AnimatedMesh::new(vec![vec![[0.0; 3]; 3], vec![[0.0; 3]; 4]], vec![], 24.0).is_err());
    assert!(AnimatedMesh::new(vec![vec![[f32::NAN, 0.0, 0.0]; 3]], vec![], 24.0).is_err());
    assert!(AnimatedMesh::new(vec![vec![[0.0; 3]; 3]], vec![[0, 1, 3]], 24.0).is_err());
}

fn arm_with(drift: f32, offset: [f32; 3], scale: f32) -> AnimatedMesh {
    waving_arm(6, [drift, 0.0, 0.0])
        .unwrap()
        .map_positions(|_, p| [p[0] * scale + offset[0], p[1] * scale + offset[1], p[2] * scale + offset[2]])
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn rectify_is_translation_equivariant(
        drift in -0.05f32..0.05,
        scale in 0.5f32..2.0,
        c in prop::array::uniform3(-1.0f32..1.0),
    ) {
        let cfg = CurationConfig::default();
        let (a, _) = rectify(&arm_with(drift, [0.0; 3], scale), &cfg).unwrap();
        let (b, _) = rectify(&arm_with(drift, c, scale), &cfg).unwrap();
        for (fa, fb) in a.frames().iter().zip(b.frames()) {
            for (p, q) in fa.iter().zip(fb) {
                prop_assert!((0..3).all(|k| (p[k] - q[k]).abs() < 1e-6), "{p:?} vs {q:?}");
            }
        }
    }

    #[test]
    fn rectify_is_idempotent_and_unit_sized(
        drift in -0.05f32..0.05,
        scale in 0.5f32..2.0,
        c in prop::array::uniform3(-1.0f32..1.0),
    ) {
        let cfg = CurationConfig::default();
        let m = arm_with(drift, c, scale);
        let (once, _) = rectify(&m, &cfg).unwrap();
        prop_assert!((max_extent(&once, 0) - 1.0).abs() < 1e-6);
        let (twice, _) = rectify(&once, &cfg).unwrap();
        prop_assert_eq!(&once, &twice);

        // The selected box stays put frame to frame.
        let mask = detect_static_region(&mean_temporal_offset(&m).unwrap(), cfg.static_quantile).unwrap();
        let chosen = static_box(&m, &mask).unwrap();
        for f in 0..once.frame_count() {
            let mut mean = [0.0f64; 3];
            for &i in &chosen {
                for k in 0..3 {
                    mean[k] += (once.frame(f)[i][k] as f64 - once.frame(0)[i][k] as f64) / chosen.len() as f64;
                }
            }
            prop_assert!(mean.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-6);
        }
    }

    #[test]
    fn low_motion_rejection_is_threshold_monotone(
        amp in 0.0f32..0.05,
        lo in 0.0f32..0.05,
        extra in 0.0f32..0.05,
    ) {
        let frames: Vec<Vec<[f32; 3]>> = (0..4)
            .map(|f| unit_cube().iter().enumerate().map(|(i, p)| {
                let w = if i % 3 == 0 { amp * (f as f32).sin() } else { 0.0 };
                [p[0] + w, p[1], p[2]]
            }).collect())
            .collect();
        let m = mesh(frames);
        let at = |t: f32| filter(&m, &CurationConfig { min_motion: t, ..Default::default() }).unwrap();
        let a = at(lo);
        prop_assert_eq!(&a, &at(lo));
        if a.reject_reason == Some(RejectReason::LowMotion) {
            prop_assert_eq!(at(lo + extra).reject_reason, Some(RejectReason::LowMotion));
        }
    }
}

fn sphere_scene(radius: f32, back: Option<[f32; 3]>) -> SceneSpec {
    SceneSpec {
        primitives: vec![Primitive {
            shape: Shape::Sphere { radius },
            albedo: [0.9, 0.2, 0.1],
            back_albedo: back,
            motion: Motion::default(),
        }],
    }
}

#[test]
fn static_sphere_silhouettes_match_across_frames() {
    let cam = OrbitCamera::default();
    let m = render_pseudo_dataset(&sphere_scene(0.3, None), &cam, &CameraPose::orbit(4, 0.0), 2, 32, 32).unwrap();
    assert_eq!(m.cells.len(), 8);
    for v in 0..4 {
        assert_eq!(m.cell(v, 0).alpha(), m.cell(v, 1).alpha());
        assert_eq!(m.cell(v, 0).alpha(), m.cell(0, 0).alpha());
    }
}

#[test]
fn two_tone_sphere_shows_both_albedos() {
    let cam = OrbitCamera::default();
    let poses = [CameraPose::new(0.0, 0.0).unwrap(), CameraPose::new(0.0, 180.0).unwrap()];
    let back = [0.1, 0.3, 0.9];
    let m = render_pseudo_dataset(&sphere_scene(0.3, Some(back)), &cam, &poses, 1, 33, 33).unwrap();
    let front = m.cell(0, 0).pixel(16, 16).to_vec();
    let rear = m.cell(1, 0).pixel(16, 16).to_vec();
    // Shading scales all channels alike, so channel ratios identify the albedo.
    assert!((front[1] / front[0] - 0.2 / 0.9).abs() < 1e-4);
    assert!((rear[0] / rear[2] - 0.1 / 0.9).abs() < 1e-4 && (rear[1] / rear[2] - 0.3 / 0.9).abs() < 1e-4);
}

#[test]
fn silhouette_area_matches_the_projected_disc() {
    let cam = OrbitCamera::default();
    let r = 0.3f64;
    let n = 128;
    let m = render_pseudo_dataset(&sphere_scene(r as f32, None), &cam, &[CameraPose::origin()], 1, n, n).unwrap();
    let area: f32 = m.cells[0].alpha().data.iter().sum();
    // Tangent cone half-angle asin(r / d), projected onto the image plane.
    let f = (n as f64 / 2.0) / (cam.fov_y_deg as f64 / 2.0).to_radians().tan();
    let rad = f * (r / cam.radius as f64).asin().tan();
    let want = std::f64::consts::PI * rad * rad;
    assert!(((area as f64 - want) / want).abs() < 0.02, "{area} vs {want}");
}

#[test]
fn centre_pixel_has_exact_depth_and_normal() {
    let cam = OrbitCamera::default();
    let m = render_pseudo_dataset(&sphere_scene(0.3, None), &cam, &[CameraPose::new(20.0, 45.0).unwrap()], 1, 33, 33).unwrap();
    let d = m.depths.as_ref().unwrap()[0].pixel(16, 16)[0];
    assert!((d - 1.7).abs() < 1e-4, "{d}");
    let n = m.normals.as_ref().unwrap()[0].pixel(16, 16).to_vec();
    let (e, a) = (20f32.to_radians(), 45f32.to_radians());
    let want = [e.cos() * a.cos(), e.cos() * a.sin(), e.sin()];
    assert!((0..3).all(|k| (n[k] - want[k]).abs() < 1e-3), "{n:?}");
    assert_eq!(m.cells[0].pixel(0, 0), &[1.0, 1.0, 1.0, 0.0]);
}

#[test]
fn moving_primitives_follow_their_motion() {
    let mut s = sphere_scene(0.1, None);
    s.primitives[0].motion.velocity = [0.0, 0.1, 0.0];
    assert!(s.sdf([0.0, 0.3, 0.0], 2.0).abs() < 1e-6);
    let cap = SceneSpec::from_json(r#"{"primitives":[{"type":"capsule","length":0.2,"radius":0.05,"albedo":[1,1,1],
        "motion":{"axis":[1,0,0],"spin_deg":90}}]}"#)
    .unwrap();
    // After one frame the capsule points along -Y.
    assert!(cap.sdf([0.0, -0.25, 0.0], 1.0).abs() < 1e-5);
    let boxed = SceneSpec::from_json(r#"{"primitives":[{"type":"box","half_extents":[0.1,0.2,0.3],"albedo":[1,1,1]}]}"#).unwrap();
    assert!((boxed.sdf([0.4, 0.0, 0.0], 0.0) - 0.3).abs() < 1e-6);
    assert!((boxed.sdf([0.0, 0.0, 0.0], 0.0) + 0.1).abs() < 1e-6);
}

#[test]
fn unknown_primitive_is_a_config_error() {
    let err = SceneSpec::from_json(r#"{"primitives":[{"type":"torus","radius":0.2,"albedo":[1,1,1]}]}"#);
    assert!(matches!(err, Err(Error::Config(_))));
}
