use super::mesh::AnimatedMesh;
use crate::error::Result;

/// Surface of an axis-aligned box with each face split into `n x n` quads.
/// Returns positions and triangles; edge vertices are duplicated per face.
pub fn box_surface(centre: [f32; 3], half: [f32; 3], n: usize) -> (Vec<[f32; 3]>, Vec<[u32; 3]>) {
    let n = n.max(1);
    let mut verts = Vec::new();
    let mut faces = Vec::new();
    for axis in 0..3 {
        for sign in [-1.0f32, 1.0] {
            let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
            let base = verts.len() as u32;
            for j in 0..=n {
                for i in 0..=n {
                    let mut p = centre;
                    p[axis] += sign * half[axis];
                    p[u] += half[u] * (2.0 * i as f32 / n as f32 - 1.0);
                    p[v] += half[v] * (2.0 * j as f32 / n as f32 - 1.0);
                    verts.push(p);
                }
            }
            let row = (n + 1) as u32;
            for j in 0..n as u32 {
                for i in 0..n as u32 {
                    let a = base + j * row + i;
                    let (b, c, d) = (a + 1, a + row, a + row + 1);
                    if sign > 0.0 {
                        faces.push([a, b, d]);
                        faces.push([a, d, c]);
                    } else {
                        faces.push([a, d, b]);
                        faces.push([a, c, d]);
                    }
                }
            }
        }
    }
    (verts, faces)
}

/// Number of base vertices in [`waving_arm`]; they come first.
pub fn waving_arm_base_len() -> usize {
    box_surface([0.0; 3], [1.0; 3], 4).0.len()
}

/// A static block with an arm hinged on its top, swinging up to 30 degrees
/// about the X axis, the whole object drifting by `drift` per frame. The
/// arm's swing is perpendicular to X, so with a drift along X every arm
/// vertex moves strictly more than the base.
pub fn waving_arm(frames: usize, drift: [f32; 3]) -> Result<AnimatedMesh> {
    let (base, mut faces) = box_surface([0.0, 0.0, -0.25], [0.3, 0.3, 0.15], 4);
    let (arm, arm_faces) = box_surface([0.0, 0.0, 0.175], [0.03, 0.03, 0.225], 2);
    let off = base.len() as u32;
    faces.extend(arm_faces.iter().map(|t| t.map(|i| i + off)));
    let hinge_z = -0.1f32;
    let out = (0..frames)
        .map(|f| {
            let angle = 30f32.to_radians() * (std::f32::consts::TAU * f as f32 / frames as f32).sin();
            let (s, c) = angle.sin_cos();
            let shift = drift.map(|d| d * f as f32);
            let moved_arm = arm.iter().map(|p| {
                let (y, z) = (p[1], p[2] - hinge_z);
                [p[0], c * y - s * z, s * y + c * z + hinge_z]
            });
            base.iter()
                .copied()
                .chain(moved_arm)
                .map(|p| [p[0] + shift[0], p[1] + shift[1], p[2] + shift[2]])
                .collect()
        })
        .collect();
    AnimatedMesh::new(out, faces, 24.0)
}
