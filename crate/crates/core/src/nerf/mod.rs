//! Dynamic radiance field: a hash-grid canonical field, a time-conditioned
//! deformation MLP, and a differentiable volume renderer.
//!
//! The scene lives in the cube `[-0.5, 0.5]^3`; rays are clipped to it.

mod hashgrid;
mod model;
mod render;

pub use hashgrid::{hash_corner, hashgrid_lookup, init_tables, level_corners, HashGridConfig};
pub use model::{
    positional_encoding, BoundNerf, ConstantField, DynNerfModel, EmptyField, Field, NerfConfig, SphereField,
    DEFORM_PREFIX, TIME_PARAM,
};
pub use render::{
    composite, probe_normals, render_ray, render_rays, render_view, toward_camera, view_rays, RayBatch, RenderOptions,
    RenderOutput, DEPTH_EPS, NORMAL_PROBE, SCENE_HALF,
};
