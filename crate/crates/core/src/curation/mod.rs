//! Animated-mesh curation: separating global drift from local motion,
//! normalising position and scale, and filtering out near-static or
//! scale-unstable objects. Also renders analytic scenes into image matrices
//! for synthetic ground truth.

mod fixtures;
mod mesh;
mod rectify;
mod scene;

pub use fixtures::{box_surface, waving_arm, waving_arm_base_len};
pub use mesh::{AnimatedMesh, MeshEntry, MeshManifest};
pub use rectify::{
    detect_static_region, filter, global_translation, mean_temporal_offset, rectify, static_box, subtract_translation, CurationConfig,
    CurationReport, RejectReason, BOX_GRID, SNAP,
};
pub use scene::{render_pseudo_dataset, Hit, Motion, Primitive, SceneSpec, Shape, AMBIENT, LIGHT};
