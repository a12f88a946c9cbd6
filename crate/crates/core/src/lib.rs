//! Multi-view video diffusion blocks, dynamic radiance-field fitting, animated
//! mesh curation, and spatio-temporal video metrics on a small reverse-mode
//! autodiff core.

pub mod camera;
pub mod curation;
pub mod diffusion;
pub mod error;
pub mod matrix;
pub mod metrics;
pub mod nerf;
pub mod optim;
pub mod params;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Tape, Tensor, Var};
