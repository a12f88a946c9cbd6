//! Model checkpoints: a parameter store plus the model config in its
//! metadata. Loading rebuilds a fresh model from the config and requires
//! every stored tensor to match it by name and shape.

use dyn4d_core::diffusion::{DenoiserConfig, ToyDenoiser};
use dyn4d_core::nerf::{DynNerfModel, NerfConfig};
use dyn4d_core::params::ParamStore;
use dyn4d_core::Error;
use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};

pub const NERF_KIND: &str = "dyn-nerf";
pub const DENOISER_KIND: &str = "toy-denoiser";

/// Accepts either a stem or a path to its `.json` or `.s4tk` file.
pub fn stem(path: &Path) -> PathBuf {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("s4tk") => path.with_extension(""),
        _ => path.to_path_buf(),
    }
}

fn check_layout(stored: &ParamStore, fresh: &ParamStore, what: &str) -> Result<(), Error> {
    if stored.len() != fresh.len() {
        return Err(Error::Format(format!("{what} checkpoint has {} tensors, expected {}", stored.len(), fresh.len())));
    }
    for (name, t) in fresh.iter() {
        match stored.get(name) {
            Some(s) if s.shape() == t.shape() => {}
            Some(s) => {
                return Err(Error::Format(format!("{what} tensor {name} has shape {:?}, expected {:?}", s.shape(), t.shape())));
            }
            None => return Err(Error::Format(format!("{what} checkpoint lacks tensor {name}"))),
        }
    }
    Ok(())
}

fn load_kind<C: DeserializeOwned>(path: &Path, kind: &str) -> Result<(ParamStore, C, Value), Error> {
    let (store, meta) = ParamStore::load(stem(path))?;
    let found = meta.get("kind").and_then(Value::as_str).unwrap_or("");
    if found != kind {
        return Err(Error::Format(format!("checkpoint holds a {found:?} model, expected {kind}")));
    }
    let config = serde_json::from_value(meta.get("config").cloned().unwrap_or(Value::Null))
        .map_err(|e| Error::Format(format!("checkpoint config: {e}")))?;
    Ok((store, config, meta))
}

pub fn save_nerf(path: &Path, model: &DynNerfModel, extra: Value) -> Result<(), Error> {
    model.params.save(stem(path), json!({ "kind": NERF_KIND, "config": model.config, "extra": extra }))
}

pub fn load_nerf(path: &Path) -> Result<(DynNerfModel, Value), Error> {
    let (params, config, meta): (_, NerfConfig, _) = load_kind(path, NERF_KIND)?;
    let fresh = DynNerfModel::new(config.clone(), 0)?;
    check_layout(&params, &fresh.params, NERF_KIND)?;
    Ok((DynNerfModel { config, params }, meta))
}

pub fn save_denoiser(path: &Path, model: &ToyDenoiser, extra: Value) -> Result<(), Error> {
    model.params.save(stem(path), json!({ "kind": DENOISER_KIND, "config": model.config, "extra": extra }))
}

pub fn load_denoiser(path: &Path) -> Result<(ToyDenoiser, Value), Error> {
    let (params, config, meta): (_, DenoiserConfig, _) = load_kind(path, DENOISER_KIND)?;
    let fresh = ToyDenoiser::new(config.clone(), 0)?;
    check_layout(&params, &fresh.params, DENOISER_KIND)?;
    Ok((ToyDenoiser { config, params }, meta))
}
