//! Named parameter storage, tape binding, Adam, and checkpoints.
//!
//! A checkpoint is two files: `<stem>.s4tk`, the tensors back to back in the
//! flat tensor format, and `<stem>.json`, a manifest mapping each parameter
//! name to its byte offset and shape plus free-form model metadata.

use crate::error::{Error, Result};
use crate::tensor::{io as tio, Gradients, Tape, Tensor, Var};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::{Cursor, Write};
use std::path::{Path, PathBuf};

/// Ordered name → tensor map.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<(String, Tensor)>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        let name = name.into();
        match self.index.get(&name) {
            Some(&i) => self.entries[i].1 = t,
            None => {
                self.index.insert(name.clone(), self.entries.len());
                self.entries.push((name, t));
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).map(|&i| &mut self.entries[i].1)
    }

    /// Panics on unknown names; parameter names are fixed by the model code.
    pub fn tensor(&self, name: &str) -> &Tensor {
        self.get(name).unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    /// Binds every parameter to `tape`. Parameters for which `frozen`
    /// returns true are recorded as constants.
    pub fn bind<'t>(&self, tape: &'t Tape, frozen: impl Fn(&str) -> bool) -> BoundParams<'t> {
        let mut vars = HashMap::with_capacity(self.entries.len());
        let mut order = Vec::with_capacity(self.entries.len());
        for (name, t) in &self.entries {
            let v = if frozen(name) { tape.constant(t.clone()) } else { tape.param(t) };
            vars.insert(name.clone(), v);
            order.push(name.clone());
        }
        BoundParams { vars, order }
    }

    /// Binds everything as constants (inference).
    pub fn bind_frozen<'t>(&self, tape: &'t Tape) -> BoundParams<'t> {
        self.bind(tape, |_| true)
    }

    pub fn bitwise_eq(&self, other: &ParamStore) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|((na, a), (nb, b))| na == nb && a.bitwise_eq(b))
    }

    pub fn save(&self, stem: impl AsRef<Path>, meta: serde_json::Value) -> Result<()> {
        let (blob, manifest) = (stem_with(stem.as_ref(), "s4tk"), stem_with(stem.as_ref(), "json"));
        let mut bytes = Vec::new();
        let mut entries = Vec::with_capacity(self.entries.len());
        for (name, t) in &self.entries {
            entries.push(ManifestEntry {
                name: name.clone(),
                offset: bytes.len() as u64,
                shape: t.shape().to_vec(),
            });
            tio::write_tensor(&mut bytes, t)?;
        }
        let mut f = std::fs::File::create(&blob)?;
        f.write_all(&bytes)?;
        let m = CheckpointManifest {
            format: CHECKPOINT_FORMAT.to_string(),
            blob: blob.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
            entries,
            meta,
        };
        std::fs::write(manifest, serde_json::to_string_pretty(&m)?)?;
        Ok(())
    }

    pub fn load(stem: impl AsRef<Path>) -> Result<(Self, serde_json::Value)> {
        let manifest_path = stem_with(stem.as_ref(), "json");
        let m: CheckpointManifest = serde_json::from_slice(&std::fs::read(&manifest_path)?)?;
        if m.format != CHECKPOINT_FORMAT {
            return Err(Error::Format(format!("unsupported checkpoint format {}", m.format)));
        }
        let blob = std::fs::read(manifest_path.with_file_name(&m.blob))?;
        let mut store = ParamStore::new();
        for e in m.entries {
            let off = e.offset as usize;
            if off >= blob.len() {
                return Err(Error::Format(format!("offset {off} for {} is past the blob end", e.name)));
            }
            let t = tio::read_tensor(&mut Cursor::new(&blob[off..]))?;
            if t.shape() != e.shape.as_slice() {
                return Err(Error::Format(format!(
                    "{} has shape {:?} on disk but {:?} in the manifest",
                    e.name,
                    t.shape(),
                    e.shape
                )));
            }
            store.insert(e.name, t);
        }
        Ok((store, m.meta))
    }
}

pub const CHECKPOINT_FORMAT: &str = "s4tk-checkpoint-1";

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    offset: u64,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointManifest {
    format: String,
    blob: String,
    entries: Vec<ManifestEntry>,
    #[serde(default)]
    meta: serde_json::Value,
}

fn stem_with(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Parameters recorded on one tape.
pub struct BoundParams<'t> {
    vars: HashMap<String, Var<'t>>,
    order: Vec<String>,
}

impl<'t> BoundParams<'t> {
    pub fn get(&self, name: &str) -> Var<'t> {
        *self.vars.get(name).unwrap_or_else(|| panic!("unbound parameter {name}"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var<'t>)> + '_ {
        self.order.iter().map(move |n| (n.as_str(), self.vars[n]))
    }

    /// Swaps in another variable for `name`, e.g. a probe in a gradient check.
    pub fn replace(&mut self, name: &str, var: Var<'t>) {
        match self.vars.get_mut(name) {
            Some(v) => *v = var,
            None => panic!("unbound parameter {name}"),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-15,
        }
    }
}

#[derive(Clone)]
struct Moments {
    m: Vec<f32>,
    v: Vec<f32>,
    steps: i32,
}

/// Adam with per-parameter step counts, so parameters unfrozen late get a
/// fresh bias correction.
#[derive(Clone)]
pub struct Adam {
    pub config: AdamConfig,
    state: HashMap<String, Moments>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            state: HashMap::new(),
        }
    }

    pub fn reset(&mut self) {
        self.state.clear();
    }

    /// Applies one update to every tracked parameter in `bound`.
    pub fn step(&mut self, store: &mut ParamStore, bound: &BoundParams<'_>, grads: &Gradients) -> Result<()> {
        self.step_scaled(store, bound, grads, |_| 1.0)
    }

    /// Like [`Adam::step`] with a per-parameter learning-rate multiplier.
    pub fn step_scaled(
        &mut self,
        store: &mut ParamStore,
        bound: &BoundParams<'_>,
        grads: &Gradients,
        lr_scale: impl Fn(&str) -> f32,
    ) -> Result<()> {
        let c = self.config;
        for (name, var) in bound.iter() {
            if !var.is_tracked() {
                continue;
            }
            let Some(g) = grads.get(var) else { continue };
            if let Some(bad) = g.iter().find(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("gradient of {name} contains {bad}")));
            }
            let param = store
                .get_mut(name)
                .ok_or_else(|| Error::Contract(format!("parameter {name} missing from store")))?;
            let st = self.state.entry(name.to_string()).or_insert_with(|| Moments {
                m: vec![0.0; g.len()],
                v: vec![0.0; g.len()],
                steps: 0,
            });
            st.steps += 1;
            let bc1 = 1.0 - c.beta1.powi(st.steps);
            let bc2 = 1.0 - c.beta2.powi(st.steps);
            let lr = c.lr * lr_scale(name);
            for ((p, &gi), (m, v)) in param.data_mut().iter_mut().zip(g).zip(st.m.iter_mut().zip(st.v.iter_mut())) {
                *m = c.beta1 * *m + (1.0 - c.beta1) * gi;
                *v = c.beta2 * *v + (1.0 - c.beta2) * gi * gi;
                let mh = *m / bc1;
                let vh = *v / bc2;
                *p -= lr * mh / (vh.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_minimizes_quadratic() {
        let mut store = ParamStore::new();
        store.insert("x", Tensor::new(&[2], vec![3.0, -2.0]).unwrap());
        let mut opt = Adam::new(AdamConfig { lr: 0.1, ..Default::default() });
        for _ in 0..300 {
            let tape = Tape::new();
            let b = store.bind(&tape, |_| false);
            let loss = b.get("x").square().sum();
            let g = tape.backward(loss).unwrap();
            opt.step(&mut store, &b, &g).unwrap();
        }
        assert!(store.tensor("x").data().iter().all(|v| v.abs() < 1e-2));
    }

    #[test]
    fn frozen_parameters_do_not_move() {
        let mut store = ParamStore::new();
        store.insert("a", Tensor::ones(&[2]));
        store.insert("b", Tensor::ones(&[2]));
        let before = store.clone();
        let mut opt = Adam::new(AdamConfig::default());
        let tape = Tape::new();
        let bound = store.bind(&tape, |n| n == "a");
        let loss = bound.get("a").mul(bound.get("b")).unwrap().sum();
        let g = tape.backward(loss).unwrap();
        opt.step(&mut store, &bound, &g).unwrap();
        assert!(store.tensor("a").bitwise_eq(before.tensor("a")));
        assert!(!store.tensor("b").bitwise_eq(before.tensor("b")));
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = ParamStore::new();
        store.insert("w", Tensor::from_fn(&[3, 2], |i| i as f32 * 0.5));
        store.insert("b", Tensor::scalar(-1.0));
        let stem = dir.path().join("model");
        store.save(&stem, serde_json::json!({"kind": "test"})).unwrap();
        let (back, meta) = ParamStore::load(&stem).unwrap();
        assert!(back.bitwise_eq(&store));
        assert_eq!(meta["kind"], "test");
        assert!(ParamStore::load(dir.path().join("missing")).is_err());
    }
}
