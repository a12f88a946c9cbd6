use super::embed::{camera_encoding, frame_encoding, CAMERA_ENCODING_DIM, FRAME_ENCODING_DIM};
use super::layout::{back_from_frame, to_3d_layout, to_frame_layout, var_dims};
use super::{CameraTrajectory, ReferenceCondition};
use crate::error::{Error, Result};
use crate::params::{BoundParams, ParamStore};
use crate::rng::Rng;
use crate::tensor::{Tensor, Var};

pub(crate) const LN_EPS: f32 = 1e-5;

/// Adds `{prefix}.wq/wk/wv/wo`, each `C x C`.
pub fn init_attention(store: &mut ParamStore, prefix: &str, c: usize, rng: &mut Rng) {
    let std = 1.0 / (c as f32).sqrt();
    for w in ["wq", "wk", "wv", "wo"] {
        store.insert(format!("{prefix}.{w}"), Tensor::randn(&[c, c], std, rng));
    }
}

/// Attention projections plus `{prefix}.alpha` and an `{prefix}.embed`
/// table projecting an `embed_in`-dim encoding to `C`.
pub fn init_blended(store: &mut ParamStore, prefix: &str, c: usize, embed_in: usize, alpha: f32, rng: &mut Rng) {
    init_attention(store, prefix, c, rng);
    store.insert(format!("{prefix}.alpha"), Tensor::scalar(alpha));
    store.insert(format!("{prefix}.embed"), Tensor::randn(&[embed_in, c], 0.02, rng));
}

/// Scaled dot-product attention over axis 1 of `seq: [B, S, C]`. With
/// `extra: [B, S', C]` the keys and values also cover the extra tokens.
pub fn attention<'t>(seq: Var<'t>, p: &BoundParams<'t>, prefix: &str, extra: Option<Var<'t>>) -> Result<Var<'t>> {
    let s = seq.shape();
    let wq = p.get(&format!("{prefix}.wq"));
    let c = wq.shape()[0];
    if s.len() != 3 || s[2] != c {
        return Err(Error::dim(format!("attention input {s:?} for {c} channels")));
    }
    let kv = match extra {
        Some(e) => {
            let es = e.shape();
            if es.len() != 3 || es[0] != s[0] || es[2] != c {
                return Err(Error::dim(format!("condition {es:?} for sequence {s:?}")));
            }
            Var::concat(&[seq, e], 1)?
        }
        None => seq,
    };
    let q = seq.matmul(wq)?;
    let k = kv.matmul(p.get(&format!("{prefix}.wk")))?;
    let v = kv.matmul(p.get(&format!("{prefix}.wv")))?;
    let logits = q.matmul(k.transpose(1, 2)?)?.scale(1.0 / (c as f32).sqrt());
    logits.softmax(2)?.matmul(v)?.matmul(p.get(&format!("{prefix}.wo")))
}

/// `alpha * attended + (1 - alpha) * skip` with alpha clamped to [0, 1].
pub(crate) fn blend<'t>(skip: Var<'t>, attended: Var<'t>, alpha: Var<'t>) -> Result<Var<'t>> {
    let a = alpha.clamp(0.0, 1.0);
    let keep = a.neg().add_scalar(1.0);
    attended.mul(a)?.add(skip.mul(keep)?)
}

fn encodings(rows: Vec<Vec<f32>>, dim: usize) -> Tensor {
    let n = rows.len();
    Tensor::new(&[n, dim], rows.concat()).expect("encoding rows")
}

/// 3D attention over merged views and space, with per-view camera
/// embeddings added before the pre-attention norm.
pub fn blended_3d_attention<'t>(
    l: Var<'t>,
    p: &BoundParams<'t>,
    prefix: &str,
    cam: &CameraTrajectory,
) -> Result<Var<'t>> {
    let dims = var_dims(l)?;
    let [_, v, _, _, c] = dims;
    if cam.len() != v {
        return Err(Error::dim(format!("{} camera poses for {v} views", cam.len())));
    }
    let tape = l.tape();
    let enc = encodings(cam.poses.iter().map(camera_encoding).collect(), CAMERA_ENCODING_DIM);
    let emb = tape
        .constant(enc)
        .matmul(p.get(&format!("{prefix}.embed")))?
        .reshape(&[1, v, 1, 1, c])?;
    let seq = to_3d_layout(l.add(emb)?)?.layer_norm(LN_EPS);
    let att = attention(seq, p, prefix, None)?.reshape(&dims)?;
    blend(l, att, p.get(&format!("{prefix}.alpha")))
}

/// Frame attention with frame-index embeddings. `reference` is only used
/// when active and must already carry `C` channels; masked and absent
/// references take the same path.
pub fn blended_frame_attention<'t>(
    l: Var<'t>,
    p: &BoundParams<'t>,
    prefix: &str,
    frame_indices: &[usize],
    reference: &ReferenceCondition,
) -> Result<Var<'t>> {
    let cond = match (reference.is_active(), &reference.reference_latents) {
        (true, Some(r)) => Some(l.tape().constant(r.clone())),
        _ => None,
    };
    frame_attention_with(l, p, prefix, frame_indices, cond)
}

/// `cond` is `(V, H, W, C)`.
pub(crate) fn frame_attention_with<'t>(
    l: Var<'t>,
    p: &BoundParams<'t>,
    prefix: &str,
    frame_indices: &[usize],
    cond: Option<Var<'t>>,
) -> Result<Var<'t>> {
    let dims = var_dims(l)?;
    let [f, v, h, w, c] = dims;
    if frame_indices.len() != f {
        return Err(Error::dim(format!("{} frame indices for {f} frames", frame_indices.len())));
    }
    let tape = l.tape();
    let enc = encodings(frame_indices.iter().map(|&i| frame_encoding(i)).collect(), FRAME_ENCODING_DIM);
    let emb = tape
        .constant(enc)
        .matmul(p.get(&format!("{prefix}.embed")))?
        .reshape(&[f, 1, 1, 1, c])?;
    let seq = to_frame_layout(l.add(emb)?)?.layer_norm(LN_EPS);
    let extra = match cond {
        Some(r) => {
            if r.shape() != [v, h, w, c] {
                return Err(Error::dim(format!("reference {:?} for latents {dims:?}", r.shape())));
            }
            Some(r.reshape(&[v * h * w, 1, c])?.layer_norm(LN_EPS))
        }
        None => None,
    };
    let att = back_from_frame(attention(seq, p, prefix, extra)?, dims)?;
    blend(l, att, p.get(&format!("{prefix}.alpha")))
}
