use crate::error::{Error, Result};

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Numpy-style broadcast of two shapes.
pub fn broadcast_shapes(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => {
                return Err(Error::dim(format!(
                    "shapes {a:?} and {b:?} do not broadcast"
                )))
            }
        };
    }
    Ok(out)
}

/// How an input of shape `src` is indexed when broadcast to `dst`.
pub(crate) enum BroadcastMap {
    Identity,
    Scalar,
    /// `src` equals a suffix of `dst`: offset is `i % len`.
    Suffix(usize),
    Table(Vec<usize>),
}

impl BroadcastMap {
    pub(crate) fn new(src: &[usize], dst: &[usize]) -> Self {
        let n: usize = src.iter().product();
        if src == dst {
            return BroadcastMap::Identity;
        }
        if n == 1 {
            return BroadcastMap::Scalar;
        }
        let trimmed: Vec<usize> = {
            let first = src.iter().position(|&d| d != 1).unwrap_or(src.len());
            src[first..].to_vec()
        };
        if trimmed.len() <= dst.len() && dst[dst.len() - trimmed.len()..] == trimmed[..] {
            return BroadcastMap::Suffix(n);
        }
        let rank = dst.len();
        let src_strides = strides(src);
        // Stride of each dst axis inside src (0 where broadcast).
        let mut eff = vec![0usize; rank];
        for i in 0..rank {
            if i + src.len() >= rank {
                let j = i + src.len() - rank;
                if src[j] != 1 {
                    eff[i] = src_strides[j];
                }
            }
        }
        let total: usize = dst.iter().product();
        let mut table = Vec::with_capacity(total);
        let mut idx = vec![0usize; rank];
        let mut off = 0usize;
        for _ in 0..total {
            table.push(off);
            for ax in (0..rank).rev() {
                idx[ax] += 1;
                off += eff[ax];
                if idx[ax] < dst[ax] {
                    break;
                }
                off -= eff[ax] * idx[ax];
                idx[ax] = 0;
            }
        }
        BroadcastMap::Table(table)
    }

    #[inline]
    /// The source data laid out at the broadcast shape (`n` elements).
    pub(crate) fn expand<'a>(&self, d: &'a [f32], n: usize) -> std::borrow::Cow<'a, [f32]> {
        use std::borrow::Cow;
        match self {
            BroadcastMap::Identity => Cow::Borrowed(d),
            BroadcastMap::Scalar => Cow::Owned(vec![d[0]; n]),
            BroadcastMap::Suffix(len) => Cow::Owned(d[..*len].iter().copied().cycle().take(n).collect()),
            BroadcastMap::Table(t) => Cow::Owned(t.iter().map(|&i| d[i]).collect()),
        }
    }

    pub(crate) fn at(&self, i: usize) -> usize {
        match self {
            BroadcastMap::Identity => i,
            BroadcastMap::Scalar => 0,
            BroadcastMap::Suffix(n) => i % n,
            BroadcastMap::Table(t) => t[i],
        }
    }
}

/// Sums a gradient of broadcast shape back onto the source shape.
pub(crate) fn reduce_to(grad: &[f32], dst: &[usize], src: &[usize]) -> Vec<f32> {
    let map = BroadcastMap::new(src, dst);
    if let BroadcastMap::Identity = map {
        return grad.to_vec();
    }
    let n: usize = src.iter().product();
    let mut out = vec![0.0f32; n];
    match map {
        BroadcastMap::Suffix(len) => {
            for chunk in grad.chunks_exact(len) {
                out.iter_mut().zip(chunk).for_each(|(o, g)| *o += g);
            }
        }
        _ => {
            for (i, g) in grad.iter().enumerate() {
                out[map.at(i)] += g;
            }
        }
    }
    out
}

pub(crate) fn permute_data(
    data: &[f32],
    shape: &[usize],
    axes: &[usize],
) -> Result<(Vec<usize>, Vec<f32>)> {
    let rank = shape.len();
    let mut seen = vec![false; rank];
    if axes.len() != rank || axes.iter().any(|&a| a >= rank || std::mem::replace(&mut seen[a], true)) {
        return Err(Error::dim(format!(
            "axes {axes:?} are not a permutation for shape {shape:?}"
        )));
    }
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let in_strides = strides(shape);
    let eff: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let total = data.len();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    for _ in 0..total {
        out.push(data[off]);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            off += eff[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            off -= eff[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
    Ok((out_shape, out))
}

pub(crate) fn inverse_permutation(axes: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; axes.len()];
    for (i, &a) in axes.iter().enumerate() {
        inv[a] = i;
    }
    inv
}

/// Splits `shape` around `axis` into (outer, len, inner) extents.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::dim(format!("axis {axis} out of range for shape {shape:?}")));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}
