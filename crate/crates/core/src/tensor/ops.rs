use super::shape::{self, BroadcastMap};
use super::tape::{Tape, Var};
use super::Tensor;
use crate::error::{Error, Result};

#[cfg(feature = "parallel")]
use rayon::prelude::*;


/// Rows below this many multiply-adds stay on the calling thread.
#[cfg(feature = "parallel")]
const PAR_THRESHOLD: usize = 1 << 16;

/// `out[m,n] += a[m,k] * b[k,n]`
fn mm_nn(a: &[f32], b: &[f32], out: &mut [f32], m: usize, k: usize, n: usize) {
    let row = |i: usize, o: &mut [f32]| {
        let ar = &a[i * k..(i + 1) * k];
        for (kk, &av) in ar.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let br = &b[kk * n..(kk + 1) * n];
            for (ov, bv) in o.iter_mut().zip(br) {
                *ov += av * bv;
            }
        }
    };
    #[cfg(feature = "parallel")]
    if m * k * n >= PAR_THRESHOLD {
        out.par_chunks_mut(n).enumerate().for_each(|(i, o)| row(i, o));
        return;
    }
    let _ = m;
    out.chunks_mut(n).enumerate().for_each(|(i, o)| row(i, o));
}

/// `out[m,n] += a[m,k] * b[n,k]^T`
fn mm_nt(a: &[f32], b: &[f32], out: &mut [f32], m: usize, k: usize, n: usize) {
    // Transposing b once turns every row update into contiguous axpys.
    let mut bt = vec![0.0f32; k * n];
    for j in 0..n {
        for kk in 0..k {
            bt[kk * n + j] = b[j * k + kk];
        }
    }
    mm_nn(a, &bt, out, m, k, n);
}

/// `out[m,n] += a[k,m]^T * b[k,n]`
fn mm_tn(a: &[f32], b: &[f32], out: &mut [f32], m: usize, k: usize, n: usize) {
    const ROWS: usize = 16;
    // Rows of `out` in blocks that stay cache resident while all of `k` streams past.
    let block = |i0: usize, o: &mut [f32]| {
        for kk in 0..k {
            let br = &b[kk * n..(kk + 1) * n];
            for (r, orow) in o.chunks_mut(n).enumerate() {
                let av = a[kk * m + i0 + r];
                if av == 0.0 {
                    continue;
                }
                for (ov, bv) in orow.iter_mut().zip(br) {
                    *ov += av * bv;
                }
            }
        }
    };
    #[cfg(feature = "parallel")]
    if m * k * n >= PAR_THRESHOLD {
        out.par_chunks_mut(ROWS * n).enumerate().for_each(|(bi, o)| block(bi * ROWS, o));
        return;
    }
    out.chunks_mut(ROWS * n).enumerate().for_each(|(bi, o)| block(bi * ROWS, o));
}

fn unary<'t>(x: Var<'t>, f: impl Fn(f32) -> f32, df: fn(f32, f32) -> f32) -> Var<'t> {
    let xv = x.value();
    let out = xv.map(f);
    x.tape.record(&[x], out, move |ins: &[&Tensor], out: &Tensor, g: &[f32]| {
        let gx = ins[0]
            .data()
            .iter()
            .zip(out.data())
            .zip(g)
            .map(|((&xi, &yi), &gi)| gi * df(xi, yi))
            .collect();
        vec![Some(gx)]
    })
}

fn binary<'t, F, DA, DB>(a: Var<'t>, b: Var<'t>, f: F, da: DA, db: DB) -> Result<Var<'t>>
where
    F: Fn(f32, f32) -> f32,
    DA: Fn(f32, f32) -> f32 + 'static,
    DB: Fn(f32, f32) -> f32 + 'static,
{
    let av = a.value();
    let bv = b.value();
    let out_shape = shape::broadcast_shapes(av.shape(), bv.shape())?;
    let n: usize = out_shape.iter().product();
    let ae = BroadcastMap::new(av.shape(), &out_shape).expand(av.data(), n);
    let be = BroadcastMap::new(bv.shape(), &out_shape).expand(bv.data(), n);
    let data: Vec<f32> = ae.iter().zip(be.iter()).map(|(&x, &y)| f(x, y)).collect();
    let out = Tensor::from_parts(out_shape, data);
    Ok(a.tape.record(&[a, b], out, move |ins: &[&Tensor], out: &Tensor, g: &[f32]| {
        let (a, b) = (ins[0], ins[1]);
        let os = out.shape();
        let ae = BroadcastMap::new(a.shape(), os).expand(a.data(), g.len());
        let be = BroadcastMap::new(b.shape(), os).expand(b.data(), g.len());
        let ga: Vec<f32> = g.iter().zip(ae.iter().zip(be.iter())).map(|(&gi, (&x, &y))| gi * da(x, y)).collect();
        let gb: Vec<f32> = g.iter().zip(ae.iter().zip(be.iter())).map(|(&gi, (&x, &y))| gi * db(x, y)).collect();
        vec![
            Some(shape::reduce_to(&ga, os, a.shape())),
            Some(shape::reduce_to(&gb, os, b.shape())),
        ]
    }))
}

fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f32) -> f32 {
    if x > 20.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

impl<'t> Var<'t> {
    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        binary(self, other, |a, b| a + b, |_, _| 1.0, |_, _| 1.0)
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        binary(self, other, |a, b| a - b, |_, _| 1.0, |_, _| -1.0)
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        binary(self, other, |a, b| a * b, |_, b| b, |a, _| a)
    }

    pub fn div(self, other: Var<'t>) -> Result<Var<'t>> {
        binary(self, other, |a, b| a / b, |_, b| 1.0 / b, |a, b| -a / (b * b))
    }

    pub fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }

    pub fn scale(self, s: f32) -> Var<'t> {
        let xv = self.value();
        let out = xv.map(|v| v * s);
        self.tape.record(&[self], out, move |_: &[&Tensor], _: &Tensor, g: &[f32]| {
            vec![Some(g.iter().map(|v| v * s).collect())]
        })
    }

    pub fn add_scalar(self, s: f32) -> Var<'t> {
        let out = self.value().map(|v| v + s);
        self.tape
            .record(&[self], out, |_: &[&Tensor], _: &Tensor, g: &[f32]| vec![Some(g.to_vec())])
    }

    pub fn exp(self) -> Var<'t> {
        unary(self, f32::exp, |_, y| y)
    }

    pub fn ln(self) -> Var<'t> {
        unary(self, f32::ln, |x, _| 1.0 / x)
    }

    pub fn sqrt(self) -> Var<'t> {
        unary(self, f32::sqrt, |_, y| 0.5 / y)
    }

    pub fn square(self) -> Var<'t> {
        unary(self, |x| x * x, |x, _| 2.0 * x)
    }

    pub fn relu(self) -> Var<'t> {
        unary(self, |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn sigmoid(self) -> Var<'t> {
        unary(self, sigmoid, |_, y| y * (1.0 - y))
    }

    pub fn softplus(self) -> Var<'t> {
        unary(self, softplus, |x, _| sigmoid(x))
    }

    pub fn tanh(self) -> Var<'t> {
        unary(self, f32::tanh, |_, y| 1.0 - y * y)
    }

    /// Clamp into `[lo, hi]`. The gradient passes where `lo <= x <= hi`,
    /// so values sitting exactly on a bound still learn.
    pub fn clamp(self, lo: f32, hi: f32) -> Var<'t> {
        let out = self.value().map(|v| v.clamp(lo, hi));
        self.tape.record(&[self], out, move |ins: &[&Tensor], _: &Tensor, g: &[f32]| {
            let gx = ins[0]
                .data()
                .iter()
                .zip(g)
                .map(|(&x, &gi)| if (lo..=hi).contains(&x) { gi } else { 0.0 })
                .collect();
            vec![Some(gx)]
        })
    }

    /// Sum of all elements, shape `[1]`. Accumulates in f64.
    pub fn sum(self) -> Var<'t> {
        let s: f64 = self.value().data().iter().map(|&v| v as f64).sum();
        self.tape.record(&[self], Tensor::scalar(s as f32), |ins: &[&Tensor], _: &Tensor, g: &[f32]| {
            vec![Some(vec![g[0]; ins[0].numel()])]
        })
    }

    pub fn mean(self) -> Var<'t> {
        let n = self.numel() as f32;
        self.sum().scale(1.0 / n)
    }

    pub fn sum_axis(self, axis: usize, keepdim: bool) -> Result<Var<'t>> {
        let xv = self.value();
        let (outer, len, inner) = shape::split_axis(xv.shape(), axis)?;
        let d = xv.data();
        let mut out = vec![0.0f32; outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let mut acc = 0.0f64;
                for l in 0..len {
                    acc += d[(o * len + l) * inner + i] as f64;
                }
                out[o * inner + i] = acc as f32;
            }
        }
        let mut shp = xv.shape().to_vec();
        if keepdim {
            shp[axis] = 1;
        } else {
            shp.remove(axis);
            if shp.is_empty() {
                shp.push(1);
            }
        }
        Ok(self.tape.record(&[self], Tensor::from_parts(shp, out), move |_: &[&Tensor], _: &Tensor, g: &[f32]| {
            let mut gx = vec![0.0f32; outer * len * inner];
            for o in 0..outer {
                for l in 0..len {
                    let base = (o * len + l) * inner;
                    gx[base..base + inner].copy_from_slice(&g[o * inner..(o + 1) * inner]);
                }
            }
            vec![Some(gx)]
        }))
    }

    pub fn mean_axis(self, axis: usize, keepdim: bool) -> Result<Var<'t>> {
        let len = *self
            .shape()
            .get(axis)
            .ok_or_else(|| Error::dim(format!("axis {axis} out of range")))?;
        Ok(self.sum_axis(axis, keepdim)?.scale(1.0 / len as f32))
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>> {
        let out = self.value().reshape(shape)?;
        Ok(self.tape.record(&[self], out, |_: &[&Tensor], _: &Tensor, g: &[f32]| vec![Some(g.to_vec())]))
    }

    pub fn permute(self, axes: &[usize]) -> Result<Var<'t>> {
        let out = self.value().permute(axes)?;
        let inv = shape::inverse_permutation(axes);
        Ok(self.tape.record(&[self], out, move |_: &[&Tensor], out: &Tensor, g: &[f32]| {
            let (_, gx) = shape::permute_data(g, out.shape(), &inv).expect("valid inverse permutation");
            vec![Some(gx)]
        }))
    }

    /// Swaps two axes.
    pub fn transpose(self, a: usize, b: usize) -> Result<Var<'t>> {
        let rank = self.shape().len();
        if a >= rank || b >= rank {
            return Err(Error::dim(format!("transpose axes ({a},{b}) for rank {rank}")));
        }
        let mut axes: Vec<usize> = (0..rank).collect();
        axes.swap(a, b);
        self.permute(&axes)
    }

    pub fn broadcast_to(self, shape: &[usize]) -> Result<Var<'t>> {
        let xv = self.value();
        let target = shape::broadcast_shapes(xv.shape(), shape)?;
        if target != shape {
            return Err(Error::dim(format!("cannot broadcast {:?} to {shape:?}", xv.shape())));
        }
        let map = BroadcastMap::new(xv.shape(), shape);
        let n: usize = shape.iter().product();
        let data = (0..n).map(|i| xv.data()[map.at(i)]).collect();
        Ok(self.tape.record(&[self], Tensor::from_parts(shape.to_vec(), data), |ins: &[&Tensor], out: &Tensor, g: &[f32]| {
            vec![Some(shape::reduce_to(g, out.shape(), ins[0].shape()))]
        }))
    }

    /// Batched matrix product `[.., M, K] x [.., K, N]`; leading dims broadcast.
    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        let av = self.value();
        let bv = other.value();
        let (sa, sb) = (av.shape(), bv.shape());
        if sa.len() < 2 || sb.len() < 2 || sa[sa.len() - 1] != sb[sb.len() - 2] {
            return Err(Error::dim(format!("matmul of {sa:?} and {sb:?}")));
        }
        let (m, k, n) = (sa[sa.len() - 2], sa[sa.len() - 1], sb[sb.len() - 1]);
        let lead_a: Vec<usize> = sa[..sa.len() - 2].to_vec();
        let lead_b: Vec<usize> = sb[..sb.len() - 2].to_vec();
        let lead = shape::broadcast_shapes(&lead_a, &lead_b)
            .map_err(|_| Error::dim(format!("matmul of {sa:?} and {sb:?}: batch dims differ")))?;
        let batches: usize = lead.iter().product();
        let la = if lead_a.is_empty() { vec![1] } else { lead_a.clone() };
        let lb = if lead_b.is_empty() { vec![1] } else { lead_b.clone() };
        let lo = if lead.is_empty() { vec![1] } else { lead.clone() };
        let map_a = BroadcastMap::new(&la, &lo);
        let map_b = BroadcastMap::new(&lb, &lo);
        let mut out = vec![0.0f32; batches * m * n];
        for bi in 0..batches {
            let ao = map_a.at(bi) * m * k;
            let bo = map_b.at(bi) * k * n;
            mm_nn(
                &av.data()[ao..ao + m * k],
                &bv.data()[bo..bo + k * n],
                &mut out[bi * m * n..(bi + 1) * m * n],
                m,
                k,
                n,
            );
        }
        let mut out_shape = lead.clone();
        out_shape.extend([m, n]);
        Ok(self.tape.record(&[self, other], Tensor::from_parts(out_shape, out), move |ins: &[&Tensor], _: &Tensor, g: &[f32]| {
            let (a, b) = (ins[0], ins[1]);
            let map_a = BroadcastMap::new(&la, &lo);
            let map_b = BroadcastMap::new(&lb, &lo);
            let mut ga = vec![0.0f32; a.numel()];
            let mut gb = vec![0.0f32; b.numel()];
            for bi in 0..batches {
                let ao = map_a.at(bi) * m * k;
                let bo = map_b.at(bi) * k * n;
                let gs = &g[bi * m * n..(bi + 1) * m * n];
                mm_nt(gs, &b.data()[bo..bo + k * n], &mut ga[ao..ao + m * k], m, n, k);
                mm_tn(&a.data()[ao..ao + m * k], gs, &mut gb[bo..bo + k * n], k, m, n);
            }
            vec![Some(ga), Some(gb)]
        }))
    }

    /// Softmax along `axis`, stabilized by subtracting the running max.
    pub fn softmax(self, axis: usize) -> Result<Var<'t>> {
        let xv = self.value();
        let (outer, len, inner) = shape::split_axis(xv.shape(), axis)?;
        let d = xv.data();
        let mut out = vec![0.0f32; d.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |l: usize| (o * len + l) * inner + i;
                let mx = (0..len).map(|l| d[at(l)]).fold(f32::NEG_INFINITY, f32::max);
                let mut z = 0.0f32;
                for l in 0..len {
                    let e = (d[at(l)] - mx).exp();
                    out[at(l)] = e;
                    z += e;
                }
                for l in 0..len {
                    out[at(l)] /= z;
                }
            }
        }
        Ok(self.tape.record(&[self], Tensor::from_parts(xv.shape().to_vec(), out), move |_: &[&Tensor], out: &Tensor, g: &[f32]| {
            let y = out.data();
            let mut gx = vec![0.0f32; y.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let at = |l: usize| (o * len + l) * inner + i;
                    let dot: f32 = (0..len).map(|l| g[at(l)] * y[at(l)]).sum();
                    for l in 0..len {
                        gx[at(l)] = y[at(l)] * (g[at(l)] - dot);
                    }
                }
            }
            vec![Some(gx)]
        }))
    }

    /// Normalizes over the last axis to zero mean and unit variance.
    pub fn layer_norm(self, eps: f32) -> Var<'t> {
        let xv = self.value();
        let n = *xv.shape().last().expect("rank >= 1");
        let d = xv.data();
        let mut out = vec![0.0f32; d.len()];
        let mut rstd = vec![0.0f32; d.len() / n];
        for (r, (row, orow)) in d.chunks(n).zip(out.chunks_mut(n)).enumerate() {
            let mean = row.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
            let var = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n as f64;
            let rs = 1.0 / (var + eps as f64).sqrt();
            rstd[r] = rs as f32;
            for (o, &v) in orow.iter_mut().zip(row) {
                *o = ((v as f64 - mean) * rs) as f32;
            }
        }
        self.tape.record(&[self], Tensor::from_parts(xv.shape().to_vec(), out), move |_: &[&Tensor], out: &Tensor, g: &[f32]| {
            let y = out.data();
            let mut gx = vec![0.0f32; y.len()];
            for (r, ((yr, gr), gxr)) in y.chunks(n).zip(g.chunks(n)).zip(gx.chunks_mut(n)).enumerate() {
                let sg: f32 = gr.iter().sum();
                let sgy: f32 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                let k = rstd[r] / n as f32;
                for i in 0..n {
                    gxr[i] = k * (n as f32 * gr[i] - sg - yr[i] * sgy);
                }
            }
            vec![Some(gx)]
        })
    }

    /// Extracts `len` entries starting at `start` along `axis`.
    pub fn slice(self, axis: usize, start: usize, len: usize) -> Result<Var<'t>> {
        let xv = self.value();
        let (outer, full, inner) = shape::split_axis(xv.shape(), axis)?;
        if len == 0 || start + len > full {
            return Err(Error::dim(format!(
                "slice [{start}, {}) of axis {axis} with length {full}",
                start + len
            )));
        }
        let d = xv.data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * full + start) * inner;
            out.extend_from_slice(&d[base..base + len * inner]);
        }
        let mut shp = xv.shape().to_vec();
        shp[axis] = len;
        Ok(self.tape.record(&[self], Tensor::from_parts(shp, out), move |_: &[&Tensor], _: &Tensor, g: &[f32]| {
            let mut gx = vec![0.0f32; outer * full * inner];
            for o in 0..outer {
                let base = (o * full + start) * inner;
                gx[base..base + len * inner].copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(gx)]
        }))
    }

    /// Selects entries along `axis` by index; indices may repeat.
    pub fn gather(self, axis: usize, indices: &[usize]) -> Result<Var<'t>> {
        let xv = self.value();
        let (outer, full, inner) = shape::split_axis(xv.shape(), axis)?;
        if indices.is_empty() {
            return Err(Error::dim("gather with no indices"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= full) {
            return Err(Error::Index(format!("gather index {bad} out of range for axis of length {full}")));
        }
        let d = xv.data();
        let mut out = Vec::with_capacity(outer * indices.len() * inner);
        for o in 0..outer {
            for &ix in indices {
                let base = (o * full + ix) * inner;
                out.extend_from_slice(&d[base..base + inner]);
            }
        }
        let mut shp = xv.shape().to_vec();
        shp[axis] = indices.len();
        let idx = indices.to_vec();
        Ok(self.tape.record(&[self], Tensor::from_parts(shp, out), move |_: &[&Tensor], _: &Tensor, g: &[f32]| {
            let mut gx = vec![0.0f32; outer * full * inner];
            let sel = idx.len();
            for o in 0..outer {
                for (j, &ix) in idx.iter().enumerate() {
                    let src = (o * sel + j) * inner;
                    let dst = (o * full + ix) * inner;
                    for t in 0..inner {
                        gx[dst + t] += g[src + t];
                    }
                }
            }
            vec![Some(gx)]
        }))
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
        let first = parts.first().ok_or_else(|| Error::dim("concat of zero tensors"))?;
        let tape = first.tape;
        let vals: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let base = vals[0].shape().to_vec();
        if axis >= base.len() {
            return Err(Error::dim(format!("concat axis {axis} for shape {base:?}")));
        }
        for v in &vals[1..] {
            let s = v.shape();
            if s.len() != base.len() || s.iter().zip(&base).enumerate().any(|(i, (a, b))| i != axis && a != b) {
                return Err(Error::dim(format!("concat of {base:?} and {s:?} along axis {axis}")));
            }
        }
        let lens: Vec<usize> = vals.iter().map(|v| v.shape()[axis]).collect();
        let total: usize = lens.iter().sum();
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (v, &l) in vals.iter().zip(&lens) {
                out.extend_from_slice(&v.data()[o * l * inner..(o + 1) * l * inner]);
            }
        }
        let mut shp = base.clone();
        shp[axis] = total;
        Ok(tape.record(parts, Tensor::from_parts(shp, out), move |_: &[&Tensor], _: &Tensor, g: &[f32]| {
            let mut grads: Vec<Vec<f32>> = lens.iter().map(|&l| Vec::with_capacity(outer * l * inner)).collect();
            let mut off = 0;
            for _ in 0..outer {
                for (gv, &l) in grads.iter_mut().zip(&lens) {
                    gv.extend_from_slice(&g[off..off + l * inner]);
                    off += l * inner;
                }
            }
            grads.into_iter().map(Some).collect()
        }))
    }
}

impl Tape {
    /// Convenience wrapper for [`Var::concat`].
    pub fn concat<'t>(&'t self, parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
        Var::concat(parts, axis)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::check_gradients;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(shape: &[usize], data: &[f32]) -> Tensor {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity_and_dot() {
        let tape = Tape::new();
        let i = tape.constant(t(&[2, 2], &[1., 0., 0., 1.]));
        let b = tape.constant(t(&[2, 2], &[3., 4., 5., 6.]));
        assert_eq!(i.matmul(b).unwrap().value().data(), &[3., 4., 5., 6.]);
        let r = tape.constant(t(&[1, 2], &[1., 2.]));
        let c = tape.constant(t(&[2, 1], &[3., 4.]));
        assert_eq!(r.matmul(c).unwrap().value().data(), &[11.]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        let err = a.matmul(b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("dimension"), "{err}");
    }

    #[test]
    fn matmul_sum_gradient_is_row_sums_of_b() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Tensor::uniform(&[3, 4], -1.0, 1.0, &mut rng);
        let b = Tensor::uniform(&[4, 2], -1.0, 1.0, &mut rng);
        let tape = Tape::new();
        let av = tape.param(&a);
        let bv = tape.constant(b.clone());
        let y = av.matmul(bv).unwrap().sum();
        let g = tape.backward(y).unwrap().wrt(av);
        for i in 0..3 {
            for k in 0..4 {
                let expect = b.data()[k * 2] + b.data()[k * 2 + 1];
                assert!((g.data()[i * 4 + k] - expect).abs() < 1e-6);
            }
        }
        let err = check_gradients(
            |tp, x| Ok(x.matmul(tp.constant(b.clone()))?.sum()),
            &a,
            1e-3,
        )
        .unwrap();
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn batched_matmul_broadcasts_shared_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = Tensor::uniform(&[2, 3, 4], -1.0, 1.0, &mut rng);
        let w = Tensor::uniform(&[4, 5], -1.0, 1.0, &mut rng);
        let tape = Tape::new();
        let y = tape.constant(a.clone()).matmul(tape.constant(w.clone())).unwrap();
        assert_eq!(y.shape(), vec![2, 3, 5]);
        let yv = y.value();
        for b in 0..2 {
            for i in 0..3 {
                for j in 0..5 {
                    let e: f32 = (0..4).map(|k| a.data()[b * 12 + i * 4 + k] * w.data()[k * 5 + j]).sum();
                    assert!((yv.data()[b * 15 + i * 5 + j] - e).abs() < 1e-5);
                }
            }
        }
        let err = check_gradients(
            |tp, x| {
                let wv = tp.constant(w.clone());
                Ok(x.matmul(wv)?.square().sum())
            },
            &a,
            1e-3,
        )
        .unwrap();
        assert!(err < 1e-3);
        let err = check_gradients(
            |tp, x| {
                let av = tp.constant(a.clone());
                Ok(av.matmul(x)?.square().sum())
            },
            &w,
            1e-3,
        )
        .unwrap();
        assert!(err < 1e-3);
    }

    #[test]
    fn softmax_uniform_and_overflow_safe() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[3]));
        let y = x.softmax(0).unwrap().value();
        for v in y.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-7);
        }
        let x = tape.constant(t(&[2], &[1000.0, 0.0]));
        let y = x.softmax(0).unwrap().value();
        assert!(y.is_finite());
        assert!((y.data()[0] - 1.0).abs() < 1e-6 && y.data()[1] < 1e-6);
    }

    #[test]
    fn shared_subexpression_accumulates() {
        // f(x) = x*x + x*x  => df/dx = 4x
        let x0 = t(&[3], &[1.0, -2.0, 0.5]);
        let tape = Tape::new();
        let x = tape.param(&x0);
        let xx = x.mul(x).unwrap();
        let f = xx.add(xx).unwrap().sum();
        let g = tape.backward(f).unwrap().wrt(x);
        assert_eq!(g.data(), &[4.0, -8.0, 2.0]);
    }

    #[test]
    fn concat_slice_gather_shapes() {
        let tape = Tape::new();
        let a = tape.constant(Tensor::from_fn(&[2, 2], |i| i as f32));
        let b = tape.constant(Tensor::from_fn(&[2, 3], |i| 10.0 + i as f32));
        let c = Var::concat(&[a, b], 1).unwrap();
        assert_eq!(c.shape(), vec![2, 5]);
        assert_eq!(c.value().data(), &[0., 1., 10., 11., 12., 2., 3., 13., 14., 15.]);
        let s = c.slice(1, 1, 2).unwrap();
        assert_eq!(s.value().data(), &[1., 10., 3., 13.]);
        let g = c.gather(0, &[1, 1, 0]).unwrap();
        assert_eq!(g.shape(), vec![3, 5]);
        assert_eq!(g.value().data()[..5], c.value().data()[5..]);
        assert!(c.slice(1, 4, 2).is_err());
        assert!(matches!(c.gather(0, &[2]), Err(Error::Index(_))));
    }

    #[test]
    fn clamp_passes_gradient_on_bound() {
        let tape = Tape::new();
        let x = tape.param(&t(&[3], &[0.0, 0.5, 2.0]));
        let y = x.clamp(0.0, 1.0).sum();
        let g = tape.backward(y).unwrap().wrt(x);
        assert_eq!(g.data(), &[1.0, 1.0, 0.0]);
    }
}
