//! Multi-resolution hash encoding.

use crate::error::{Error, Result};
use crate::tensor::{Tensor, Var};
use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

const PRIMES: [u32; 3] = [1, 2_654_435_761, 805_459_861];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HashGridConfig {
    pub levels: usize,
    pub features_per_level: usize,
    pub table_size_log2: u32,
    pub base_resolution: usize,
    pub per_level_scale: f32,
}

impl Default for HashGridConfig {
    fn default() -> Self {
        Self {
            levels: 8,
            features_per_level: 2,
            table_size_log2: 14,
            base_resolution: 16,
            per_level_scale: 1.5,
        }
    }
}

impl HashGridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.features_per_level == 0 || self.base_resolution == 0 {
            return Err(Error::config("hash grid sizes must be positive"));
        }
        if !(1..=24).contains(&self.table_size_log2) || !(self.per_level_scale >= 1.0) {
            return Err(Error::config("hash grid table size or level scale out of range"));
        }
        Ok(())
    }

    pub fn table_size(&self) -> usize {
        1 << self.table_size_log2
    }

    pub fn output_dim(&self) -> usize {
        self.levels * self.features_per_level
    }

    pub fn resolution(&self, level: usize) -> usize {
        (self.base_resolution as f64 * (self.per_level_scale as f64).powi(level as i32)).floor() as usize
    }
}

/// Table slot of an integer grid corner.
pub fn hash_corner(c: [u32; 3], table_size_log2: u32) -> usize {
    let h = c[0].wrapping_mul(PRIMES[0]) ^ c[1].wrapping_mul(PRIMES[1]) ^ c[2].wrapping_mul(PRIMES[2]);
    (h & ((1u32 << table_size_log2) - 1)) as usize
}

/// Cell origin and fractional offset of `x` (in `[-0.5, 0.5]^3`, clamped)
/// on a grid with `res` cells per axis.
fn locate(x: [f32; 3], res: usize) -> ([u32; 3], [f32; 3]) {
    let mut cell = [0u32; 3];
    let mut frac = [0f32; 3];
    for d in 0..3 {
        let p = (x[d].clamp(-0.5, 0.5) + 0.5) * res as f32;
        let i = (p.floor() as usize).min(res - 1);
        cell[d] = i as u32;
        frac[d] = p - i as f32;
    }
    (cell, frac)
}

/// The 8 `(table slot, trilinear weight)` pairs for `x` at `level`.
pub fn level_corners(cfg: &HashGridConfig, level: usize, x: [f32; 3]) -> [(usize, f32); 8] {
    let (cell, frac) = locate(x, cfg.resolution(level));
    let mut out = [(0usize, 0f32); 8];
    for (k, o) in out.iter_mut().enumerate() {
        let mut c = cell;
        let mut w = 1.0;
        for d in 0..3 {
            let bit = (k >> d) & 1;
            c[d] += bit as u32;
            w *= if bit == 1 { frac[d] } else { 1.0 - frac[d] };
        }
        *o = (hash_corner(c, cfg.table_size_log2), w);
    }
    out
}

/// Uniform `[-1e-4, 1e-4]` tables, one `[T, features]` tensor per level.
pub fn init_tables(cfg: &HashGridConfig, rng: &mut crate::rng::Rng) -> Vec<Tensor> {
    (0..cfg.levels)
        .map(|_| Tensor::uniform(&[cfg.table_size(), cfg.features_per_level], -1e-4, 1e-4, rng))
        .collect()
}

fn for_rows(out: &mut [f32], width: usize, f: impl Fn(usize, &mut [f32]) + Sync + Send) {
    #[cfg(feature = "parallel")]
    {
        out.par_chunks_mut(width).enumerate().for_each(|(i, r)| f(i, r));
    }
    #[cfg(not(feature = "parallel"))]
    {
        out.chunks_mut(width).enumerate().for_each(|(i, r)| f(i, r));
    }
}

/// Encodes points `x: [N, 3]` into `[N, levels * features]`, differentiable
/// in both the points and the tables.
pub fn hashgrid_lookup<'t>(x: Var<'t>, tables: &[Var<'t>], cfg: &HashGridConfig) -> Result<Var<'t>> {
    let xs = x.shape();
    if xs.len() != 2 || xs[1] != 3 {
        return Err(Error::dim(format!("hash grid input {xs:?}, expected [N, 3]")));
    }
    if tables.len() != cfg.levels {
        return Err(Error::dim(format!("{} tables for {} levels", tables.len(), cfg.levels)));
    }
    let nf = cfg.features_per_level;
    for t in tables {
        if t.shape() != [cfg.table_size(), nf] {
            return Err(Error::dim(format!("hash table {:?}", t.shape())));
        }
    }
    let n = xs[0];
    let dim = cfg.output_dim();
    let xv = x.value();
    let tv: Vec<_> = tables.iter().map(|t| t.value()).collect();
    let mut out = vec![0f32; n * dim];
    {
        let xd = xv.data();
        let td: Vec<&[f32]> = tv.iter().map(|t| t.data()).collect();
        for_rows(&mut out, dim, |i, row| {
            let p = [xd[3 * i], xd[3 * i + 1], xd[3 * i + 2]];
            for (l, table) in td.iter().enumerate() {
                for (slot, w) in level_corners(cfg, l, p) {
                    for f in 0..nf {
                        row[l * nf + f] += w * table[slot * nf + f];
                    }
                }
            }
        });
    }
    let cfg = *cfg;
    let mut inputs = vec![x];
    inputs.extend_from_slice(tables);
    Ok(x.tape().record(&inputs, Tensor::new(&[n, dim], out)?, move |ins: &[&Tensor], _: &Tensor, g: &[f32]| {
        let xd = ins[0].data();
        let mut gx = vec![0f32; n * 3];
        let mut gt: Vec<Vec<f32>> = (0..cfg.levels).map(|_| vec![0f32; cfg.table_size() * nf]).collect();
        for i in 0..n {
            let p = [xd[3 * i], xd[3 * i + 1], xd[3 * i + 2]];
            let gr = &g[i * dim..(i + 1) * dim];
            for l in 0..cfg.levels {
                let res = cfg.resolution(l);
                let (cell, frac) = locate(p, res);
                let table = ins[1 + l].data();
                let gl = &gr[l * nf..(l + 1) * nf];
                for k in 0..8 {
                    let mut c = cell;
                    let mut wd = [0f32; 3];
                    let mut w = 1.0;
                    for d in 0..3 {
                        let bit = (k >> d) & 1;
                        c[d] += bit as u32;
                        wd[d] = if bit == 1 { frac[d] } else { 1.0 - frac[d] };
                        w *= wd[d];
                    }
                    let slot = hash_corner(c, cfg.table_size_log2);
                    let mut dot = 0f32;
                    for f in 0..nf {
                        gt[l][slot * nf + f] += w * gl[f];
                        dot += gl[f] * table[slot * nf + f];
                    }
                    for d in 0..3 {
                        // Clamped coordinates have no gradient.
                        if p[d] <= -0.5 || p[d] >= 0.5 {
                            continue;
                        }
                        let sign = if (k >> d) & 1 == 1 { 1.0 } else { -1.0 };
                        let others: f32 = (0..3).filter(|&e| e != d).map(|e| wd[e]).product();
                        gx[3 * i + d] += dot * sign * others * res as f32;
                    }
                }
            }
        }
        let mut grads = vec![Some(gx)];
        grads.extend(gt.into_iter().map(Some));
        grads
    }))
}
