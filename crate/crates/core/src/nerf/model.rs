use super::hashgrid::{hashgrid_lookup, init_tables, HashGridConfig};
use crate::error::{Error, Result};
use crate::params::{BoundParams, ParamStore};
use crate::rng::substream;
use crate::tensor::{Tape, Tensor, Var};
use serde::{Deserialize, Serialize};

/// Anything the volume renderer can march through.
pub trait Field<'t> {
    /// Density `[N, 1]` and color `[N, 3]` at points `x: [N, 3]`, each
    /// point at its own (possibly fractional) frame time.
    fn query(&self, x: Var<'t>, times: &[f32]) -> Result<(Var<'t>, Var<'t>)>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NerfConfig {
    pub hash: HashGridConfig,
    pub hidden: usize,
    pub time_dim: usize,
    pub pe_freqs: usize,
    /// Multiplies the softplus density output.
    pub density_scale: f32,
    /// Initial bias of the density head.
    pub density_bias: f32,
    pub frames: usize,
}

impl Default for NerfConfig {
    fn default() -> Self {
        Self {
            hash: HashGridConfig::default(),
            hidden: 64,
            time_dim: 8,
            pe_freqs: 4,
            density_scale: 10.0,
            density_bias: -4.0,
            frames: 1,
        }
    }
}

impl NerfConfig {
    pub fn pe_dim(&self) -> usize {
        3 + 6 * self.pe_freqs
    }
}

/// Canonical hash-grid field plus a time-conditioned deformation MLP.
#[derive(Clone, Debug)]
pub struct DynNerfModel {
    pub config: NerfConfig,
    pub params: ParamStore,
}

fn dense(rng: &mut crate::rng::Rng, fan_in: usize, fan_out: usize) -> Tensor {
    Tensor::randn(&[fan_in, fan_out], (2.0 / fan_in as f32).sqrt(), rng)
}

pub const DEFORM_PREFIX: &str = "deform.";
pub const TIME_PARAM: &str = "time";

impl DynNerfModel {
    pub fn new(config: NerfConfig, seed: u64) -> Result<Self> {
        config.hash.validate()?;
        if config.frames == 0 || config.hidden == 0 || config.time_dim == 0 {
            return Err(Error::config("nerf sizes must be positive"));
        }
        let mut rng = substream(seed, "nerf-init");
        let mut p = ParamStore::new();
        for (l, t) in init_tables(&config.hash, &mut rng).into_iter().enumerate() {
            p.insert(format!("hash.{l}"), t);
        }
        let (fd, h) = (config.hash.output_dim(), config.hidden);
        p.insert("sigma.w0", dense(&mut rng, fd, h));
        p.insert("sigma.b0", Tensor::zeros(&[h]));
        p.insert("sigma.w1", dense(&mut rng, h, 1).map(|v| v * 0.1));
        p.insert("sigma.b1", Tensor::scalar(config.density_bias));
        p.insert("color.w0", dense(&mut rng, fd, h));
        p.insert("color.b0", Tensor::zeros(&[h]));
        p.insert("color.w1", dense(&mut rng, h, 3).map(|v| v * 0.1));
        p.insert("color.b1", Tensor::zeros(&[3]));
        let din = config.pe_dim() + config.time_dim;
        p.insert("deform.w0", dense(&mut rng, din, h));
        p.insert("deform.b0", Tensor::zeros(&[h]));
        p.insert("deform.w1", dense(&mut rng, h, h));
        p.insert("deform.b1", Tensor::zeros(&[h]));
        p.insert("deform.w2", Tensor::zeros(&[h, 3]));
        p.insert("deform.b2", Tensor::zeros(&[3]));
        p.insert(TIME_PARAM, Tensor::randn(&[config.frames, config.time_dim], 0.5, &mut rng));
        Ok(Self { config, params: p })
    }

    /// True while the deformation output layer is identically zero.
    pub fn deformation_is_zero(&self) -> bool {
        ["deform.w2", "deform.b2"]
            .iter()
            .all(|n| self.params.tensor(n).data().iter().all(|&v| v == 0.0))
    }

    pub fn bind<'t, 'm>(&'m self, tape: &'t Tape, frozen: impl Fn(&str) -> bool) -> BoundNerf<'t, 'm> {
        BoundNerf {
            model: self,
            params: self.params.bind(tape, frozen),
            skip_deform: self.deformation_is_zero(),
        }
    }

    pub fn bind_frozen<'t, 'm>(&'m self, tape: &'t Tape) -> BoundNerf<'t, 'm> {
        self.bind(tape, |_| true)
    }

    /// Density and color at one point and integer frame.
    pub fn query_field(&self, x: [f32; 3], frame: usize) -> Result<(f32, [f32; 3])> {
        if frame >= self.config.frames {
            return Err(Error::Index(format!("frame {frame} of {}", self.config.frames)));
        }
        let tape = Tape::new();
        let b = self.bind_frozen(&tape);
        let (s, c) = b.query(tape.constant(Tensor::new(&[1, 3], x.to_vec())?), &[frame as f32])?;
        let c = c.value();
        Ok((s.item(), [c.data()[0], c.data()[1], c.data()[2]]))
    }

    /// Density and color of the canonical field, bypassing deformation.
    pub fn query_canonical(&self, x: [f32; 3]) -> Result<(f32, [f32; 3])> {
        let tape = Tape::new();
        let b = self.bind_frozen(&tape);
        let (s, c) = b.canonical(tape.constant(Tensor::new(&[1, 3], x.to_vec())?))?;
        let c = c.value();
        Ok((s.item(), [c.data()[0], c.data()[1], c.data()[2]]))
    }
}

/// A model's parameters recorded on a tape.
pub struct BoundNerf<'t, 'm> {
    pub model: &'m DynNerfModel,
    pub params: BoundParams<'t>,
    skip_deform: bool,
}

fn linear<'t>(x: Var<'t>, w: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
    x.matmul(w)?.add(b)
}

/// `[x, sin(2^k pi x), cos(2^k pi x)]` for each frequency.
pub fn positional_encoding(x: &[f32], freqs: usize) -> Vec<f32> {
    let n = x.len() / 3;
    let dim = 3 + 6 * freqs;
    let mut out = Vec::with_capacity(n * dim);
    for p in x.chunks(3) {
        out.extend_from_slice(p);
        for k in 0..freqs {
            let s = std::f32::consts::PI * (1u32 << k) as f32;
            for &v in p {
                out.push((v * s).sin());
            }
            for &v in p {
                out.push((v * s).cos());
            }
        }
    }
    out
}

impl<'t, 'm> BoundNerf<'t, 'm> {
    fn tables(&self) -> Vec<Var<'t>> {
        (0..self.model.config.hash.levels)
            .map(|l| self.params.get(&format!("hash.{l}")))
            .collect()
    }

    pub fn canonical(&self, x: Var<'t>) -> Result<(Var<'t>, Var<'t>)> {
        let cfg = &self.model.config;
        let p = &self.params;
        let feat = hashgrid_lookup(x, &self.tables(), &cfg.hash)?;
        let hs = linear(feat, p.get("sigma.w0"), p.get("sigma.b0"))?.relu();
        let sigma = linear(hs, p.get("sigma.w1"), p.get("sigma.b1"))?
            .softplus()
            .scale(cfg.density_scale);
        let hc = linear(feat, p.get("color.w0"), p.get("color.b0"))?.relu();
        let rgb = linear(hc, p.get("color.w1"), p.get("color.b1"))?.sigmoid();
        Ok((sigma, rgb))
    }

    /// Offsets `[N, 3]` added to `x` before the canonical lookup.
    pub fn deformation(&self, x: Var<'t>, times: &[f32]) -> Result<Var<'t>> {
        let cfg = &self.model.config;
        let n = x.shape()[0];
        if times.len() != n {
            return Err(Error::dim(format!("{} times for {n} points", times.len())));
        }
        let tape = x.tape();
        let pe = tape.constant(Tensor::new(&[n, cfg.pe_dim()], positional_encoding(x.value().data(), cfg.pe_freqs))?);
        let last = (cfg.frames - 1) as f32;
        let mut lo = Vec::with_capacity(n);
        let mut hi = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        for &t in times {
            if !(0.0..=last).contains(&t) {
                return Err(Error::Index(format!("frame time {t} outside [0, {last}]")));
            }
            let f0 = t.floor() as usize;
            let f1 = (f0 + 1).min(cfg.frames - 1);
            lo.push(f0);
            hi.push(f1);
            w.push(t - f0 as f32);
        }
        let table = self.params.get(TIME_PARAM);
        let mut temb = table.gather(0, &lo)?;
        if w.iter().any(|&v| v != 0.0) {
            let wv = tape.constant(Tensor::new(&[n, 1], w)?);
            let upper = table.gather(0, &hi)?;
            temb = temb.add(upper.sub(temb)?.mul(wv)?)?;
        }
        let p = &self.params;
        let inp = Var::concat(&[pe, temb], 1)?;
        let h = linear(inp, p.get("deform.w0"), p.get("deform.b0"))?.relu();
        let h = linear(h, p.get("deform.w1"), p.get("deform.b1"))?.relu();
        linear(h, p.get("deform.w2"), p.get("deform.b2"))
    }
}

impl<'t, 'm> Field<'t> for BoundNerf<'t, 'm> {
    fn query(&self, x: Var<'t>, times: &[f32]) -> Result<(Var<'t>, Var<'t>)> {
        let n = x.shape()[0];
        if times.len() != n {
            return Err(Error::dim(format!("{} times for {n} points", times.len())));
        }
        let last = (self.model.config.frames - 1) as f32;
        if let Some(t) = times.iter().find(|t| !(0.0..=last).contains(*t)) {
            return Err(Error::Index(format!("frame time {t} outside [0, {last}]")));
        }
        // A zero output layer makes the offset exactly zero, so skipping it
        // changes nothing.
        let xd = if self.skip_deform && !self.params.get("deform.w2").is_tracked() {
            x
        } else {
            x.add(self.deformation(x, times)?)?.clamp(-0.5, 0.5)
        };
        self.canonical(xd)
    }
}

/// Field with no density anywhere.
pub struct EmptyField;

impl<'t> Field<'t> for EmptyField {
    fn query(&self, x: Var<'t>, _: &[f32]) -> Result<(Var<'t>, Var<'t>)> {
        let n = x.shape()[0];
        let tape = x.tape();
        Ok((tape.constant(Tensor::zeros(&[n, 1])), tape.constant(Tensor::zeros(&[n, 3]))))
    }
}

/// Constant density and color.
pub struct ConstantField {
    pub sigma: f32,
    pub rgb: [f32; 3],
}

impl<'t> Field<'t> for ConstantField {
    fn query(&self, x: Var<'t>, _: &[f32]) -> Result<(Var<'t>, Var<'t>)> {
        let n = x.shape()[0];
        let tape = x.tape();
        let c = self.rgb;
        Ok((
            tape.constant(Tensor::full(&[n, 1], self.sigma)),
            tape.constant(Tensor::from_fn(&[n, 3], |i| c[i % 3])),
        ))
    }
}

/// Solid sphere of uniform density centred at `center`; color may depend on
/// the point.
pub struct SphereField {
    pub center: [f32; 3],
    pub radius: f32,
    pub sigma: f32,
    pub color: fn([f32; 3]) -> [f32; 3],
}

impl<'t> Field<'t> for SphereField {
    fn query(&self, x: Var<'t>, _: &[f32]) -> Result<(Var<'t>, Var<'t>)> {
        let xv = x.value();
        let n = xv.shape()[0];
        let mut s = Vec::with_capacity(n);
        let mut c = Vec::with_capacity(3 * n);
        for p in xv.data().chunks(3) {
            let d2: f32 = (0..3).map(|k| (p[k] - self.center[k]).powi(2)).sum();
            s.push(if d2 <= self.radius * self.radius { self.sigma } else { 0.0 });
            c.extend((self.color)([p[0], p[1], p[2]]));
        }
        let tape = x.tape();
        Ok((tape.constant(Tensor::new(&[n, 1], s)?), tape.constant(Tensor::new(&[n, 3], c)?)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> NerfConfig {
        NerfConfig {
            frames: 3,
            ..Default::default()
        }
    }

    #[test]
    fn activations_bound_outputs() {
        let m = DynNerfModel::new(small(), 1).unwrap();
        let (s, c) = m.query_field([0.1, -0.2, 0.3], 2).unwrap();
        assert!(s >= 0.0);
        assert!(c.iter().all(|&v| v > 0.0 && v < 1.0));
        assert!(matches!(m.query_field([0.0; 3], 3), Err(Error::Index(_))));
    }

    #[test]
    fn initial_field_is_frame_independent() {
        let m = DynNerfModel::new(small(), 2).unwrap();
        let a = m.query_field([0.2, 0.1, -0.1], 0).unwrap();
        let b = m.query_field([0.2, 0.1, -0.1], 2).unwrap();
        assert_eq!(a, b);
    }
}
