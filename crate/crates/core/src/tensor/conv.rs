use super::tape::Var;
use super::Tensor;
use crate::error::{Error, Result};

impl<'t> Var<'t> {
    /// 3x3 convolution with zero padding 1 on a `[C, H, W]` input.
    ///
    /// `weight` is `[Co, C, 3, 3]`, `bias` is `[Co]`.
    pub fn conv3x3(self, weight: Var<'t>, bias: Var<'t>) -> Result<Var<'t>> {
        let x = self.value();
        let w = weight.value();
        let b = bias.value();
        let (xs, ws) = (x.shape(), w.shape());
        if xs.len() != 3 || ws.len() != 4 || ws[1] != xs[0] || ws[2] != 3 || ws[3] != 3 || b.shape() != [ws[0]] {
            return Err(Error::dim(format!(
                "conv3x3 of input {xs:?} with weight {ws:?} and bias {:?}",
                b.shape()
            )));
        }
        let (ci, h, wd, co) = (xs[0], xs[1], xs[2], ws[0]);
        let xd = x.data();
        let wdt = w.data();
        let mut out = vec![0.0f32; co * h * wd];
        for o in 0..co {
            let plane = &mut out[o * h * wd..(o + 1) * h * wd];
            plane.iter_mut().for_each(|v| *v = b.data()[o]);
            for c in 0..ci {
                for ky in 0..3 {
                    for kx in 0..3 {
                        let k = wdt[((o * ci + c) * 3 + ky) * 3 + kx];
                        for y in 0..h {
                            let sy = y as isize + ky as isize - 1;
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            for xx in 0..wd {
                                let sx = xx as isize + kx as isize - 1;
                                if sx < 0 || sx >= wd as isize {
                                    continue;
                                }
                                plane[y * wd + xx] += k * xd[(c * h + sy as usize) * wd + sx as usize];
                            }
                        }
                    }
                }
            }
        }
        let tape = self.tape;
        Ok(tape.record(&[self, weight, bias], Tensor::from_parts(vec![co, h, wd], out), move |ins: &[&Tensor], _: &Tensor, g: &[f32]| {
            let (xd, wdt) = (ins[0].data(), ins[1].data());
            let mut gx = vec![0.0f32; ci * h * wd];
            let mut gw = vec![0.0f32; wdt.len()];
            let mut gb = vec![0.0f32; co];
            for o in 0..co {
                let gp = &g[o * h * wd..(o + 1) * h * wd];
                gb[o] = gp.iter().sum();
                for c in 0..ci {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let wi = ((o * ci + c) * 3 + ky) * 3 + kx;
                            let k = wdt[wi];
                            let mut acc = 0.0f32;
                            for y in 0..h {
                                let sy = y as isize + ky as isize - 1;
                                if sy < 0 || sy >= h as isize {
                                    continue;
                                }
                                for xx in 0..wd {
                                    let sx = xx as isize + kx as isize - 1;
                                    if sx < 0 || sx >= wd as isize {
                                        continue;
                                    }
                                    let src = (c * h + sy as usize) * wd + sx as usize;
                                    acc += gp[y * wd + xx] * xd[src];
                                    gx[src] += gp[y * wd + xx] * k;
                                }
                            }
                            gw[wi] += acc;
                        }
                    }
                }
            }
            vec![Some(gx), Some(gw), Some(gb)]
        }))
    }

    /// 2x2 average pooling with stride 2 on `[C, H, W]`; odd edges are dropped.
    pub fn avg_pool2(self) -> Result<Var<'t>> {
        let x = self.value();
        let s = x.shape();
        if s.len() != 3 || s[1] < 2 || s[2] < 2 {
            return Err(Error::dim(format!("avg_pool2 of shape {s:?}")));
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        let (oh, ow) = (h / 2, w / 2);
        let d = x.data();
        let mut out = vec![0.0f32; c * oh * ow];
        for ch in 0..c {
            for y in 0..oh {
                for xx in 0..ow {
                    let at = |dy: usize, dx: usize| d[(ch * h + 2 * y + dy) * w + 2 * xx + dx];
                    out[(ch * oh + y) * ow + xx] = 0.25 * (at(0, 0) + at(0, 1) + at(1, 0) + at(1, 1));
                }
            }
        }
        Ok(self.tape.record(&[self], Tensor::from_parts(vec![c, oh, ow], out), move |_: &[&Tensor], _: &Tensor, g: &[f32]| {
            let mut gx = vec![0.0f32; c * h * w];
            for ch in 0..c {
                for y in 0..oh {
                    for xx in 0..ow {
                        let gv = 0.25 * g[(ch * oh + y) * ow + xx];
                        for dy in 0..2 {
                            for dx in 0..2 {
                                gx[(ch * h + 2 * y + dy) * w + 2 * xx + dx] += gv;
                            }
                        }
                    }
                }
            }
            vec![Some(gx)]
        }))
    }
}

#[cfg(test)]
mod tests {
    use crate::tensor::{check_gradients, Tape, Tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn conv_with_centre_tap_is_identity() {
        let tape = Tape::new();
        let x = Tensor::from_fn(&[1, 4, 5], |i| i as f32);
        let mut w = Tensor::zeros(&[1, 1, 3, 3]);
        w.data_mut()[4] = 1.0;
        let y = tape
            .constant(x.clone())
            .conv3x3(tape.constant(w), tape.constant(Tensor::zeros(&[1])))
            .unwrap();
        assert_eq!(y.value().data(), x.data());
    }

    #[test]
    fn conv_and_pool_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Tensor::uniform(&[2, 5, 6], -1.0, 1.0, &mut rng);
        let w = Tensor::uniform(&[3, 2, 3, 3], -1.0, 1.0, &mut rng);
        let b = Tensor::uniform(&[3], -1.0, 1.0, &mut rng);
        let (w2, b2) = (w.clone(), b.clone());
        let err = check_gradients(
            move |tp, xv| {
                let y = xv.conv3x3(tp.constant(w2.clone()), tp.constant(b2.clone()))?;
                Ok(y.avg_pool2()?.square().mean())
            },
            &x,
            1e-3,
        )
        .unwrap();
        assert!(err < 1e-3, "{err}");
        let x2 = x.clone();
        let err = check_gradients(
            move |tp, wv| {
                let y = tp.constant(x2.clone()).conv3x3(wv, tp.constant(b.clone()))?;
                Ok(y.square().mean())
            },
            &w,
            1e-3,
        )
        .unwrap();
        assert!(err < 1e-3, "{err}");
    }
}
