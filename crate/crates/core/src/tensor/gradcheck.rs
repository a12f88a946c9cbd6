//! Central finite-difference gradient checker.

use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Max over coordinates of `|analytic - numeric| / max(1, |numeric|)`, where
/// `numeric` is the central difference `(f(x+h) - f(x-h)) / 2h`.
///
/// `h` is snapped to the nearest power of two so that `x ± h` is exact in
/// f32 for moderate `x`; a quadratic then differences without rounding.
pub fn check_gradients<F>(f: F, x: &Tensor, h: f32) -> Result<f32>
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>>,
{
    let coords: Vec<usize> = (0..x.numel()).collect();
    check_gradients_at(f, x, h, &coords)
}

/// Like [`check_gradients`] but only probes the listed flat coordinates.
pub fn check_gradients_at<F>(f: F, x: &Tensor, h: f32, coords: &[usize]) -> Result<f32>
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>>,
{
    if !(h > 0.0) {
        return Err(Error::config(format!("finite-difference step {h} must be positive")));
    }
    let h = 2f32.powi(h.log2().round() as i32);
    let analytic = {
        let tape = Tape::new();
        let xv = tape.param(x);
        let y = f(&tape, xv)?;
        finite(y.item())?;
        tape.backward(y)?.wrt(xv)
    };
    let eval = |t: &Tensor| -> Result<f64> {
        let tape = Tape::new();
        let y = f(&tape, tape.constant(t.clone()))?;
        finite(y.item()).map(|v| v as f64)
    };
    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for &i in coords {
        if i >= x.numel() {
            return Err(Error::Index(format!("probe coordinate {i} for {} elements", x.numel())));
        }
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = eval(&probe)?;
        probe.data_mut()[i] = orig - h;
        let minus = eval(&probe)?;
        probe.data_mut()[i] = orig;
        // Use the step actually representable in f32.
        let step = ((orig + h) as f64) - ((orig - h) as f64);
        let numeric = (plus - minus) / step;
        let err = (analytic.data()[i] as f64 - numeric).abs() / numeric.abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst as f32)
}

fn finite(v: f32) -> Result<f32> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric(format!("function value {v} is not finite")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sum_of_squares_is_exact() {
        let x = Tensor::new(&[3], vec![1.0, 2.0, 3.0]).unwrap();
        let tape = Tape::new();
        let xv = tape.param(&x);
        let y = xv.square().sum();
        assert_eq!(tape.backward(y).unwrap().wrt(xv).data(), &[2.0, 4.0, 6.0]);
        let err = check_gradients(|_, x| Ok(x.square().sum()), &x, 1e-3).unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn softmax_cross_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let logits = Tensor::uniform(&[4, 6], -1.0, 1.0, &mut rng);
        let onehot = Tensor::from_fn(&[4, 6], |i| if i % 6 == (i / 6 * 5) % 6 { 1.0 } else { 0.0 });
        let err = check_gradients(
            |tp, x| {
                let p = x.softmax(1)?;
                Ok(p.ln().mul(tp.constant(onehot.clone()))?.sum().neg())
            },
            &logits,
            1e-3,
        )
        .unwrap();
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn wrong_backward_rule_is_detected() {
        let x = Tensor::new(&[3], vec![0.3, -0.7, 1.1]).unwrap();
        let err = check_gradients(
            |tp, x| {
                let v = x.value();
                let out = v.map(|a| a * a);
                // d(x^2)/dx claimed as x instead of 2x.
                let sq = tp.record(&[x], out, |ins: &[&Tensor], _: &Tensor, g: &[f32]| {
                    vec![Some(ins[0].data().iter().zip(g).map(|(a, b)| a * b).collect())]
                });
                Ok(sq.sum())
            },
            &x,
            1e-3,
        )
        .unwrap();
        assert!(err > 0.1, "{err}");
    }

    #[test]
    fn non_finite_value_is_an_error() {
        let x = Tensor::new(&[2], vec![-1.0, 1.0]).unwrap();
        let r = check_gradients(|_, x| Ok(x.ln().sum()), &x, 1e-3);
        assert!(matches!(r, Err(Error::Numeric(_))));
    }
}
