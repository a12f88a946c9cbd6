use super::LatentBlock;
use crate::error::{Error, Result};
use crate::tensor::{Tensor, Var};

fn dims5(shape: &[usize]) -> Result<[usize; 5]> {
    match shape {
        [f, v, h, w, c] => Ok([*f, *v, *h, *w, *c]),
        s => Err(Error::dim(format!("expected (F, V, H, W, C), got {s:?}"))),
    }
}

/// `(F,V,H,W,C) -> (F·H·W, V, C)`.
pub fn reshape_for_view_attention(l: &LatentBlock) -> Tensor {
    let [f, v, h, w, c] = l.dims();
    l.values()
        .permute(&[0, 2, 3, 1, 4])
        .and_then(|t| t.reshape(&[f * h * w, v, c]))
        .expect("latent block layout")
}

/// `(F,V,H,W,C) -> (F, V·H·W, C)`; a pure reshape.
pub fn reshape_for_3d_attention(l: &LatentBlock) -> Tensor {
    let [f, v, h, w, c] = l.dims();
    l.values().reshape(&[f, v * h * w, c]).expect("latent block layout")
}

/// `(F,V,H,W,C) -> (V·H·W, F, C)`.
pub fn reshape_for_frame_attention(l: &LatentBlock) -> Tensor {
    let [f, v, h, w, c] = l.dims();
    l.values()
        .permute(&[1, 2, 3, 0, 4])
        .and_then(|t| t.reshape(&[v * h * w, f, c]))
        .expect("latent block layout")
}

pub fn from_view_layout(t: &Tensor, dims: [usize; 5]) -> Result<LatentBlock> {
    let [f, v, h, w, c] = dims;
    LatentBlock::new(t.reshape(&[f, h, w, v, c])?.permute(&[0, 3, 1, 2, 4])?)
}

pub fn from_3d_layout(t: &Tensor, dims: [usize; 5]) -> Result<LatentBlock> {
    LatentBlock::new(t.reshape(&dims)?)
}

pub fn from_frame_layout(t: &Tensor, dims: [usize; 5]) -> Result<LatentBlock> {
    let [f, v, h, w, c] = dims;
    LatentBlock::new(t.reshape(&[v, h, w, f, c])?.permute(&[3, 0, 1, 2, 4])?)
}

// Differentiable versions used inside the blocks.

pub fn to_view_layout(x: Var<'_>) -> Result<Var<'_>> {
    let [f, v, h, w, c] = dims5(&x.shape())?;
    x.permute(&[0, 2, 3, 1, 4])?.reshape(&[f * h * w, v, c])
}

pub fn to_3d_layout(x: Var<'_>) -> Result<Var<'_>> {
    let [f, v, h, w, c] = dims5(&x.shape())?;
    x.reshape(&[f, v * h * w, c])
}

pub fn to_frame_layout(x: Var<'_>) -> Result<Var<'_>> {
    let [f, v, h, w, c] = dims5(&x.shape())?;
    x.permute(&[1, 2, 3, 0, 4])?.reshape(&[v * h * w, f, c])
}

pub(crate) fn to_spatial_layout(x: Var<'_>) -> Result<Var<'_>> {
    let [f, v, h, w, c] = dims5(&x.shape())?;
    x.reshape(&[f * v, h * w, c])
}

pub fn back_from_view(x: Var<'_>, dims: [usize; 5]) -> Result<Var<'_>> {
    let [f, v, h, w, c] = dims;
    x.reshape(&[f, h, w, v, c])?.permute(&[0, 3, 1, 2, 4])
}

pub fn back_from_frame(x: Var<'_>, dims: [usize; 5]) -> Result<Var<'_>> {
    let [f, v, h, w, c] = dims;
    x.reshape(&[v, h, w, f, c])?.permute(&[3, 0, 1, 2, 4])
}

pub(crate) fn var_dims(x: Var<'_>) -> Result<[usize; 5]> {
    dims5(&x.shape())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn block(dims: [usize; 5], seed: u64) -> LatentBlock {
        LatentBlock::new(Tensor::randn(&dims, 1.0, &mut substream(seed, "layout"))).unwrap()
    }

    #[test]
    fn view_layout_matches_index_oracle() {
        let dims = [2, 3, 4, 4, 5];
        let [f, v, h, w, c] = dims;
        let l = block(dims, 1);
        let t = reshape_for_view_attention(&l);
        assert_eq!(t.shape(), &[f * h * w, v, c]);
        for fi in 0..f {
            for vi in 0..v {
                for hi in 0..h {
                    for wi in 0..w {
                        for ci in 0..c {
                            let src = (((fi * v + vi) * h + hi) * w + wi) * c + ci;
                            let dst = ((fi * h * w + hi * w + wi) * v + vi) * c + ci;
                            assert_eq!(l.values().data()[src].to_bits(), t.data()[dst].to_bits());
                        }
                    }
                }
            }
        }
        assert!(from_view_layout(&t, dims).unwrap().values().bitwise_eq(l.values()));
    }

    #[test]
    fn layout_shapes() {
        let l = LatentBlock::zeros(12, 4, 8, 8, 16);
        assert_eq!(reshape_for_view_attention(&l).shape(), &[768, 4, 16]);
        assert_eq!(reshape_for_3d_attention(&l).shape(), &[12, 256, 16]);
        let one = LatentBlock::new(Tensor::new(&[1, 1, 1, 1, 3], vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
        let t = reshape_for_view_attention(&one);
        assert_eq!(t.shape(), &[1, 1, 3]);
        assert_eq!(t.data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn three_d_layout_matches_index_oracle() {
        let dims = [3, 2, 2, 2, 4];
        let [f, v, h, w, c] = dims;
        let l = block(dims, 2);
        let t = reshape_for_3d_attention(&l);
        for fi in 0..f {
            for vi in 0..v {
                for p in 0..h * w {
                    for ci in 0..c {
                        let src = ((fi * v + vi) * h * w + p) * c + ci;
                        let dst = (fi * v * h * w + vi * h * w + p) * c + ci;
                        assert_eq!(l.values().data()[src].to_bits(), t.data()[dst].to_bits());
                    }
                }
            }
        }
        assert!(from_3d_layout(&t, dims).unwrap().values().bitwise_eq(l.values()));
        let single = LatentBlock::zeros(2, 1, 3, 5, 2);
        assert_eq!(reshape_for_3d_attention(&single).shape()[1], 15);
    }

    #[test]
    fn frame_layout_round_trip() {
        let dims = [3, 2, 3, 2, 4];
        let l = block(dims, 3);
        let t = reshape_for_frame_attention(&l);
        assert_eq!(t.shape(), &[12, 3, 4]);
        assert!(from_frame_layout(&t, dims).unwrap().values().bitwise_eq(l.values()));
    }
}
