use crate::error::{Error, Result};
use crate::tensor::{nchw, Tensor};

/// Nearest-neighbour 2x upsampling. The autoencoder decoder uses
/// upsample + conv instead of transposed convolution.
#[derive(Debug, Clone, Default)]
pub struct Upsample2x {
    saved_shape: Option<Vec<usize>>,
}

impl Upsample2x {
    pub fn new() -> Self {
        Upsample2x { saved_shape: None }
    }

    pub fn forward(&mut self, x: &Tensor, save: bool) -> Result<Tensor> {
        let (n, c, h, w) = match x.shape() {
            [n, c, h, w] => (*n, *c, *h, *w),
            s => return Err(Error::Dimension(format!("upsample input must be 4-d, got {s:?}"))),
        };
        let xs = x.data();
        let mut out = Tensor::zeros(&[n, c, h * 2, w * 2]);
        let os = out.data_mut();
        for b in 0..n {
            for ch in 0..c {
                for i in 0..h {
                    for j in 0..w {
                        let v = xs[nchw(c, h, w, b, ch, i, j)];
                        for di in 0..2 {
                            for dj in 0..2 {
                                os[nchw(c, h * 2, w * 2, b, ch, i * 2 + di, j * 2 + dj)] = v;
                            }
                        }
                    }
                }
            }
        }
        self.saved_shape = if save { Some(x.shape().to_vec()) } else { None };
        Ok(out)
    }

    pub fn backward(&mut self, dout: &Tensor) -> Result<Tensor> {
        let shape = self
            .saved_shape
            .take()
            .ok_or_else(|| Error::State("upsample backward without saved forward context".into()))?;
        let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        let ds = dout.data();
        let mut dx = Tensor::zeros(&shape);
        let dxs = dx.data_mut();
        for b in 0..n {
            for ch in 0..c {
                for i in 0..h {
                    for j in 0..w {
                        let mut acc = 0.0f32;
                        for di in 0..2 {
                            for dj in 0..2 {
                                acc += ds[nchw(c, h * 2, w * 2, b, ch, i * 2 + di, j * 2 + dj)];
                            }
                        }
                        dxs[nchw(c, h, w, b, ch, i, j)] = acc;
                    }
                }
            }
        }
        Ok(dx)
    }
}
