use crate::error::{Error, Result};
use crate::tensor::{nchw, Tensor};

/// Average pooling with independent kernel extents per dimension and stride
/// equal to the kernel. The models pool 2x2 while a dimension can still halve
/// and 1 (no-op) once it has collapsed; rows/columns beyond the last full
/// window are dropped (floor semantics).
#[derive(Debug, Clone)]
pub struct AvgPool2d {
    pub kh: usize,
    pub kw: usize,
    saved_shape: Option<Vec<usize>>,
}

impl AvgPool2d {
    pub fn new(kh: usize, kw: usize) -> Self {
        AvgPool2d {
            kh,
            kw,
            saved_shape: None,
        }
    }

    pub fn output_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if self.kh == 0 || self.kw == 0 || h < self.kh || w < self.kw {
            return Err(Error::Dimension(format!(
                "avgpool {}x{} cannot apply to {h}x{w}",
                self.kh, self.kw
            )));
        }
        Ok((h / self.kh, w / self.kw))
    }

    pub fn forward(&mut self, x: &Tensor, save: bool) -> Result<Tensor> {
        let (n, c, h, w) = match x.shape() {
            [n, c, h, w] => (*n, *c, *h, *w),
            s => return Err(Error::Dimension(format!("avgpool input must be 4-d, got {s:?}"))),
        };
        let (ho, wo) = self.output_dims(h, w)?;
        let inv = 1.0 / (self.kh * self.kw) as f32;
        let xs = x.data();
        let mut out = Tensor::zeros(&[n, c, ho, wo]);
        let os = out.data_mut();
        for b in 0..n {
            for ch in 0..c {
                for oh in 0..ho {
                    for ow in 0..wo {
                        let mut acc = 0.0f32;
                        for i in 0..self.kh {
                            for j in 0..self.kw {
                                acc += xs[nchw(c, h, w, b, ch, oh * self.kh + i, ow * self.kw + j)];
                            }
                        }
                        os[nchw(c, ho, wo, b, ch, oh, ow)] = acc * inv;
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
            .ok_or_else(|| Error::State("avgpool backward without saved forward context".into()))?;
        let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        let (ho, wo) = self.output_dims(h, w)?;
        let inv = 1.0 / (self.kh * self.kw) as f32;
        let ds = dout.data();
        let mut dx = Tensor::zeros(&shape);
        let dxs = dx.data_mut();
        for b in 0..n {
            for ch in 0..c {
                for oh in 0..ho {
                    for ow in 0..wo {
                        let g = ds[nchw(c, ho, wo, b, ch, oh, ow)] * inv;
                        for i in 0..self.kh {
                            for j in 0..self.kw {
                                dxs[nchw(c, h, w, b, ch, oh * self.kh + i, ow * self.kw + j)] += g;
                            }
                        }
                    }
                }
            }
        }
        Ok(dx)
    }
}
