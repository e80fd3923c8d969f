use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::Param;

/// Fully connected layer: out = x [N,D] * w [D,M] + b [M].
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Param,
    pub b: Param,
    saved_input: Option<Tensor>,
}

impl Linear {
    pub fn new(w: Tensor, b: Tensor) -> Self {
        Linear {
            w: Param::new(w),
            b: Param::new(b),
            saved_input: None,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.value.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.w.value.shape()[1]
    }

    pub fn forward(&mut self, x: &Tensor, save: bool) -> Result<Tensor> {
        let (n, d) = match x.shape() {
            [n, d] => (*n, *d),
            s => return Err(Error::Dimension(format!("linear input must be 2-d, got {s:?}"))),
        };
        if d != self.in_dim() {
            return Err(Error::Dimension(format!(
                "linear expects input dim {}, got {d}",
                self.in_dim()
            )));
        }
        let m = self.out_dim();
        let xs = x.data();
        let ws = self.w.value.data();
        let bs = self.b.value.data();
        let mut out = Tensor::zeros(&[n, m]);
        let os = out.data_mut();
        for i in 0..n {
            let orow = &mut os[i * m..(i + 1) * m];
            orow.copy_from_slice(bs);
            for kk in 0..d {
                let xv = xs[i * d + kk];
                if xv == 0.0 {
                    continue;
                }
                let wrow = &ws[kk * m..(kk + 1) * m];
                for j in 0..m {
                    orow[j] += xv * wrow[j];
                }
            }
        }
        out.check_finite("linear forward")?;
        self.saved_input = if save { Some(x.clone()) } else { None };
        Ok(out)
    }

    pub fn backward(&mut self, dout: &Tensor) -> Result<Tensor> {
        let x = self
            .saved_input
            .take()
            .ok_or_else(|| Error::State("linear backward without saved forward context".into()))?;
        let (n, d) = (x.shape()[0], x.shape()[1]);
        let m = self.out_dim();
        if dout.shape() != [n, m] {
            return Err(Error::Dimension(format!(
                "linear upstream grad {:?}, expected [{n}, {m}]",
                dout.shape()
            )));
        }
        let xs = x.data();
        let ds = dout.data();
        let ws = self.w.value.data();
        let mut dx = Tensor::zeros(x.shape());
        let dxs = dx.data_mut();
        let dws = self.w.grad.data_mut();
        let dbs = self.b.grad.data_mut();
        for i in 0..n {
            let drow = &ds[i * m..(i + 1) * m];
            for j in 0..m {
                dbs[j] += drow[j];
            }
            for kk in 0..d {
                let xv = xs[i * d + kk];
                let wrow = &ws[kk * m..(kk + 1) * m];
                let dwrow = &mut dws[kk * m..(kk + 1) * m];
                let mut acc = 0.0f32;
                for j in 0..m {
                    dwrow[j] += xv * drow[j];
                    acc += wrow[j] * drow[j];
                }
                dxs[i * d + kk] += acc;
            }
        }
        Ok(dx)
    }
}
