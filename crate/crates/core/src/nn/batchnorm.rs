//! Batch normalization over NCHW with per-channel running statistics.
//! Statistics accumulate in f64; normalization uses the biased batch variance,
//! running variance stores the unbiased estimate.

use crate::error::{Error, Result};
use crate::tensor::{nchw, Tensor};

use super::{Mode, Param};

#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
    pub momentum: f32,
    pub eps: f32,
    /// When false, train-mode forwards do not update running statistics.
    pub track_running_stats: bool,
    saved: Option<Saved>,
}

#[derive(Debug, Clone)]
struct Saved {
    xhat: Tensor,
    invstd: Vec<f32>,
    mode: Mode,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            gamma: Param::new(Tensor::full(&[channels], 1.0)),
            beta: Param::new(Tensor::zeros(&[channels])),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: 0.1,
            eps: 1e-5,
            track_running_stats: true,
            saved: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.value.len()
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode, save: bool) -> Result<Tensor> {
        let (n, c, h, w) = match x.shape() {
            [n, c, h, w] => (*n, *c, *h, *w),
            s => return Err(Error::Dimension(format!("batchnorm input must be 4-d, got {s:?}"))),
        };
        if c != self.channels() {
            return Err(Error::Dimension(format!(
                "batchnorm expects {} channels, got {c}",
                self.channels()
            )));
        }
        if mode == Mode::Train && n < 2 {
            return Err(Error::Config("batchnorm train mode requires batch size >= 2".into()));
        }

        let plane = h * w;
        let count = (n * plane) as f64;
        let xs = x.data();
        let mut out = Tensor::zeros(x.shape());
        let mut xhat = Tensor::zeros(x.shape());
        let mut invstd = vec![0.0f32; c];

        for ch in 0..c {
            let (mean, var) = match mode {
                Mode::Train => {
                    let mut sum = 0.0f64;
                    let mut sumsq = 0.0f64;
                    for b in 0..n {
                        let o = nchw(c, h, w, b, ch, 0, 0);
                        for &v in &xs[o..o + plane] {
                            let v = v as f64;
                            sum += v;
                            sumsq += v * v;
                        }
                    }
                    let mean = sum / count;
                    let var = (sumsq / count - mean * mean).max(0.0);
                    if self.track_running_stats {
                        let unbiased = if count > 1.0 { var * count / (count - 1.0) } else { var };
                        let m = self.momentum as f64;
                        self.running_mean[ch] =
                            ((1.0 - m) * self.running_mean[ch] as f64 + m * mean) as f32;
                        self.running_var[ch] =
                            ((1.0 - m) * self.running_var[ch] as f64 + m * unbiased) as f32;
                    }
                    (mean as f32, var as f32)
                }
                Mode::Eval => (self.running_mean[ch], self.running_var[ch]),
            };
            let istd = 1.0 / (var + self.eps).sqrt();
            invstd[ch] = istd;
            let g = self.gamma.value.data()[ch];
            let bt = self.beta.value.data()[ch];
            for b in 0..n {
                let o = nchw(c, h, w, b, ch, 0, 0);
                for i in o..o + plane {
                    let xh = (xs[i] - mean) * istd;
                    xhat.data_mut()[i] = xh;
                    out.data_mut()[i] = xh * g + bt;
                }
            }
        }

        out.check_finite("batchnorm forward")?;
        self.saved = if save {
            Some(Saved { xhat, invstd, mode })
        } else {
            None
        };
        Ok(out)
    }

    pub fn backward(&mut self, dout: &Tensor) -> Result<Tensor> {
        let saved = self
            .saved
            .take()
            .ok_or_else(|| Error::State("batchnorm backward without saved forward context".into()))?;
        let (n, c, h, w) = match dout.shape() {
            [n, c, h, w] => (*n, *c, *h, *w),
            s => return Err(Error::Dimension(format!("batchnorm grad must be 4-d, got {s:?}"))),
        };
        let plane = h * w;
        let count = (n * plane) as f64;
        let ds = dout.data();
        let xh = saved.xhat.data();
        let mut dx = Tensor::zeros(dout.shape());

        for ch in 0..c {
            let g = self.gamma.value.data()[ch] as f64;
            let istd = saved.invstd[ch] as f64;
            let mut dsum = 0.0f64;
            let mut dxhsum = 0.0f64;
            for b in 0..n {
                let o = nchw(c, h, w, b, ch, 0, 0);
                for i in o..o + plane {
                    dsum += ds[i] as f64;
                    dxhsum += ds[i] as f64 * xh[i] as f64;
                }
            }
            self.gamma.grad.data_mut()[ch] += dxhsum as f32;
            self.beta.grad.data_mut()[ch] += dsum as f32;

            match saved.mode {
                Mode::Train => {
                    for b in 0..n {
                        let o = nchw(c, h, w, b, ch, 0, 0);
                        for i in o..o + plane {
                            let t = count * ds[i] as f64 - dsum - xh[i] as f64 * dxhsum;
                            dx.data_mut()[i] = (g * istd / count * t) as f32;
                        }
                    }
                }
                Mode::Eval => {
                    // running stats are constants: plain per-channel affine
                    for b in 0..n {
                        let o = nchw(c, h, w, b, ch, 0, 0);
                        for i in o..o + plane {
                            dx.data_mut()[i] = (g * istd * ds[i] as f64) as f32;
                        }
                    }
                }
            }
        }
        Ok(dx)
    }
}
