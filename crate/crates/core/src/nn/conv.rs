//! 2D convolution (cross-correlation) with a fast path for stride 1, the only
//! stride the models use. Inner loops run along contiguous output rows so the
//! compiler vectorizes them.

use crate::error::{Error, Result};
use crate::tensor::{nchw, Tensor};

use super::Param;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Default for ConvSpec {
    fn default() -> Self {
        ConvSpec {
            kernel: 3,
            stride: 1,
            padding: 1,
        }
    }
}

/// Output extent along one spatial dimension: floor((d + 2p - k)/s) + 1.
pub fn conv_output_dim(d: usize, spec: &ConvSpec) -> Result<usize> {
    let padded = d + 2 * spec.padding;
    if padded < spec.kernel || spec.stride == 0 {
        return Err(Error::Dimension(format!(
            "conv input dim {d} too small for kernel {} (padding {}, stride {})",
            spec.kernel, spec.padding, spec.stride
        )));
    }
    Ok((padded - spec.kernel) / spec.stride + 1)
}

fn dims4(t: &Tensor, what: &str) -> Result<[usize; 4]> {
    match t.shape() {
        [a, b, c, d] => Ok([*a, *b, *c, *d]),
        s => Err(Error::Dimension(format!("{what} must be 4-d, got {s:?}"))),
    }
}

pub fn conv2d_forward(x: &Tensor, w: &Tensor, b: &Tensor, spec: &ConvSpec) -> Result<Tensor> {
    let [n_batch, c_in, h, wd] = dims4(x, "conv input")?;
    let [f_out, wc, kh, kw] = dims4(w, "conv weight")?;
    if wc != c_in || kh != spec.kernel || kw != spec.kernel {
        return Err(Error::Dimension(format!(
            "conv weight {:?} does not match input channels {c_in} / kernel {}",
            w.shape(),
            spec.kernel
        )));
    }
    if b.shape() != [f_out] {
        return Err(Error::Dimension(format!(
            "conv bias {:?} does not match {f_out} filters",
            b.shape()
        )));
    }
    let ho = conv_output_dim(h, spec)?;
    let wo = conv_output_dim(wd, spec)?;

    let mut out = Tensor::zeros(&[n_batch, f_out, ho, wo]);
    let (k, s, p) = (spec.kernel, spec.stride, spec.padding);
    let xs = x.data();
    let ws = w.data();
    let bs = b.data();
    let os = out.data_mut();

    if s == 1 {
        for n in 0..n_batch {
            for f in 0..f_out {
                let plane = nchw(f_out, ho, wo, n, f, 0, 0);
                os[plane..plane + ho * wo].fill(bs[f]);
                for c in 0..c_in {
                    for ki in 0..k {
                        for kj in 0..k {
                            let wv = ws[((f * c_in + c) * k + ki) * k + kj];
                            if wv == 0.0 {
                                continue;
                            }
                            // output row oh reads input row oh + ki - p
                            let oh_lo = p.saturating_sub(ki);
                            let oh_hi = (h + p - ki).min(ho);
                            let ow_lo = p.saturating_sub(kj);
                            let ow_hi = (wd + p - kj).min(wo);
                            if ow_lo >= ow_hi {
                                continue;
                            }
                            for oh in oh_lo..oh_hi {
                                let ih = oh + ki - p;
                                let xrow = nchw(c_in, h, wd, n, c, ih, ow_lo + kj - p);
                                let orow = plane + oh * wo + ow_lo;
                                let len = ow_hi - ow_lo;
                                let (xr, or) = (&xs[xrow..xrow + len], &mut os[orow..orow + len]);
                                for i in 0..len {
                                    or[i] += xr[i] * wv;
                                }
                            }
                        }
                    }
                }
            }
        }
    } else {
        for n in 0..n_batch {
            for f in 0..f_out {
                for oh in 0..ho {
                    for ow in 0..wo {
                        let mut acc = bs[f];
                        for c in 0..c_in {
                            for ki in 0..k {
                                let ih = oh * s + ki;
                                if ih < p || ih - p >= h {
                                    continue;
                                }
                                for kj in 0..k {
                                    let iw = ow * s + kj;
                                    if iw < p || iw - p >= wd {
                                        continue;
                                    }
                                    acc += xs[nchw(c_in, h, wd, n, c, ih - p, iw - p)]
                                        * ws[((f * c_in + c) * k + ki) * k + kj];
                                }
                            }
                        }
                        os[nchw(f_out, ho, wo, n, f, oh, ow)] = acc;
                    }
                }
            }
        }
    }

    out.check_finite("conv2d forward")?;
    Ok(out)
}

/// Gradients for input, weight, and bias given the upstream gradient and the
/// saved forward inputs.
pub fn conv2d_backward(
    dout: &Tensor,
    x: &Tensor,
    w: &Tensor,
    spec: &ConvSpec,
) -> Result<(Tensor, Tensor, Tensor)> {
    let [n_batch, c_in, h, wd] = dims4(x, "conv input")?;
    let [f_out, _, k, _] = dims4(w, "conv weight")?;
    let [dn, df, ho, wo] = dims4(dout, "conv upstream grad")?;
    if dn != n_batch || df != f_out || ho != conv_output_dim(h, spec)? || wo != conv_output_dim(wd, spec)? {
        return Err(Error::Dimension(format!(
            "upstream grad {:?} does not match conv output",
            dout.shape()
        )));
    }

    let mut dx = Tensor::zeros(x.shape());
    let mut dw = Tensor::zeros(w.shape());
    let mut db = Tensor::zeros(&[f_out]);
    let (s, p) = (spec.stride, spec.padding);
    let xs = x.data();
    let ws = w.data();
    let dos = dout.data();
    let dxs = dx.data_mut();
    let dws = dw.data_mut();
    let dbs = db.data_mut();

    if s == 1 {
        for n in 0..n_batch {
            for f in 0..f_out {
                let plane = nchw(f_out, ho, wo, n, f, 0, 0);
                let mut bsum = 0.0f32;
                for v in &dos[plane..plane + ho * wo] {
                    bsum += v;
                }
                dbs[f] += bsum;
                for c in 0..c_in {
                    for ki in 0..k {
                        for kj in 0..k {
                            let widx = ((f * c_in + c) * k + ki) * k + kj;
                            let wv = ws[widx];
                            let oh_lo = p.saturating_sub(ki);
                            let oh_hi = (h + p - ki).min(ho);
                            let ow_lo = p.saturating_sub(kj);
                            let ow_hi = (wd + p - kj).min(wo);
                            if ow_lo >= ow_hi {
                                continue;
                            }
                            let len = ow_hi - ow_lo;
                            let mut wacc = 0.0f32;
                            for oh in oh_lo..oh_hi {
                                let ih = oh + ki - p;
                                let xrow = nchw(c_in, h, wd, n, c, ih, ow_lo + kj - p);
                                let orow = plane + oh * wo + ow_lo;
                                let dr = &dos[orow..orow + len];
                                let xr = &xs[xrow..xrow + len];
                                let dxr = &mut dxs[xrow..xrow + len];
                                for i in 0..len {
                                    dxr[i] += dr[i] * wv;
                                    wacc += dr[i] * xr[i];
                                }
                            }
                            dws[widx] += wacc;
                        }
                    }
                }
            }
        }
    } else {
        for n in 0..n_batch {
            for f in 0..f_out {
                for oh in 0..ho {
                    for ow in 0..wo {
                        let g = dos[nchw(f_out, ho, wo, n, f, oh, ow)];
                        dbs[f] += g;
                        for c in 0..c_in {
                            for ki in 0..k {
                                let ih = oh * s + ki;
                                if ih < p || ih - p >= h {
                                    continue;
                                }
                                for kj in 0..k {
                                    let iw = ow * s + kj;
                                    if iw < p || iw - p >= wd {
                                        continue;
                                    }
                                    let xidx = nchw(c_in, h, wd, n, c, ih - p, iw - p);
                                    let widx = ((f * c_in + c) * k + ki) * k + kj;
                                    dxs[xidx] += g * ws[widx];
                                    dws[widx] += g * xs[xidx];
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    Ok((dx, dw, db))
}

/// Convolution layer owning weights, bias, and the saved forward input.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub w: Param,
    pub b: Param,
    pub spec: ConvSpec,
    saved_input: Option<Tensor>,
}

impl Conv2d {
    pub fn new(w: Tensor, b: Tensor, spec: ConvSpec) -> Self {
        Conv2d {
            w: Param::new(w),
            b: Param::new(b),
            spec,
            saved_input: None,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.w.value.shape()[0]
    }

    pub fn forward(&mut self, x: &Tensor, save: bool) -> Result<Tensor> {
        let out = conv2d_forward(x, &self.w.value, &self.b.value, &self.spec)?;
        self.saved_input = if save { Some(x.clone()) } else { None };
        Ok(out)
    }

    pub fn backward(&mut self, dout: &Tensor) -> Result<Tensor> {
        let x = self
            .saved_input
            .take()
            .ok_or_else(|| Error::State("conv2d backward without saved forward context".into()))?;
        let (dx, dw, db) = conv2d_backward(dout, &x, &self.w.value, &self.spec)?;
        for (g, d) in self.w.grad.data_mut().iter_mut().zip(dw.data()) {
            *g += d;
        }
        for (g, d) in self.b.grad.data_mut().iter_mut().zip(db.data()) {
            *g += d;
        }
        Ok(dx)
    }
}
