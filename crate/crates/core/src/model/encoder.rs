//! The 7-block convolutional encoder: conv 3x3 s1 p1 -> batchnorm -> leaky
//! ReLU -> 2x2 average pool, filter counts [16, 32, 48, 64, 64, 64, 64].
//! Pooling halves each spatial dimension only while it is still >= 2, so the
//! full filter stack applies even when desk-scale inputs reach 1x1 early.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nn::{AvgPool2d, BatchNorm2d, Conv2d, ConvSpec, LeakyRelu, Mode, Param};
use crate::nn::{kaiming_conv};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const DEFAULT_FILTERS: [usize; 7] = [16, 32, 48, 64, 64, 64, 64];

#[derive(Debug, Clone)]
pub struct ConvBlock {
    pub conv: Conv2d,
    pub bn: BatchNorm2d,
    pub act: LeakyRelu,
    pub pool: Option<AvgPool2d>,
}

impl ConvBlock {
    fn forward(&mut self, x: &Tensor, mode: Mode, save: bool) -> Result<Tensor> {
        let x = self.conv.forward(x, save)?;
        let x = self.bn.forward(&x, mode, save)?;
        let x = self.act.forward(&x, save);
        match &mut self.pool {
            Some(p) => p.forward(&x, save),
            None => Ok(x),
        }
    }

    fn backward(&mut self, dout: &Tensor) -> Result<Tensor> {
        let d = match &mut self.pool {
            Some(p) => p.backward(dout)?,
            None => dout.clone(),
        };
        let d = self.act.backward(&d)?;
        let d = self.bn.backward(&d)?;
        self.conv.backward(&d)
    }
}

#[derive(Debug, Clone)]
pub struct Encoder {
    pub blocks: Vec<ConvBlock>,
    pub in_h: usize,
    pub in_w: usize,
    pub out_c: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl Encoder {
    pub fn new(in_h: usize, in_w: usize, filters: &[usize], rng: &mut Rng) -> Result<Self> {
        if filters.is_empty() {
            return Err(Error::Config("encoder needs at least one conv block".into()));
        }
        let mut blocks = Vec::with_capacity(filters.len());
        let (mut h, mut w) = (in_h, in_w);
        let mut c_in = 1usize;
        for &f in filters {
            let conv = Conv2d::new(
                kaiming_conv(f, c_in, 3, rng),
                Tensor::zeros(&[f]),
                ConvSpec::default(),
            );
            let (kh, kw) = (if h >= 2 { 2 } else { 1 }, if w >= 2 { 2 } else { 1 });
            let pool = (kh > 1 || kw > 1).then(|| AvgPool2d::new(kh, kw));
            h /= kh;
            w /= kw;
            blocks.push(ConvBlock {
                conv,
                bn: BatchNorm2d::new(f),
                act: LeakyRelu::default(),
                pool,
            });
            c_in = f;
        }
        Ok(Encoder {
            blocks,
            in_h,
            in_w,
            out_c: c_in,
            out_h: h,
            out_w: w,
        })
    }

    pub fn feature_len(&self) -> usize {
        self.out_c * self.out_h * self.out_w
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode, save: bool) -> Result<Tensor> {
        match x.shape() {
            [_, 1, h, w] if *h == self.in_h && *w == self.in_w => {}
            s => {
                return Err(Error::Dimension(format!(
                    "encoder expects [N, 1, {}, {}], got {s:?}",
                    self.in_h, self.in_w
                )))
            }
        }
        let mut cur = x.clone();
        for b in &mut self.blocks {
            cur = b.forward(&cur, mode, save)?;
        }
        Ok(cur)
    }

    pub fn backward(&mut self, dout: &Tensor) -> Result<Tensor> {
        let mut d = dout.clone();
        for b in self.blocks.iter_mut().rev() {
            d = b.backward(&d)?;
        }
        Ok(d)
    }

    /// Freeze or unfreeze running-stat tracking (stage-2 phase A).
    pub fn set_track_running_stats(&mut self, track: bool) {
        for b in &mut self.blocks {
            b.bn.track_running_stats = track;
        }
    }

    pub fn params_mut(&mut self, prefix: &str) -> Vec<(String, &mut Param)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter_mut().enumerate() {
            out.push((format!("{prefix}.b{i}.conv.w"), &mut b.conv.w));
            out.push((format!("{prefix}.b{i}.conv.b"), &mut b.conv.b));
            out.push((format!("{prefix}.b{i}.bn.gamma"), &mut b.bn.gamma));
            out.push((format!("{prefix}.b{i}.bn.beta"), &mut b.bn.beta));
        }
        out
    }

    pub fn export_state(&self, prefix: &str, map: &mut BTreeMap<String, Tensor>) {
        for (i, b) in self.blocks.iter().enumerate() {
            map.insert(format!("{prefix}.b{i}.conv.w"), b.conv.w.value.clone());
            map.insert(format!("{prefix}.b{i}.conv.b"), b.conv.b.value.clone());
            map.insert(format!("{prefix}.b{i}.bn.gamma"), b.bn.gamma.value.clone());
            map.insert(format!("{prefix}.b{i}.bn.beta"), b.bn.beta.value.clone());
            map.insert(
                format!("{prefix}.b{i}.bn.running_mean"),
                Tensor::from_vec(&[b.bn.running_mean.len()], b.bn.running_mean.clone())
                    .expect("vector shape"),
            );
            map.insert(
                format!("{prefix}.b{i}.bn.running_var"),
                Tensor::from_vec(&[b.bn.running_var.len()], b.bn.running_var.clone())
                    .expect("vector shape"),
            );
        }
    }

    pub fn import_state(&mut self, prefix: &str, map: &BTreeMap<String, Tensor>) -> Result<()> {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            import_param(map, &format!("{prefix}.b{i}.conv.w"), &mut b.conv.w)?;
            import_param(map, &format!("{prefix}.b{i}.conv.b"), &mut b.conv.b)?;
            import_param(map, &format!("{prefix}.b{i}.bn.gamma"), &mut b.bn.gamma)?;
            import_param(map, &format!("{prefix}.b{i}.bn.beta"), &mut b.bn.beta)?;
            b.bn.running_mean =
                import_vec(map, &format!("{prefix}.b{i}.bn.running_mean"), b.bn.channels())?;
            b.bn.running_var =
                import_vec(map, &format!("{prefix}.b{i}.bn.running_var"), b.bn.channels())?;
        }
        Ok(())
    }
}

pub(crate) fn import_param(
    map: &BTreeMap<String, Tensor>,
    name: &str,
    param: &mut Param,
) -> Result<()> {
    let t = map
        .get(name)
        .ok_or_else(|| Error::Format(format!("checkpoint missing parameter {name}")))?;
    if t.shape() != param.value.shape() {
        return Err(Error::Dimension(format!(
            "checkpoint parameter {name} has shape {:?}, model expects {:?}",
            t.shape(),
            param.value.shape()
        )));
    }
    param.value = t.clone();
    param.zero_grad();
    Ok(())
}

pub(crate) fn import_vec(
    map: &BTreeMap<String, Tensor>,
    name: &str,
    len: usize,
) -> Result<Vec<f32>> {
    let t = map
        .get(name)
        .ok_or_else(|| Error::Format(format!("checkpoint missing tensor {name}")))?;
    if t.len() != len {
        return Err(Error::Dimension(format!(
            "checkpoint tensor {name} has {} values, expected {len}",
            t.len()
        )));
    }
    Ok(t.data().to_vec())
}
