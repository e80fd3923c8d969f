//! Small per-slice 2D autoencoder used for latent-shift counterfactuals.
//! Encoder: 4x (conv 3x3 -> leaky ReLU -> 2x2 average pool). Decoder: 4x
//! (nearest 2x upsample -> conv 3x3), leaky ReLU between blocks, linear
//! output. Trained with MSE on standardized slices plus their mirrors, so
//! reconstructions are statistically mirror-symmetric.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::PreparedScan;
use crate::nn::{kaiming_conv, mse_loss, Adam, AdamConfig, Conv2d, ConvSpec, CosineSchedule};
use crate::nn::{AvgPool2d, LeakyRelu, Param, Upsample2x};
use crate::rng::{self, Rng};
use crate::tensor::Tensor;

pub const AE_FILTERS: [usize; 4] = [16, 32, 32, 32];

#[derive(Debug, Clone)]
struct EncBlock {
    conv: Conv2d,
    act: LeakyRelu,
    pool: AvgPool2d,
}

#[derive(Debug, Clone)]
struct DecBlock {
    up: Upsample2x,
    conv: Conv2d,
    /// None on the output block (linear reconstruction).
    act: Option<LeakyRelu>,
}

#[derive(Debug, Clone)]
pub struct Autoencoder {
    enc: Vec<EncBlock>,
    dec: Vec<DecBlock>,
    pub in_h: usize,
    pub in_w: usize,
    pub latent_c: usize,
    pub latent_h: usize,
    pub latent_w: usize,
}

impl Autoencoder {
    pub fn new(in_h: usize, in_w: usize, rng: &mut Rng) -> Result<Self> {
        let depth = AE_FILTERS.len();
        if in_h % (1 << depth) != 0 || in_w % (1 << depth) != 0 {
            return Err(Error::Config(format!(
                "autoencoder input {in_h}x{in_w} must be divisible by {}",
                1 << depth
            )));
        }
        let mut enc = Vec::with_capacity(depth);
        let mut c_in = 1usize;
        for &f in &AE_FILTERS {
            enc.push(EncBlock {
                conv: Conv2d::new(kaiming_conv(f, c_in, 3, rng), Tensor::zeros(&[f]), ConvSpec::default()),
                act: LeakyRelu::default(),
                pool: AvgPool2d::new(2, 2),
            });
            c_in = f;
        }
        let mut dec = Vec::with_capacity(depth);
        let dec_filters = [AE_FILTERS[2], AE_FILTERS[1], AE_FILTERS[0], 1];
        for (i, &f) in dec_filters.iter().enumerate() {
            let last = i + 1 == dec_filters.len();
            dec.push(DecBlock {
                up: Upsample2x::new(),
                conv: Conv2d::new(kaiming_conv(f, c_in, 3, rng), Tensor::zeros(&[f]), ConvSpec::default()),
                act: (!last).then(LeakyRelu::default),
            });
            c_in = f;
        }
        Ok(Autoencoder {
            enc,
            dec,
            in_h,
            in_w,
            latent_c: *AE_FILTERS.last().expect("non-empty"),
            latent_h: in_h >> depth,
            latent_w: in_w >> depth,
        })
    }

    /// [N, 1, H, W] -> latent [N, C, H/16, W/16].
    pub fn encode(&mut self, x: &Tensor, save: bool) -> Result<Tensor> {
        match x.shape() {
            [_, 1, h, w] if *h == self.in_h && *w == self.in_w => {}
            s => {
                return Err(Error::Dimension(format!(
                    "autoencoder expects [N, 1, {}, {}], got {s:?}",
                    self.in_h, self.in_w
                )))
            }
        }
        let mut cur = x.clone();
        for b in &mut self.enc {
            cur = b.conv.forward(&cur, save)?;
            cur = b.act.forward(&cur, save);
            cur = b.pool.forward(&cur, save)?;
        }
        Ok(cur)
    }

    pub fn decode(&mut self, z: &Tensor, save: bool) -> Result<Tensor> {
        match z.shape() {
            [_, c, h, w] if *c == self.latent_c && *h == self.latent_h && *w == self.latent_w => {}
            s => {
                return Err(Error::Dimension(format!(
                    "latent must be [N, {}, {}, {}], got {s:?}",
                    self.latent_c, self.latent_h, self.latent_w
                )))
            }
        }
        let mut cur = z.clone();
        for b in &mut self.dec {
            cur = b.up.forward(&cur, save)?;
            cur = b.conv.forward(&cur, save)?;
            if let Some(a) = &mut b.act {
                cur = a.forward(&cur, save);
            }
        }
        Ok(cur)
    }

    /// Gradient of a scalar loss w.r.t. the latent, given d(decoded output).
    /// Requires a prior `decode(.., save = true)`.
    pub fn decode_backward(&mut self, dout: &Tensor) -> Result<Tensor> {
        let mut d = dout.clone();
        for b in self.dec.iter_mut().rev() {
            if let Some(a) = &mut b.act {
                d = a.backward(&d)?;
            }
            d = b.conv.backward(&d)?;
            d = b.up.backward(&d)?;
        }
        Ok(d)
    }

    /// Full reconstruction backward (training).
    fn backward(&mut self, drecon: &Tensor) -> Result<Tensor> {
        let mut d = self.decode_backward(drecon)?;
        for b in self.enc.iter_mut().rev() {
            d = b.pool.backward(&d)?;
            d = b.act.backward(&d)?;
            d = b.conv.backward(&d)?;
        }
        Ok(d)
    }

    pub fn params_mut(&mut self) -> Vec<(String, &mut Param)> {
        let mut out = Vec::new();
        for (i, b) in self.enc.iter_mut().enumerate() {
            out.push((format!("enc{i}.w"), &mut b.conv.w));
            out.push((format!("enc{i}.b"), &mut b.conv.b));
        }
        for (i, b) in self.dec.iter_mut().enumerate() {
            out.push((format!("dec{i}.w"), &mut b.conv.w));
            out.push((format!("dec{i}.b"), &mut b.conv.b));
        }
        out
    }

    pub fn export_state(&self) -> BTreeMap<String, Tensor> {
        let mut map = BTreeMap::new();
        for (i, b) in self.enc.iter().enumerate() {
            map.insert(format!("enc{i}.w"), b.conv.w.value.clone());
            map.insert(format!("enc{i}.b"), b.conv.b.value.clone());
        }
        for (i, b) in self.dec.iter().enumerate() {
            map.insert(format!("dec{i}.w"), b.conv.w.value.clone());
            map.insert(format!("dec{i}.b"), b.conv.b.value.clone());
        }
        map
    }

    pub fn import_state(&mut self, map: &BTreeMap<String, Tensor>) -> Result<()> {
        for (name, p) in self.params_mut() {
            let t = map
                .get(&name)
                .ok_or_else(|| Error::Format(format!("checkpoint missing parameter {name}")))?;
            if t.shape() != p.value.shape() {
                return Err(Error::Dimension(format!(
                    "checkpoint parameter {name} has shape {:?}, model expects {:?}",
                    t.shape(),
                    p.value.shape()
                )));
            }
            p.value = t.clone();
            p.zero_grad();
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AeEpochLog {
    pub epoch: usize,
    pub lr: f32,
    pub train_mse: f64,
}

/// Train the autoencoder on the given scans' slices plus their mirror images.
pub fn ae_train(
    scans: &[PreparedScan],
    idx: &[usize],
    epochs: usize,
    batch_slices: usize,
    lr: f32,
    seed: u64,
) -> Result<(Autoencoder, Vec<AeEpochLog>)> {
    if idx.is_empty() {
        return Err(Error::Config("autoencoder training split is empty".into()));
    }
    if batch_slices == 0 {
        return Err(Error::Config("batch_slices must be >= 1".into()));
    }
    let first = scans
        .get(idx[0])
        .ok_or_else(|| Error::Config(format!("scan index {} out of range", idx[0])))?;
    let (h, w) = (first.volume.height, first.volume.width);
    let plane = h * w;

    // slice corpus: every slice and its sagittal mirror
    let mut slices: Vec<Vec<f32>> = Vec::new();
    for &i in idx {
        let s = scans
            .get(i)
            .ok_or_else(|| Error::Config(format!("scan index {i} out of range")))?;
        if s.volume.height != h || s.volume.width != w {
            return Err(Error::Dimension(format!(
                "scan {} in-plane shape differs from {h}x{w}",
                s.scan_id
            )));
        }
        for k in 0..s.volume.slices {
            let sl = &s.volume.voxels[k * plane..(k + 1) * plane];
            slices.push(sl.to_vec());
            let mut mir = vec![0.0f32; plane];
            for r in 0..h {
                for c in 0..w {
                    mir[r * w + c] = sl[r * w + (w - 1 - c)];
                }
            }
            slices.push(mir);
        }
    }

    let mut rng = rng::stream(seed, "ae_init", 0);
    let mut ae = Autoencoder::new(h, w, &mut rng)?;
    let mut adam = Adam::new(AdamConfig::default());
    let sched = CosineSchedule::new(lr, epochs);
    let mut logs = Vec::new();
    for epoch in 0..epochs {
        let elr = sched.lr(epoch);
        let mut order: Vec<usize> = (0..slices.len()).collect();
        order.shuffle(&mut rng::stream(seed, "ae_shuffle", epoch as u64));
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(batch_slices) {
            let mut data = Vec::with_capacity(chunk.len() * plane);
            for &i in chunk {
                data.extend_from_slice(&slices[i]);
            }
            let x = Tensor::from_vec(&[chunk.len(), 1, h, w], data)?;
            let z = ae.encode(&x, true)?;
            let recon = ae.decode(&z, true)?;
            let (loss, drecon) = mse_loss(&recon, &x)?;
            for (_, p) in ae.params_mut() {
                p.zero_grad();
            }
            ae.backward(&drecon)?;
            adam.step(elr, &mut ae.params_mut())?;
            loss_sum += loss;
            batches += 1;
        }
        logs.push(AeEpochLog {
            epoch,
            lr: elr,
            train_mse: loss_sum / batches.max(1) as f64,
        });
    }
    Ok((ae, logs))
}
