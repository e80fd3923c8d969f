//! Stage-1 half-brain presence model and the stage-2 multi-task model. Both
//! halves share one encoder; the right half is already mirrored into
//! canonical orientation by the midline split.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::nn::{kaiming_linear, Linear, LeakyRelu, Mode, Param};
use crate::nn::softmax_rows;
use crate::pipeline::Side;
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::encoder::{import_param, Encoder};
use super::{batch_halves, slice_average, slice_average_backward, ModelConfig, PreparedScan};

/// Half-brain encoder plus the stage-1 auxiliary presence head.
#[derive(Debug, Clone)]
pub struct Stage1Model {
    pub encoder: Encoder,
    pub head: Linear,
    pub cfg: ModelConfig,
}

impl Stage1Model {
    pub fn new(cfg: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        let encoder = Encoder::new(cfg.height, cfg.width / 2, &cfg.filters, rng)?;
        let f = encoder.feature_len();
        let head = Linear::new(kaiming_linear(f, 2, rng), Tensor::zeros(&[2]));
        Ok(Stage1Model {
            encoder,
            head,
            cfg: cfg.clone(),
        })
    }

    /// Forward a batch of half volumes: x is [M*k, 1, H, W/2] -> logits [M, 2].
    pub fn forward_halves(&mut self, x: &Tensor, mode: Mode, save: bool) -> Result<Tensor> {
        let feats = self.encoder.forward(x, mode, save)?;
        let pooled = slice_average(&feats, self.cfg.slices)?;
        self.head.forward(&pooled, save)
    }

    pub fn backward(&mut self, dlogits: &Tensor) -> Result<()> {
        let dpooled = self.head.backward(dlogits)?;
        let dfeats = slice_average_backward(
            &dpooled,
            self.cfg.slices,
            (self.encoder.out_c, self.encoder.out_h, self.encoder.out_w),
        )?;
        self.encoder.backward(&dfeats)?;
        Ok(())
    }

    pub fn params_mut(&mut self) -> Vec<(String, &mut Param)> {
        let mut out = self.encoder.params_mut("encoder");
        out.push(("head.w".into(), &mut self.head.w));
        out.push(("head.b".into(), &mut self.head.b));
        out
    }

    pub fn export_state(&self) -> BTreeMap<String, Tensor> {
        let mut map = BTreeMap::new();
        self.encoder.export_state("encoder", &mut map);
        map.insert("head.w".into(), self.head.w.value.clone());
        map.insert("head.b".into(), self.head.b.value.clone());
        map
    }

    pub fn import_state(&mut self, map: &BTreeMap<String, Tensor>) -> Result<()> {
        self.encoder.import_state("encoder", map)?;
        import_param(map, "head.w", &mut self.head.w)?;
        import_param(map, "head.b", &mut self.head.b)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Prediction {
    pub scan_id: String,
    pub p_lesion: f64,
    pub side_probs: [f64; 3],
    pub four_class: Side,
}

/// Decision rule: none unless p_lesion >= 0.5, otherwise argmax side.
pub fn four_class_decision(p_lesion: f64, side_probs: &[f64; 3]) -> Side {
    if p_lesion < 0.5 {
        return Side::None;
    }
    let mut best = 0usize;
    for i in 1..3 {
        if side_probs[i] > side_probs[best] {
            best = i;
        }
    }
    match best {
        0 => Side::Left,
        1 => Side::Right,
        _ => Side::Both,
    }
}

/// Shared encoder + two task heads (presence, side).
#[derive(Debug, Clone)]
pub struct MtlModel {
    pub encoder: Encoder,
    pub t1_fc: Linear,
    pub t1_act: LeakyRelu,
    pub t1_out: Linear,
    pub t2_fc: Linear,
    pub t2_act: LeakyRelu,
    pub t2_out: Linear,
    pub cfg: ModelConfig,
}

impl MtlModel {
    /// Build from a stage-1 encoder (the auxiliary head is discarded).
    pub fn from_stage1(stage1: Stage1Model, rng: &mut Rng) -> Result<Self> {
        let cfg = stage1.cfg.clone();
        let concat = 2 * stage1.encoder.feature_len();
        let fc = cfg.fc_nodes;
        Ok(MtlModel {
            encoder: stage1.encoder,
            t1_fc: Linear::new(kaiming_linear(concat, fc, rng), Tensor::zeros(&[fc])),
            t1_act: LeakyRelu::default(),
            t1_out: Linear::new(kaiming_linear(fc, 2, rng), Tensor::zeros(&[2])),
            t2_fc: Linear::new(kaiming_linear(concat, fc, rng), Tensor::zeros(&[fc])),
            t2_act: LeakyRelu::default(),
            t2_out: Linear::new(kaiming_linear(fc, 3, rng), Tensor::zeros(&[3])),
            cfg,
        })
    }

    pub fn new(cfg: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        let stage1 = Stage1Model::new(cfg, rng)?;
        Self::from_stage1(stage1, rng)
    }

    /// Encoder features for a batch of scans: concatenated [left, right]
    /// feature vectors, one row per scan.
    pub fn features(&mut self, x: &Tensor, mode: Mode, save: bool) -> Result<Tensor> {
        let feats = self.encoder.forward(x, mode, save)?;
        let pooled = slice_average(&feats, self.cfg.slices)?; // [2B, f]
        concat_pairs(&pooled)
    }

    /// Head forward from concatenated features: ([B,2], [B,3]) logits.
    pub fn forward_heads(&mut self, concat: &Tensor, save: bool) -> Result<(Tensor, Tensor)> {
        let h1 = self.t1_fc.forward(concat, save)?;
        let h1 = self.t1_act.forward(&h1, save);
        let l1 = self.t1_out.forward(&h1, save)?;
        let h2 = self.t2_fc.forward(concat, save)?;
        let h2 = self.t2_act.forward(&h2, save);
        let l2 = self.t2_out.forward(&h2, save)?;
        Ok((l1, l2))
    }

    /// Full forward over stacked halves [2B*k, 1, H, W/2].
    pub fn forward(&mut self, x: &Tensor, mode: Mode, save: bool) -> Result<(Tensor, Tensor)> {
        let concat = self.features(x, mode, save)?;
        self.forward_heads(&concat, save)
    }

    /// Backward through the heads only; returns d(concat features).
    pub fn backward_heads(&mut self, d1: &Tensor, d2: &Tensor) -> Result<Tensor> {
        let dh1 = self.t1_out.backward(d1)?;
        let dh1 = self.t1_act.backward(&dh1)?;
        let dc1 = self.t1_fc.backward(&dh1)?;
        let dh2 = self.t2_out.backward(d2)?;
        let dh2 = self.t2_act.backward(&dh2)?;
        let dc2 = self.t2_fc.backward(&dh2)?;
        let mut dc = dc1;
        for (a, b) in dc.data_mut().iter_mut().zip(dc2.data()) {
            *a += b;
        }
        Ok(dc)
    }

    /// Backward through heads and encoder; returns the gradient w.r.t. the
    /// stacked input halves.
    pub fn backward(&mut self, d1: &Tensor, d2: &Tensor) -> Result<Tensor> {
        let dc = self.backward_heads(d1, d2)?;
        let dpooled = split_pairs(&dc)?;
        let dfeats = slice_average_backward(
            &dpooled,
            self.cfg.slices,
            (self.encoder.out_c, self.encoder.out_h, self.encoder.out_w),
        )?;
        self.encoder.backward(&dfeats)
    }

    /// Probabilities for one prepared scan (eval mode).
    pub fn predict(&mut self, scan: &PreparedScan) -> Result<Prediction> {
        let x = batch_halves(&[scan], &self.cfg)?;
        let (l1, l2) = self.forward(&x, Mode::Eval, false)?;
        let p1 = softmax_rows(&l1)?;
        let p2 = softmax_rows(&l2)?;
        let p_lesion = p1.data()[1] as f64;
        let side_probs = [p2.data()[0] as f64, p2.data()[1] as f64, p2.data()[2] as f64];
        Ok(Prediction {
            scan_id: scan.scan_id.clone(),
            p_lesion,
            side_probs,
            four_class: four_class_decision(p_lesion, &side_probs),
        })
    }

    pub fn head_params_mut(&mut self) -> Vec<(String, &mut Param)> {
        vec![
            ("t1_fc.w".into(), &mut self.t1_fc.w),
            ("t1_fc.b".into(), &mut self.t1_fc.b),
            ("t1_out.w".into(), &mut self.t1_out.w),
            ("t1_out.b".into(), &mut self.t1_out.b),
            ("t2_fc.w".into(), &mut self.t2_fc.w),
            ("t2_fc.b".into(), &mut self.t2_fc.b),
            ("t2_out.w".into(), &mut self.t2_out.w),
            ("t2_out.b".into(), &mut self.t2_out.b),
        ]
    }

    pub fn params_mut(&mut self) -> Vec<(String, &mut Param)> {
        let mut out = self.encoder.params_mut("encoder");
        out.extend(vec![
            ("t1_fc.w".into(), &mut self.t1_fc.w),
            ("t1_fc.b".into(), &mut self.t1_fc.b),
            ("t1_out.w".into(), &mut self.t1_out.w),
            ("t1_out.b".into(), &mut self.t1_out.b),
            ("t2_fc.w".into(), &mut self.t2_fc.w),
            ("t2_fc.b".into(), &mut self.t2_fc.b),
            ("t2_out.w".into(), &mut self.t2_out.w),
            ("t2_out.b".into(), &mut self.t2_out.b),
        ]);
        out
    }

    pub fn export_state(&self) -> BTreeMap<String, Tensor> {
        let mut map = BTreeMap::new();
        self.encoder.export_state("encoder", &mut map);
        for (name, p) in [
            ("t1_fc.w", &self.t1_fc.w),
            ("t1_fc.b", &self.t1_fc.b),
            ("t1_out.w", &self.t1_out.w),
            ("t1_out.b", &self.t1_out.b),
            ("t2_fc.w", &self.t2_fc.w),
            ("t2_fc.b", &self.t2_fc.b),
            ("t2_out.w", &self.t2_out.w),
            ("t2_out.b", &self.t2_out.b),
        ] {
            map.insert(name.into(), p.value.clone());
        }
        map
    }

    pub fn import_state(&mut self, map: &BTreeMap<String, Tensor>) -> Result<()> {
        self.encoder.import_state("encoder", map)?;
        for (name, p) in self.head_params_mut() {
            import_param(map, &name, p)?;
        }
        Ok(())
    }
}

/// Interleaved [2B, f] rows -> [B, 2f] (left || right).
pub(crate) fn concat_pairs(pooled: &Tensor) -> Result<Tensor> {
    let (n, f) = match pooled.shape() {
        [n, f] => (*n, *f),
        s => return Err(Error::Dimension(format!("expected 2-d features, got {s:?}"))),
    };
    if n % 2 != 0 {
        return Err(Error::Dimension(format!("{n} half-feature rows are not pairs")));
    }
    let b = n / 2;
    let xs = pooled.data();
    let mut out = Tensor::zeros(&[b, 2 * f]);
    let os = out.data_mut();
    for i in 0..b {
        os[i * 2 * f..i * 2 * f + f].copy_from_slice(&xs[(2 * i) * f..(2 * i + 1) * f]);
        os[i * 2 * f + f..(i + 1) * 2 * f].copy_from_slice(&xs[(2 * i + 1) * f..(2 * i + 2) * f]);
    }
    Ok(out)
}

/// Inverse of [`concat_pairs`] for gradients.
pub(crate) fn split_pairs(dc: &Tensor) -> Result<Tensor> {
    let (b, f2) = match dc.shape() {
        [b, f2] => (*b, *f2),
        s => return Err(Error::Dimension(format!("expected 2-d grad, got {s:?}"))),
    };
    let f = f2 / 2;
    let xs = dc.data();
    let mut out = Tensor::zeros(&[2 * b, f]);
    let os = out.data_mut();
    for i in 0..b {
        os[(2 * i) * f..(2 * i + 1) * f].copy_from_slice(&xs[i * f2..i * f2 + f]);
        os[(2 * i + 1) * f..(2 * i + 2) * f].copy_from_slice(&xs[i * f2 + f..(i + 1) * f2]);
    }
    Ok(out)
}
