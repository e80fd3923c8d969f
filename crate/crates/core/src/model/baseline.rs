//! Full-brain single-task baseline: the same encoder stack over the whole
//! volume, one 4-class head (none / left / right / both).

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nn::{kaiming_linear, softmax_rows, LeakyRelu, Linear, Mode, Param};
use crate::pipeline::Side;
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::encoder::{import_param, Encoder};
use super::{batch_volumes, slice_average, slice_average_backward, ModelConfig, PreparedScan};

pub fn side4_index(side: Side) -> usize {
    match side {
        Side::None => 0,
        Side::Left => 1,
        Side::Right => 2,
        Side::Both => 3,
    }
}

pub fn side4_from_index(i: usize) -> Result<Side> {
    Ok(match i {
        0 => Side::None,
        1 => Side::Left,
        2 => Side::Right,
        3 => Side::Both,
        _ => return Err(Error::Dimension(format!("class index {i} out of range"))),
    })
}

#[derive(Debug, Clone)]
pub struct BaselineModel {
    pub encoder: Encoder,
    pub fc: Linear,
    pub act: LeakyRelu,
    pub out: Linear,
    pub cfg: ModelConfig,
}

impl BaselineModel {
    pub fn new(cfg: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        let encoder = Encoder::new(cfg.height, cfg.width, &cfg.filters, rng)?;
        let f = encoder.feature_len();
        let fc_nodes = cfg.fc_nodes;
        Ok(BaselineModel {
            encoder,
            fc: Linear::new(kaiming_linear(f, fc_nodes, rng), Tensor::zeros(&[fc_nodes])),
            act: LeakyRelu::default(),
            out: Linear::new(kaiming_linear(fc_nodes, 4, rng), Tensor::zeros(&[4])),
            cfg: cfg.clone(),
        })
    }

    /// Forward stacked full volumes [B*k, 1, H, W] -> 4-class logits [B, 4].
    pub fn forward(&mut self, x: &Tensor, mode: Mode, save: bool) -> Result<Tensor> {
        let feats = self.encoder.forward(x, mode, save)?;
        let pooled = slice_average(&feats, self.cfg.slices)?;
        let h = self.fc.forward(&pooled, save)?;
        let h = self.act.forward(&h, save);
        self.out.forward(&h, save)
    }

    pub fn backward(&mut self, dlogits: &Tensor) -> Result<()> {
        self.backward_input(dlogits).map(|_| ())
    }

    /// Backward pass that also returns the gradient w.r.t. the input slices.
    pub fn backward_input(&mut self, dlogits: &Tensor) -> Result<Tensor> {
        let dh = self.out.backward(dlogits)?;
        let dh = self.act.backward(&dh)?;
        let dpooled = self.fc.backward(&dh)?;
        let dfeats = slice_average_backward(
            &dpooled,
            self.cfg.slices,
            (self.encoder.out_c, self.encoder.out_h, self.encoder.out_w),
        )?;
        self.encoder.backward(&dfeats)
    }

    /// Predicted side for one prepared scan (eval mode).
    pub fn predict(&mut self, scan: &PreparedScan) -> Result<Side> {
        let x = batch_volumes(&[scan], &self.cfg)?;
        let logits = self.forward(&x, Mode::Eval, false)?;
        let probs = softmax_rows(&logits)?;
        let ps = probs.data();
        let mut best = 0usize;
        for i in 1..4 {
            if ps[i] > ps[best] {
                best = i;
            }
        }
        side4_from_index(best)
    }

    pub fn params_mut(&mut self) -> Vec<(String, &mut Param)> {
        let mut out = self.encoder.params_mut("encoder");
        out.push(("fc.w".into(), &mut self.fc.w));
        out.push(("fc.b".into(), &mut self.fc.b));
        out.push(("out.w".into(), &mut self.out.w));
        out.push(("out.b".into(), &mut self.out.b));
        out
    }

    pub fn export_state(&self) -> BTreeMap<String, Tensor> {
        let mut map = BTreeMap::new();
        self.encoder.export_state("encoder", &mut map);
        map.insert("fc.w".into(), self.fc.w.value.clone());
        map.insert("fc.b".into(), self.fc.b.value.clone());
        map.insert("out.w".into(), self.out.w.value.clone());
        map.insert("out.b".into(), self.out.b.value.clone());
        map
    }

    pub fn import_state(&mut self, map: &BTreeMap<String, Tensor>) -> Result<()> {
        self.encoder.import_state("encoder", map)?;
        import_param(map, "fc.w", &mut self.fc.w)?;
        import_param(map, "fc.b", &mut self.fc.b)?;
        import_param(map, "out.w", &mut self.out.w)?;
        import_param(map, "out.b", &mut self.out.b)
    }
}
