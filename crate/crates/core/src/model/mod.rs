//! The paper-style architecture and training protocol: shared half-brain
//! encoder, concatenated features, two task heads, two-stage training, and
//! the full-brain single-task baseline.

mod baseline;
mod encoder;
mod mtl;
mod train;

pub use baseline::{side4_from_index, side4_index, BaselineModel};
pub use encoder::{ConvBlock, Encoder, DEFAULT_FILTERS};
pub use mtl::{four_class_decision, MtlModel, Prediction, Stage1Model};
pub use train::{
    baseline_train, evaluate_baseline, evaluate_mtl, layer_sweep, stage1_train, stage2_train,
    EpochLog, SweepPoint, TrainPlan,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{self, HalfPair, PipelineConfig, ScanLabel, Timepoint, Volume};
use crate::tensor::Tensor;

/// Architecture hyperparameters shared by every model variant.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub filters: Vec<usize>,
    pub fc_nodes: usize,
    pub slices: usize,
    pub height: usize,
    pub width: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            filters: DEFAULT_FILTERS.to_vec(),
            fc_nodes: 128,
            slices: 11,
            height: 64,
            width: 64,
        }
    }
}

/// A standardized scan ready for training: normalized full volume plus the
/// canonical half pair.
#[derive(Debug, Clone)]
pub struct PreparedScan {
    pub scan_id: String,
    pub patient_id: String,
    pub timepoint: Timepoint,
    pub label: ScanLabel,
    pub volume: Volume,
    pub pair: HalfPair,
}

pub fn prepare_scan(volume: &Volume, label: &ScanLabel, cfg: &PipelineConfig) -> Result<PreparedScan> {
    label.validate()?;
    let std = pipeline::standardize(volume, cfg)?;
    let pair = pipeline::split_midline(&std)?;
    Ok(PreparedScan {
        scan_id: std.scan_id.clone(),
        patient_id: std.patient_id.clone(),
        timepoint: std.timepoint,
        label: label.clone(),
        volume: std,
        pair,
    })
}

/// Stack scans' halves into one NCHW tensor:
/// rows [2i] = left half of scan i, rows [2i+1] = right half, each expanded
/// into `slices` consecutive single-channel images.
pub(crate) fn batch_halves(scans: &[&PreparedScan], cfg: &ModelConfig) -> Result<Tensor> {
    let k = cfg.slices;
    let (h, w2) = (cfg.height, cfg.width / 2);
    let plane = h * w2;
    let mut data = Vec::with_capacity(scans.len() * 2 * k * plane);
    for s in scans {
        if s.pair.slices != k || s.pair.height != h || s.pair.half_width != w2 {
            return Err(Error::Dimension(format!(
                "scan {} has shape {}x{}x{}, model expects {}x{}x{}",
                s.scan_id,
                s.pair.slices,
                s.pair.height,
                s.pair.half_width,
                k,
                h,
                w2
            )));
        }
        data.extend_from_slice(&s.pair.left);
        data.extend_from_slice(&s.pair.right);
    }
    Tensor::from_vec(&[scans.len() * 2 * k, 1, h, w2], data)
}

/// Stack full volumes into one NCHW tensor of `slices` images per scan.
pub(crate) fn batch_volumes(scans: &[&PreparedScan], cfg: &ModelConfig) -> Result<Tensor> {
    let k = cfg.slices;
    let (h, w) = (cfg.height, cfg.width);
    let mut data = Vec::with_capacity(scans.len() * k * h * w);
    for s in scans {
        if s.volume.slices != k || s.volume.height != h || s.volume.width != w {
            return Err(Error::Dimension(format!(
                "scan {} has shape {}x{}x{}, model expects {}x{}x{}",
                s.scan_id, s.volume.slices, s.volume.height, s.volume.width, k, h, w
            )));
        }
        data.extend_from_slice(&s.volume.voxels);
    }
    Tensor::from_vec(&[scans.len() * k, 1, h, w], data)
}

/// Average encoder feature maps across the slice axis:
/// [M*k, C, h, w] -> [M, C*h*w], 64-bit accumulation.
pub(crate) fn slice_average(feats: &Tensor, k: usize) -> Result<Tensor> {
    let (n, c, h, w) = match feats.shape() {
        [n, c, h, w] => (*n, *c, *h, *w),
        s => return Err(Error::Dimension(format!("slice_average expects 4-d, got {s:?}"))),
    };
    if n % k != 0 {
        return Err(Error::Dimension(format!("{n} feature rows not divisible by {k} slices")));
    }
    let m = n / k;
    let f = c * h * w;
    let xs = feats.data();
    let mut out = Tensor::zeros(&[m, f]);
    let os = out.data_mut();
    for i in 0..m {
        for j in 0..f {
            let mut acc = 0.0f64;
            for s in 0..k {
                acc += xs[(i * k + s) * f + j] as f64;
            }
            os[i * f + j] = (acc / k as f64) as f32;
        }
    }
    Ok(out)
}

pub(crate) fn slice_average_backward(
    dout: &Tensor,
    k: usize,
    feat_shape: (usize, usize, usize),
) -> Result<Tensor> {
    let (m, f) = match dout.shape() {
        [m, f] => (*m, *f),
        s => return Err(Error::Dimension(format!("slice_average grad expects 2-d, got {s:?}"))),
    };
    let (c, h, w) = feat_shape;
    if f != c * h * w {
        return Err(Error::Dimension(format!(
            "slice_average grad dim {f} does not match feature shape {c}x{h}x{w}"
        )));
    }
    let ds = dout.data();
    let mut dx = Tensor::zeros(&[m * k, c, h, w]);
    let dxs = dx.data_mut();
    let inv = 1.0 / k as f32;
    for i in 0..m {
        for s in 0..k {
            for j in 0..f {
                dxs[(i * k + s) * f + j] = ds[i * f + j] * inv;
            }
        }
    }
    Ok(dx)
}
