//! Latent-shift counterfactuals: walk the autoencoder latent against the
//! classifier's lesion-probability gradient until the lesion disappears, then
//! read the image-space difference as an attribution map.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{BaselineModel, MtlModel, PreparedScan};
use crate::nn::{softmax_rows, Mode};
use crate::pipeline::{split_midline, Volume};
use crate::tensor::Tensor;

use super::autoencoder::Autoencoder;

/// Anything that turns a full volume tensor [k, 1, H, W] into a lesion
/// probability and can differentiate it back to the voxels.
pub trait LesionClassifier {
    fn p_lesion(&mut self, x: &Tensor, template: &Volume) -> Result<f64>;
    /// (p, dp/dx) with x the full-volume tensor.
    fn p_lesion_grad(&mut self, x: &Tensor, template: &Volume) -> Result<(f64, Tensor)>;
}

/// Interleave a volume's canonical halves into the [2k, 1, H, W/2] layout.
fn halves_tensor(v: &Volume) -> Result<Tensor> {
    let pair = split_midline(v)?;
    let mut data = Vec::with_capacity(pair.left.len() * 2);
    data.extend_from_slice(&pair.left);
    data.extend_from_slice(&pair.right);
    Tensor::from_vec(&[2 * pair.slices, 1, pair.height, pair.half_width], data)
}

/// Undo the midline split on a gradient over stacked halves.
fn unsplit_grad(dhalves: &Tensor, slices: usize, height: usize, width: usize) -> Result<Tensor> {
    let hw = width / 2;
    match dhalves.shape() {
        [n, 1, h, w] if *n == 2 * slices && *h == height && *w == hw => {}
        s => {
            return Err(Error::Dimension(format!(
                "half gradient shape {s:?} does not match {slices}x{height}x{width}"
            )))
        }
    }
    let ds = dhalves.data();
    let half_all = slices * height * hw;
    let mut out = Tensor::zeros(&[slices, 1, height, width]);
    let os = out.data_mut();
    for s in 0..slices {
        for h in 0..height {
            for j in 0..hw {
                let o = (s * height + h) * hw + j;
                os[(s * height + h) * width + (hw - 1 - j)] = ds[o];
                os[(s * height + h) * width + (hw + j)] = ds[half_all + o];
            }
        }
    }
    Ok(out)
}

fn volume_from_tensor(t: &Tensor, template: &Volume) -> Result<Volume> {
    Volume::new(
        template.slices,
        template.height,
        template.width,
        t.data().to_vec(),
        template.patient_id.clone(),
        template.scan_id.clone(),
        template.timepoint,
    )
}

impl LesionClassifier for MtlModel {
    fn p_lesion(&mut self, x: &Tensor, template: &Volume) -> Result<f64> {
        let halves = halves_tensor(&volume_from_tensor(x, template)?)?;
        let (l1, _) = self.forward(&halves, Mode::Eval, false)?;
        Ok(softmax_rows(&l1)?.data()[1] as f64)
    }

    fn p_lesion_grad(&mut self, x: &Tensor, template: &Volume) -> Result<(f64, Tensor)> {
        let vol = volume_from_tensor(x, template)?;
        let halves = halves_tensor(&vol)?;
        let (l1, _) = self.forward(&halves, Mode::Eval, true)?;
        let p = softmax_rows(&l1)?.data()[1] as f64;
        // 2-class softmax: dp/dl = p(1-p) * [-1, +1]
        let g = (p * (1.0 - p)) as f32;
        let d1 = Tensor::from_vec(&[1, 2], vec![-g, g])?;
        let d2 = Tensor::zeros(&[1, 3]);
        let dhalves = self.backward(&d1, &d2)?;
        for (_, prm) in self.params_mut() {
            prm.zero_grad();
        }
        let dx = unsplit_grad(&dhalves, template.slices, template.height, template.width)?;
        Ok((p, dx))
    }
}

impl LesionClassifier for BaselineModel {
    fn p_lesion(&mut self, x: &Tensor, _template: &Volume) -> Result<f64> {
        let logits = self.forward(x, Mode::Eval, false)?;
        Ok(1.0 - softmax_rows(&logits)?.data()[0] as f64)
    }

    fn p_lesion_grad(&mut self, x: &Tensor, _template: &Volume) -> Result<(f64, Tensor)> {
        let logits = self.forward(x, Mode::Eval, true)?;
        let q = softmax_rows(&logits)?;
        let qs = q.data();
        let p = 1.0 - qs[0] as f64;
        // p = 1 - q0: dp/dl_j = q0 * (q_j - [j == 0])
        let mut d = vec![0.0f32; 4];
        for (j, dj) in d.iter_mut().enumerate() {
            let ind = (j == 0) as u8 as f32;
            *dj = qs[0] * (qs[j] - ind);
        }
        let dlogits = Tensor::from_vec(&[1, 4], d)?;
        // backward() discards the input gradient; recompute it here
        let dx = self.backward_input(&dlogits)?;
        for (_, prm) in self.params_mut() {
            prm.zero_grad();
        }
        Ok((p, dx))
    }
}

/// |original - counterfactual| plus the top-percentile mask.
#[derive(Debug, Clone)]
pub struct AttributionMap {
    pub values: Vec<f32>,
    pub mask: Vec<bool>,
    pub slices: usize,
    pub height: usize,
    pub width: usize,
}

impl AttributionMap {
    /// Build from an absolute-difference field; the mask marks the top
    /// `ceil(fraction * N)` voxels, ties broken by voxel index.
    pub fn from_values(
        values: Vec<f32>,
        slices: usize,
        height: usize,
        width: usize,
        fraction: f64,
    ) -> Result<Self> {
        let n = slices * height * width;
        if values.len() != n {
            return Err(Error::Dimension(format!(
                "attribution has {} values for shape {slices}x{height}x{width}",
                values.len()
            )));
        }
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::Config(format!("mask fraction {fraction} outside [0, 1]")));
        }
        let keep = (fraction * n as f64).ceil() as usize;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            values[b]
                .partial_cmp(&values[a])
                .expect("attribution values are finite")
                .then(a.cmp(&b))
        });
        let mut mask = vec![false; n];
        for &i in order.iter().take(keep) {
            mask[i] = true;
        }
        Ok(AttributionMap {
            values,
            mask,
            slices,
            height,
            width,
        })
    }

    /// Index of the maximal voxel (smallest index on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0usize;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CounterfactualOptions {
    pub target_p: f64,
    pub max_steps: usize,
    pub lambda_init: f64,
    /// Mask fraction (0.01 = top percentile).
    pub mask_fraction: f64,
}

impl Default for CounterfactualOptions {
    fn default() -> Self {
        CounterfactualOptions {
            target_p: 0.01,
            max_steps: 50,
            lambda_init: 0.5,
            mask_fraction: 0.01,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Counterfactual {
    pub scan_id: String,
    /// p_lesion on the raw input.
    pub p_input: f64,
    /// p_lesion on decode(z0).
    pub p_initial: f64,
    pub p_final: f64,
    /// Candidate evaluations performed (accepted or rejected).
    pub steps: usize,
    pub converged: bool,
    pub volume: Volume,
    pub attribution: AttributionMap,
}

fn p_of_latent(
    clf: &mut dyn LesionClassifier,
    ae: &mut Autoencoder,
    z: &Tensor,
    template: &Volume,
) -> Result<(f64, Tensor)> {
    let recon = ae.decode(z, false)?;
    recon.check_finite("counterfactual decode")?;
    let p = clf.p_lesion(&recon, template)?;
    Ok((p, recon))
}

/// Gradient of p_lesion w.r.t. the latent at z.
fn latent_grad(
    clf: &mut dyn LesionClassifier,
    ae: &mut Autoencoder,
    z: &Tensor,
    template: &Volume,
) -> Result<Tensor> {
    let recon = ae.decode(z, true)?;
    let (_, dvol) = clf.p_lesion_grad(&recon, template)?;
    let dz = ae.decode_backward(&dvol)?;
    for (_, p) in ae.params_mut() {
        p.zero_grad();
    }
    Ok(dz)
}

/// Latent-shift counterfactual for one prepared scan. Requires the classifier
/// to call the input lesioned (p > 0.5). Accepted line-search steps never
/// increase p; the result carries `converged = false` instead of erroring
/// when `max_steps` candidates were not enough.
pub fn counterfactual(
    clf: &mut dyn LesionClassifier,
    ae: &mut Autoencoder,
    scan: &PreparedScan,
    opts: &CounterfactualOptions,
) -> Result<Counterfactual> {
    if opts.max_steps == 0
        || !(opts.target_p > 0.0)
        || !opts.lambda_init.is_finite()
        || opts.lambda_init <= 0.0
    {
        return Err(Error::Config(
            "counterfactual needs max_steps >= 1, target_p > 0, lambda_init > 0".into(),
        ));
    }
    let v = &scan.volume;
    let x = Tensor::from_vec(&[v.slices, 1, v.height, v.width], v.voxels.clone())?;
    let p_input = clf.p_lesion(&x, v)?;
    if p_input <= 0.5 {
        return Err(Error::Config(format!(
            "counterfactual precondition failed: p_lesion({}) = {p_input:.4} <= 0.5",
            scan.scan_id
        )));
    }

    let z0 = ae.encode(&x, false)?;
    let mut z = z0;
    let (p_initial, recon0) = p_of_latent(clf, ae, &z, v)?;
    let mut p_cur = p_initial;
    let mut best_recon = recon0.clone();
    let mut lambda = opts.lambda_init;
    let mut steps = 0usize;
    let mut grad: Option<Tensor> = None;

    while p_cur >= opts.target_p && steps < opts.max_steps {
        let dz = match &grad {
            Some(g) => g.clone(),
            None => {
                let dz = latent_grad(clf, ae, &z, v)?;
                let norm: f64 = dz.data().iter().map(|&g| (g as f64).powi(2)).sum::<f64>().sqrt();
                if norm < 1e-12 {
                    return Err(Error::Saturation(format!(
                        "latent gradient vanished for {} at p = {p_cur:.4}",
                        scan.scan_id
                    )));
                }
                grad = Some(dz.clone());
                dz
            }
        };
        let mut z_try = z.clone();
        for (zt, &g) in z_try.data_mut().iter_mut().zip(dz.data()) {
            *zt -= (lambda * g as f64) as f32;
        }
        steps += 1;
        match p_of_latent(clf, ae, &z_try, v) {
            Ok((p_try, recon_try)) if p_try < p_cur => {
                z = z_try;
                p_cur = p_try;
                best_recon = recon_try;
                grad = None; // recompute at the new point
                lambda *= 2.0;
            }
            _ => {
                lambda /= 2.0;
                if lambda < 1e-30 {
                    break;
                }
            }
        }
    }

    let converged = p_cur < opts.target_p;
    // zero traversal: fall back to the reconstruction residual
    let values: Vec<f32> = if p_initial < opts.target_p {
        x.data()
            .iter()
            .zip(recon0.data())
            .map(|(&a, &b)| (a - b).abs())
            .collect()
    } else {
        recon0
            .data()
            .iter()
            .zip(best_recon.data())
            .map(|(&a, &b)| (a - b).abs())
            .collect()
    };
    let attribution =
        AttributionMap::from_values(values, v.slices, v.height, v.width, opts.mask_fraction)?;
    Ok(Counterfactual {
        scan_id: scan.scan_id.clone(),
        p_input,
        p_initial,
        p_final: p_cur,
        steps,
        converged,
        volume: volume_from_tensor(&best_recon, v)?,
        attribution,
    })
}
